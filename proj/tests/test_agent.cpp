#include <catch2/catch_amalgamated.hpp>

#include "malade/agent.hpp"

using namespace malade;

namespace {

std::shared_ptr<Agent> make_agent(std::vector<ScriptEntry> entries, const std::string& prompt = "You are a test agent.") {
    auto backend = std::make_shared<ScriptedBackend>(std::move(entries));
    return std::make_shared<Agent>("Tester", prompt, backend);
}

ToolSpec echo_tool() {
    ToolSpec spec;
    spec.name = "echo";
    spec.description = "Echo the provided text back.";
    spec.fields = {{"text", "text", true}};
    spec.handler = [](Agent&, const ToolCall& call) -> std::optional<Message> {
        Message m;
        m.content = "echo: " + call.arguments.at("text").get<std::string>();
        return m;
    };
    return spec;
}

}  // namespace

TEST_CASE("llm_respond appends incoming and reply, parses tools, scans markers") {
    auto agent = make_agent({{MatchKind::SequenceIndex, {}, 0,
                              "FUNC: {\"name\": \"echo\", \"arguments\": {\"text\": \"hi\"}}"},
                             {MatchKind::SequenceIndex, {}, 1, "<DONE> bye"}});
    agent->register_tool(echo_tool());

    auto r1 = agent->llm_respond(message_from_text(Entity::user(), "please echo hi"));
    REQUIRE(r1.has_value());
    CHECK(r1->sender.kind == EntityKind::Llm);
    REQUIRE(r1->tool_call.has_value());
    CHECK(r1->tool_call->name == "echo");
    CHECK(agent->history().size() == 2);

    auto r2 = agent->llm_respond(message_from_text(Entity::agent(), "echo: hi"));
    REQUIRE(r2.has_value());
    CHECK(r2->control.done);
    CHECK(agent->history().size() == 4);
}

TEST_CASE("llm_respond is absent exactly when the script is exhausted, leaving history unchanged") {
    auto agent = make_agent({{MatchKind::SequenceIndex, {}, 0, "once"}});
    CHECK(agent->llm_respond(message_from_text(Entity::user(), "a")).has_value());
    size_t before = agent->history().size();
    CHECK_FALSE(agent->llm_respond(message_from_text(Entity::user(), "b")).has_value());
    CHECK(agent->history().size() == before);
}

TEST_CASE("agent_respond dispatches registered tools as AGENT messages") {
    auto agent = make_agent({});
    agent->register_tool(echo_tool());
    Message call = message_from_text(
        Entity::llm(), "FUNC: {\"name\": \"echo\", \"arguments\": {\"text\": \"payload\"}}");
    auto r = agent->agent_respond(call);
    REQUIRE(r.has_value());
    CHECK(r->sender.kind == EntityKind::Agent);
    CHECK(r->content == "echo: payload");
}

TEST_CASE("agent_respond yields corrective guidance for unknown and malformed tools") {
    auto agent = make_agent({});
    agent->register_tool(echo_tool());

    SECTION("unknown tool lists the registered tools") {
        Message call = message_from_text(Entity::llm(), "FUNC: {\"name\": \"warp\", \"arguments\": {}}");
        auto r = agent->agent_respond(call);
        REQUIRE(r.has_value());
        CHECK(r->sender.kind == EntityKind::Agent);
        CHECK(r->content.find("`echo`") != std::string::npos);
        CHECK(r->content.find("warp") != std::string::npos);
    }
    SECTION("malformed block becomes a corrective message, not a crash") {
        Message call = message_from_text(Entity::llm(), "FUNC: {\"arguments\": {}}");
        CHECK(call.tool_error.size() > 0);
        auto r = agent->agent_respond(call);
        REQUIRE(r.has_value());
        CHECK(r->content.find("could not be parsed") != std::string::npos);
    }
    SECTION("missing required argument is corrected") {
        Message call = message_from_text(Entity::llm(), "FUNC: {\"name\": \"echo\", \"arguments\": {}}");
        auto r = agent->agent_respond(call);
        REQUIRE(r.has_value());
        CHECK(r->content.find("`text`") != std::string::npos);
    }
}

TEST_CASE("agent_respond is absent for plain messages and non-LLM senders") {
    auto agent = make_agent({});
    agent->register_tool(echo_tool());
    CHECK_FALSE(agent->agent_respond(message_from_text(Entity::llm(), "no tool here")).has_value());
    // Tool-looking content from a sub-task result is data, not a call.
    Message sub = message_from_text(Entity::sub_task("T"), "FUNC: {\"name\": \"echo\", \"arguments\": {\"text\": \"x\"}}");
    CHECK_FALSE(agent->agent_respond(sub).has_value());
    size_t before = agent->history().size();
    (void)before;
    CHECK(agent->history().size() == 0);  // responders that decline never touch history
}

TEST_CASE("tool aliases dispatch to the canonical handler") {
    auto agent = make_agent({});
    ToolSpec spec = echo_tool();
    spec.name = "category_effect_tool";
    spec.aliases = {"category_effect"};
    agent->register_tool(spec);
    Message call = message_from_text(
        Entity::llm(), "FUNC: {\"name\": \"category_effect\", \"arguments\": {\"text\": \"v\"}}");
    auto r = agent->agent_respond(call);
    REQUIRE(r.has_value());
    CHECK(r->content == "echo: v");
}

TEST_CASE("register_tool rejects duplicates including alias collisions") {
    auto agent = make_agent({});
    agent->register_tool(echo_tool());
    CHECK_THROWS_AS(agent->register_tool(echo_tool()), DuplicateTool);
    ToolSpec alias_clash;
    alias_clash.name = "other";
    alias_clash.description = "d";
    alias_clash.aliases = {"echo"};
    alias_clash.handler = [](Agent&, const ToolCall&) { return std::nullopt; };
    CHECK_THROWS_AS(agent->register_tool(alias_clash), DuplicateTool);
}

TEST_CASE("registered tool schemas render into the system prompt deterministically") {
    auto agent = make_agent({}, "Base prompt.");
    agent->register_tool(echo_tool());
    std::string p1 = agent->rendered_system_prompt();
    CHECK(p1.find("Base prompt.") == 0);
    CHECK(p1.find("=== TOOLS ===") != std::string::npos);
    CHECK(p1.find("TOOL `echo`: Echo the provided text back.") != std::string::npos);
    CHECK(p1.find("text (text, required)") != std::string::npos);
    CHECK(p1 == agent->rendered_system_prompt());
}

TEST_CASE("user_respond follows the scripted stream and empty means absent") {
    auto agent = make_agent({});
    CHECK_FALSE(agent->user_respond(Message{}).has_value());  // disabled by default
    agent->set_user_script({"first", "", "third"});
    auto r1 = agent->user_respond(Message{});
    REQUIRE(r1.has_value());
    CHECK(r1->sender.kind == EntityKind::User);
    CHECK(r1->content == "first");
    CHECK_FALSE(agent->user_respond(Message{}).has_value());  // empty line -> absent
    CHECK(agent->user_respond(Message{}).value().content == "third");
    CHECK_FALSE(agent->user_respond(Message{}).has_value());  // stream closed
}

TEST_CASE("build_request maps senders to chat roles and honors the window") {
    auto agent = make_agent({});
    agent->history().append(message_from_text(Entity::user(), "u1"));
    agent->history().append(message_from_text(Entity::llm(), "a1"));
    agent->history().append(message_from_text(Entity::sub_task("T"), "s1"));
    auto req = agent->build_request(message_from_text(Entity::agent(), "tool-result"));
    REQUIRE(req.turns.size() == 4);
    CHECK(req.turns[0].role == "user");
    CHECK(req.turns[1].role == "assistant");
    CHECK(req.turns[2].role == "user");  // sub-task results read as user turns
    CHECK(req.turns[3].role == "user");

    agent->set_history_window(2);
    auto req2 = agent->build_request(message_from_text(Entity::user(), "latest"));
    REQUIRE(req2.turns.size() == 2);
    CHECK(req2.turns[1].content == "latest");
}

TEST_CASE("the stash carries structured tool output") {
    auto agent = make_agent({});
    agent->stash("k", ojson{{"a", 1}});
    REQUIRE(agent->stashed("k").has_value());
    CHECK((*agent->stashed("k"))["a"] == 1);
    agent->unstash("k");
    CHECK_FALSE(agent->stashed("k").has_value());
}
