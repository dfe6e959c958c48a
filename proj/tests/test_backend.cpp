#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <thread>

#include "malade/backend.hpp"
#include "malade/http_backend.hpp"
#include "malade/util.hpp"

using namespace malade;

namespace {

BackendRequest req_with(const std::string& system, std::vector<std::string> user_turns) {
    BackendRequest r;
    r.system_prompt = system;
    for (size_t i = 0; i < user_turns.size(); ++i)
        r.turns.push_back({i % 2 == 0 ? "user" : "assistant", user_turns[i]});
    return r;
}

}  // namespace

TEST_CASE("sequence entries replay densely from zero then exhaust") {
    ScriptedBackend b({{MatchKind::SequenceIndex, {}, 0, "first"},
                       {MatchKind::SequenceIndex, {}, 1, "second"}});
    auto r = req_with("sys", {"hello"});
    CHECK(b.complete(r).value() == "first");
    CHECK(b.complete(r).value() == "second");
    CHECK_FALSE(b.complete(r).has_value());  // exhausted: declines
}

TEST_CASE("exact matcher compares against the last turn only") {
    ScriptedBackend b({{MatchKind::Exact, {"ping"}, -1, "pong"}});
    CHECK(b.complete(req_with("sys", {"earlier", "ping"})).value() == "pong");
    ScriptedBackend b2({{MatchKind::Exact, {"ping"}, -1, "pong"}});
    CHECK_FALSE(b2.complete(req_with("sys", {"ping", "later"})).has_value());
}

TEST_CASE("substring matcher needs every pattern somewhere in the request") {
    ScriptedBackend b({{MatchKind::Substring, {"LISINOPRIL", "angioedema"}, -1, "match"}});
    CHECK(b.complete(req_with("You answer FDA questions.",
                              {"Does LISINOPRIL increase the risk of angioedema?"}))
              .value() == "match");
    ScriptedBackend b2({{MatchKind::Substring, {"LISINOPRIL", "angioedema"}, -1, "match"}});
    CHECK_FALSE(b2.complete(req_with("sys", {"Does WARFARIN increase the risk of bleeding?"}))
                    .has_value());
}

TEST_CASE("substring matcher sees the system prompt and prior turns") {
    ScriptedBackend b({{MatchKind::Substring, {"category ACE"}, -1, "from-system"}});
    CHECK(b.complete(req_with("You pick drugs in category ACE.", {"go"})).value() == "from-system");
}

TEST_CASE("entries are scanned in script order; first match wins") {
    ScriptedBackend b({{MatchKind::Substring, {"no feedback was provided"}, -1, "stage3"},
                       {MatchKind::Substring, {"ANSWER:"}, -1, "stage2"},
                       {MatchKind::Substring, {}, -1, "stage1"}});
    auto r1 = req_with("sys", {"Does X increase Y?"});
    CHECK(b.complete(r1).value() == "stage1");
    auto r2 = req_with("sys", {"Does X increase Y?", "asked", "ANSWER: yes"});
    CHECK(b.complete(r2).value() == "stage2");
    auto r3 = req_with("sys", {"Does X increase Y?", "asked", "ANSWER: yes", "final",
                               "Your reasoning is valid, no feedback was provided."});
    CHECK(b.complete(r3).value() == "stage3");
}

TEST_CASE("scripted replies are a pure function of script, ordinal, and text") {
    std::vector<ScriptEntry> entries{{MatchKind::SequenceIndex, {}, 0, "a"},
                                     {MatchKind::Substring, {"q2"}, -1, "b"}};
    ScriptedBackend one(entries);
    ScriptedBackend two(entries);
    auto r1 = req_with("s", {"q1"});
    auto r2 = req_with("s", {"q1", "a", "q2"});
    CHECK(one.complete(r1) == two.complete(r1));
    CHECK(one.complete(r2) == two.complete(r2));
}

TEST_CASE("script files load per-agent entry lists with trial variants") {
    auto dir = std::filesystem::temp_directory_path() / "malade_script_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "script.json";
    write_file(path, R"({
      "agents": {
        "Echo": [
          {"match": "sequence", "index": 0, "response": ["trial-a", "trial-b"]},
          {"match": "substring", "pattern": "again", "response": "more"}
        ]
      }
    })");
    auto script = ScriptFile::load(path);
    REQUIRE(script.has_agent("Echo"));

    auto t0 = script.backend_for("Echo", 0);
    auto t1 = script.backend_for("Echo", 1);
    auto t2 = script.backend_for("Echo", 2);
    auto r = req_with("s", {"hi"});
    CHECK(t0->complete(r).value() == "trial-a");
    CHECK(t1->complete(r).value() == "trial-b");
    CHECK(t2->complete(r).value() == "trial-a");  // wraps modulo variant count

    CHECK_THROWS_AS(script.entries_for("Missing"), ConfigError);
}

namespace {

// Serves canned chat completions and records what the client sent.
struct StubProvider {
    httplib::Server server;
    std::thread thread;
    std::atomic<int> hits{0};
    std::atomic<int> rate_limited_until{0};  // respond 429 to the first N hits
    json last_body;
    json reply;
    std::string url;

    StubProvider() {
        reply = {{"choices", json::array({{{"message",
                                            {{"role", "assistant"}, {"content", "stub reply"}}}}})}};
        server.Post("/v1/chat/completions",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        int n = ++hits;
                        last_body = json::parse(req.body);
                        if (n <= rate_limited_until) {
                            res.status = 429;
                            res.set_content("{\"error\": \"rate limited\"}", "application/json");
                            return;
                        }
                        res.set_content(reply.dump(), "application/json");
                    });
        int port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this]() { server.listen_after_bind(); });
        server.wait_until_ready();
        url = "http://127.0.0.1:" + std::to_string(port);
    }

    ~StubProvider() {
        server.stop();
        thread.join();
    }

    HttpBackend::Options options() const {
        HttpBackend::Options o;
        o.base_url = url;
        o.api_key = "sk-test-key";
        o.model = "test-model";
        o.retry = {2, 1};  // fast retries for tests
        return o;
    }
};

}  // namespace

TEST_CASE("http backend forwards the message sequence verbatim") {
    StubProvider stub;
    HttpBackend backend(stub.options());
    auto r = req_with("You are the drug agent.", {"first question", "first answer", "second question"});
    r.sampling.seed = 7;
    auto text = backend.complete(r);
    REQUIRE(text.has_value());
    CHECK(*text == "stub reply");
    CHECK(backend.id() == "http:test-model");

    const json& body = stub.last_body;
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == Catch::Approx(0.2));
    CHECK(body["max_tokens"] == 1024);
    CHECK(body["seed"] == 7);
    REQUIRE(body["messages"].size() == 4);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "You are the drug agent.");
    CHECK(body["messages"][1] == json({{"role", "user"}, {"content", "first question"}}));
    CHECK(body["messages"][2] == json({{"role", "assistant"}, {"content", "first answer"}}));
    CHECK(body["messages"][3] == json({{"role", "user"}, {"content", "second question"}}));
}

TEST_CASE("http backend renders native tool calls as canonical FUNC text") {
    StubProvider stub;
    json fn = {{"name", "final_answer"},
               {"arguments", "{\"question\": \"q\", \"steps\": [\"s1\"], \"answer\": \"a\"}"}};
    stub.reply = {{"choices",
                   json::array({{{"message",
                                  {{"role", "assistant"},
                                   {"content", nullptr},
                                   {"tool_calls",
                                    json::array({{{"id", "call_1"},
                                                  {"type", "function"},
                                                  {"function", fn}}})}}}}})}};
    HttpBackend backend(stub.options());
    auto text = backend.complete(req_with("sys", {"go"}));
    REQUIRE(text.has_value());
    auto parsed = parse_tool_call(*text);
    REQUIRE(parsed.call.has_value());
    CHECK(parsed.call->name == "final_answer");
    CHECK(parsed.call->arguments["answer"] == "a");
}

TEST_CASE("http backend retries rate limits and reports the final failure") {
    StubProvider stub;

    SECTION("recovers when the provider stops throttling") {
        stub.rate_limited_until = 2;
        HttpBackend backend(stub.options());
        auto text = backend.complete(req_with("sys", {"go"}));
        REQUIRE(text.has_value());
        CHECK(*text == "stub reply");
        CHECK(stub.hits == 3);  // two 429s, then success
    }

    SECTION("throws a retriable BackendError after the retry cap") {
        stub.rate_limited_until = 1000;
        HttpBackend backend(stub.options());
        try {
            backend.complete(req_with("sys", {"go"}));
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.status == 429);
            CHECK(e.retriable);
        }
        CHECK(stub.hits == 3);  // initial try + 2 retries
    }
}

TEST_CASE("http backend logs the wire traffic with the key redacted") {
    StubProvider stub;
    auto opts = stub.options();
    std::vector<std::string> lines;
    opts.logger = [&](const std::string& line) { lines.push_back(line); };
    HttpBackend backend(opts);
    backend.complete(req_with("sys", {"the secret is sk-test-key"}));
    REQUIRE(lines.size() == 2);
    for (const auto& line : lines) {
        CHECK(line.find("sk-test-key") == std::string::npos);
        CHECK(json::parse(line).contains("event"));
    }
    CHECK(lines[0].find("[redacted]") != std::string::npos);
}

TEST_CASE("script file validation rejects malformed entries") {
    auto dir = std::filesystem::temp_directory_path() / "malade_script_test";
    std::filesystem::create_directories(dir);
    auto bad1 = dir / "bad1.json";
    write_file(bad1, R"({"agents": {"A": [{"match": "sequence", "response": "x"}]}})");
    CHECK_THROWS_AS(ScriptFile::load(bad1).entries_for("A"), ConfigError);

    auto bad2 = dir / "bad2.json";
    write_file(bad2, R"({"agents": {"A": [{"match": "warp", "response": "x"}]}})");
    CHECK_THROWS_AS(ScriptFile::load(bad2).entries_for("A"), ConfigError);

    auto bad3 = dir / "bad3.json";
    write_file(bad3, R"({"nope": 1})");
    CHECK_THROWS_AS(ScriptFile::load(bad3), ConfigError);
}
