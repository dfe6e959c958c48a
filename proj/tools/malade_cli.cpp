#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "malade/cli.hpp"

namespace {

void add_overrides(CLI::App* cmd, malade::cli::RunOverrides& ov) {
    cmd->add_option("--output", ov.output_dir, "Override the output directory");
    cmd->add_flag("--no-critics", ov.no_critics, "Disable the critic agents");
    cmd->add_flag("--no-rag", ov.no_rag,
                  "Disable label retrieval; the data handler answers from its own knowledge");
    cmd->add_flag("--refresh", ov.refresh, "Live mode: bypass the label cache");
    cmd->add_option("--max-steps", ov.max_steps, "Per-task orchestration step cap");
    cmd->add_option("--max-critic-rounds", ov.max_critic_rounds, "Agent-critic round cap");
    cmd->add_option("--parallelism", ov.parallelism, "Drug-review fan-out width");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drug-category adverse-event review pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    malade::cli::RunOverrides run_ov;
    CLI::App* run = app.add_subcommand("run", "Run the category x outcome grid once");
    run->add_option("config", config_path, "Run configuration file")->required();
    add_overrides(run, run_ov);

    malade::cli::EvalOptions eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "Score predictions against a ground-truth grid");
    eval->add_option("predictions", eval_opt.predictions, "Prediction file (JSON lines)")
        ->required();
    eval->add_option("truth", eval_opt.truth, "Ground-truth grid (delimited)")->required();
    eval->add_option("--mode", eval_opt.modes, "Evaluation mode: ade | effect (repeatable)");
    eval->add_option("--scoring", eval_opt.scorings,
                     "Scoring: confidence | probability | probability-modified (repeatable)");
    eval->add_option("--output", eval_opt.output_dir, "Directory for report files");

    std::string transcript_path;
    bool verify = false;
    CLI::App* replay = app.add_subcommand("replay", "Render a transcript as a dialog");
    replay->add_option("transcript", transcript_path, "Transcript file (JSON lines)")->required();
    replay->add_flag("--verify", verify, "Re-check the orchestration rules over the trace");

    malade::cli::TrialsOptions trials_opt;
    CLI::App* trials = app.add_subcommand("trials", "Repeat the grid and summarize score spread");
    trials->add_option("config", trials_opt.config, "Run configuration file")->required();
    trials->add_option("-n,--trials", trials_opt.n, "Number of repetitions")->required();
    trials->add_option("--fix-stage", trials_opt.fix_stage,
                       "Reuse a stage's outputs across trials (supported: representatives)");
    add_overrides(trials, trials_opt.overrides);

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return malade::cli::cmd_run(config_path, run_ov, std::cout, std::cerr);
    if (eval->parsed()) return malade::cli::cmd_eval(eval_opt, std::cout, std::cerr);
    if (replay->parsed())
        return malade::cli::cmd_replay(transcript_path, verify, std::cout, std::cerr);
    if (trials->parsed()) return malade::cli::cmd_trials(trials_opt, std::cout, std::cerr);
    return malade::cli::kExitUsage;
}
