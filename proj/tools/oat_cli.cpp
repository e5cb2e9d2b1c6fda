// Command-line front end: train / eval / reconstruct / probe / replay.
// Exit codes: 0 ok, 2 configuration error, 3 numeric fault, 4 replay divergence.

#include <CLI11.hpp>
#include <iostream>

#include "oat/harness.hpp"

using namespace oat;

namespace {

int run_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, const std::string& resume) {
    harness::RunConfig cfg = harness::load_run_config(config_path, overrides);
    harness::RunResult rr = harness::train_run(cfg, out_dir, resume);
    std::cout << "run_dir " << rr.run_dir.string() << "\n";
    if (!rr.metrics.empty()) {
        const auto& last = rr.metrics.back();
        std::cout << "final_step " << last.step << " mean_return " << last.mean_return
                  << " ci95 " << last.return_ci_halfwidth << "\n";
    }
    std::cout << "best_checkpoint " << rr.best_checkpoint.string() << "\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::vector<std::string>& overrides, int episodes,
             uint64_t seed, const std::string& log_path) {
    harness::RunConfig cfg = harness::config_from_checkpoint(ckpt);
    if (!overrides.empty()) {
        std::map<std::string, std::string> kv;
        std::istringstream is(cfg.resolved_text());
        std::string line;
        while (std::getline(is, line)) {
            size_t eq = line.find('=');
            if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        for (const auto& ov : overrides) {
            size_t eq = ov.find('=');
            if (eq == std::string::npos)
                throw harness::ConfigError("override '" + ov + "' is not key=value");
            kv[ov.substr(0, eq)] = ov.substr(eq + 1);
        }
        cfg = harness::config_from_map(kv);
    }
    harness::EvalResult ev = harness::eval_checkpoint(ckpt, cfg.env, episodes, seed, log_path);
    std::cout << "episodes " << ev.returns.size() << " mean_return " << ev.mean << " ci95 "
              << ev.ci_halfwidth << "\n";
    return 0;
}

int run_reconstruct(const std::string& ckpt, const std::string& log_path,
                    const std::string& dump_path, bool per_step) {
    if (!dump_path.empty()) harness::dump_belief_trace(ckpt, log_path, dump_path);
    harness::ReconstructionReport rep = harness::reconstruction_eval(ckpt, log_path);
    if (per_step)
        for (size_t i = 0; i < rep.steps.size(); ++i)
            std::cout << "step " << i << " action_logprob " << rep.steps[i].action_logprob
                      << " state_logprob " << rep.steps[i].state_logprob << " existence_sqerr "
                      << rep.steps[i].existence_sqerr << "\n";
    std::cout << "steps " << rep.steps.size() << " mean_action_logprob "
              << rep.mean_action_logprob << " mean_state_logprob " << rep.mean_state_logprob
              << " mean_existence_sqerr " << rep.mean_existence_sqerr << "\n";
    return 0;
}

int run_probe(const std::string& ckpt, const std::vector<std::string>& logs, int action,
              const std::string& pj, const std::string& pk) {
    harness::ProbeResult res = harness::pairwise_probe(
        ckpt, logs, action, harness::SlotPredicate::parse(pj), harness::SlotPredicate::parse(pk));
    if (res.empty) {
        std::cout << "probe empty (no matching pair)\n";
    } else {
        std::cout << "probe value " << res.value << " pairs " << res.pair_count << "\n";
    }
    return 0;
}

int run_replay(const std::string& log_path) {
    env::ReplayReport rep = harness::replay_verify(log_path);
    if (rep.ok) {
        std::cout << "replay ok\n";
        return 0;
    }
    std::cout << "replay diverged at step " << rep.first_divergence << ": " << rep.detail << "\n";
    return 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-team learners: training, evaluation and diagnostics"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume, ckpt, log_path, dump_path;
    std::vector<std::string> overrides, logs;
    int episodes = 100;
    uint64_t seed = 0;
    int probe_action = 0;
    std::string pred_j = "any", pred_k = "any";
    bool per_step = false;

    CLI::App* train = app.add_subcommand("train", "run a training experiment");
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--set", overrides, "config override key=value (repeatable)");
    train->add_option("--out", out_dir, "run directory (default: $OAT_RUN_ROOT/<name>)");
    train->add_option("--resume", resume, "checkpoint to resume from");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint greedily");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--set", overrides, "env override key=value, e.g. eval_openness=1");
    eval->add_option("--episodes", episodes, "episode count");
    eval->add_option("--seed", seed, "evaluation seed");
    eval->add_option("--log", log_path, "write evaluation episodes to this log");

    CLI::App* rec = app.add_subcommand("reconstruct", "belief reconstruction diagnostics");
    rec->add_option("--ckpt", ckpt, "partially observed checkpoint")->required();
    rec->add_option("--episode-log", log_path, "ground-truth episode log")->required();
    rec->add_option("--dump", dump_path, "belief snapshot dump path");
    rec->add_flag("--per-step", per_step, "print per-step metrics");

    CLI::App* probe = app.add_subcommand("probe", "pairwise-utility probe");
    probe->add_option("--ckpt", ckpt, "coordination-graph checkpoint")->required();
    probe->add_option("--log", logs, "episode log(s) providing states")->required();
    probe->add_option("--action", probe_action, "probed action of agent j");
    probe->add_option("--pred-j", pred_j, "predicate for j: any|learner|teammate|type=<n>");
    probe->add_option("--pred-k", pred_k, "predicate for k");

    CLI::App* replay = app.add_subcommand("replay", "verify an episode log bit-exactly");
    replay->add_option("--log", log_path, "episode log")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return run_train(config_path, overrides, out_dir, resume);
        if (eval->parsed()) return run_eval(ckpt, overrides, episodes, seed, log_path);
        if (rec->parsed()) return run_reconstruct(ckpt, log_path, dump_path, per_step);
        if (probe->parsed()) return run_probe(ckpt, logs, probe_action, pred_j, pred_k);
        if (replay->parsed()) return run_replay(log_path);
    } catch (const harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ad::NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
