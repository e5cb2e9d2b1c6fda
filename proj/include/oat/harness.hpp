#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oat/belief.hpp"
#include "oat/checkpoint.hpp"
#include "oat/config.hpp"
#include "oat/env.hpp"
#include "oat/gpl.hpp"

// Experiment orchestration: training runs with frozen-policy evaluation and
// checkpointing, post-hoc evaluation, reconstruction diagnostics and the
// pairwise-utility probe.

namespace oat::harness {

// --- small statistics ------------------------------------------------------

double student_t_quantile(double p, int dof);  // inverse CDF, p in (0, 1)

struct EvalResult {
    double mean = 0.0;
    double ci_halfwidth = 0.0;  // 95% two-sided, t-distribution
    std::vector<double> returns;
};

EvalResult summarize_returns(const std::vector<double>& returns);

// --- metrics --------------------------------------------------------------

struct MetricsRow {
    long step = 0;
    uint64_t seed = 0;
    double mean_return = 0.0;
    double return_ci_halfwidth = 0.0;
    double loss_value = 0.0;
    double loss_nll = 0.0;
    double loss_inf = 0.0;
    double loss_sr = 0.0;
    double wall_clock = 0.0;
};

extern const char* kMetricsHeader;
std::string metrics_csv_line(const MetricsRow& row);
void append_metrics(const std::string& path, const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::string& path);

// --- policies ---------------------------------------------------------------

// Inference-only view over an agent's networks; one instance per episode.
class Policy {
public:
    virtual ~Policy() = default;
    virtual void begin(const env::EnvState& s) = 0;
    virtual int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) = 0;
    // Called after env::step so recurrent state can follow membership.
    virtual void after_step(const env::EnvState& next, const env::StepResult& res,
                            int learner_action) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

// Runs greedy evaluation episodes on fresh environments.
EvalResult evaluate_policy(const PolicyFactory& make_policy, const env::EnvConfig& env_cfg,
                           int episodes, uint64_t seed,
                           const std::string& episode_log_path = "");

// Teammate action stream tied to the episode seed; episode replays depend on
// this exact construction.
inline Rng teammate_rng_for(uint64_t episode_seed) {
    return Rng(episode_seed ^ 0x7454534d41455455ULL);
}

// --- training --------------------------------------------------------------

struct RunResult {
    std::filesystem::path run_dir;
    std::vector<MetricsRow> metrics;
    std::filesystem::path best_checkpoint;
};

// Dispatches on cfg.algorithm; writes metrics.csv, checkpoints and episode
// logs under the run directory. `resume_from` restores nets, optimizer state
// and counters from a checkpoint produced by the same configuration.
RunResult train_run(const RunConfig& cfg, const std::string& run_dir_override = "",
                    const std::string& resume_from = "");

std::filesystem::path default_run_dir(const RunConfig& cfg);

// --- checkpoint-driven entry points ----------------------------------------

// Loads a checkpoint and plays `episodes` greedy episodes under env_cfg.
EvalResult eval_checkpoint(const std::string& ckpt_path, const env::EnvConfig& env_cfg,
                           int episodes, uint64_t seed,
                           const std::string& episode_log_path = "");

// Builds a fresh policy directly from a checkpoint (dimension checks inside).
PolicyFactory policy_from_checkpoint(const std::string& ckpt_path,
                                     const env::EnvConfig& env_cfg);

RunConfig config_from_checkpoint(const std::string& ckpt_path);

// --- reconstruction diagnostics -------------------------------------------

// Per-step belief predictions, either from a backend or from a test stub.
struct BeliefPrediction {
    // teammate slot -> per-action probabilities (all existing teammates)
    std::vector<std::pair<int, std::vector<double>>> action_probs;
    std::vector<double> existence;  // per slot estimate in [0, 1]
    double state_logprob = 0.0;
};

struct ReconstructionStep {
    double action_logprob = 0.0;
    double state_logprob = 0.0;
    double existence_sqerr = 0.0;
};

struct ReconstructionReport {
    std::vector<ReconstructionStep> steps;
    double mean_action_logprob = 0.0;
    double mean_state_logprob = 0.0;
    double mean_existence_sqerr = 0.0;
};

// Metric kernels; the acceptance suite drives these with stub predictors.
double action_logprob_step(const BeliefPrediction& pred,
                           const std::vector<std::pair<int, int>>& teammate_actions);
double existence_sqerr_step(const std::vector<double>& predicted,
                            const std::vector<double>& truth);

// Replays a logged episode through a partially observed checkpoint and
// reports the three reconstruction metrics per step.
ReconstructionReport reconstruction_eval(const std::string& ckpt_path,
                                         const std::string& episode_log_path);

// Belief snapshot dump (debugging): one structured-text line per step.
void dump_belief_trace(const std::string& ckpt_path, const std::string& episode_log_path,
                       const std::string& out_path);

// --- pairwise-utility probe -------------------------------------------------

// Predicate over an agent slot: "any", "learner", "teammate" or "type=<n>".
struct SlotPredicate {
    enum class Kind { any, learner, teammate, type_tag } kind = Kind::any;
    int type_tag = -1;
    static SlotPredicate parse(const std::string& s);
    bool matches(int slot_id, int tag) const;
};

struct ProbeResult {
    bool empty = true;  // no matching pair anywhere in the dataset
    double value = 0.0;
    long pair_count = 0;
};

// Average over states and matching ordered pairs (j, k) of
// mean_{a^k} Q^{j,k}(a_probe, a^k). GPL-family checkpoints only.
ProbeResult pairwise_probe(const std::string& ckpt_path,
                           const std::vector<std::string>& episode_logs, int probe_action,
                           const SlotPredicate& pred_j, const SlotPredicate& pred_k);

// --- replay -----------------------------------------------------------------

env::ReplayReport replay_verify(const std::string& episode_log_path);

}  // namespace oat::harness
