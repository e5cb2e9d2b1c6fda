#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "oat/rng.hpp"

// Open-team grid worlds: a pack-hunting pursuit task, level-based foraging
// and penalized cooperative navigation, all sharing one openness process
// (lifetimes, waiting periods, a randomized reentry queue). The learner is
// always agent 0 and never leaves.

namespace oat::env {

enum class EnvKind { wolfpack, lbf, pcn };

std::string env_kind_name(EnvKind k);
EnvKind env_kind_from(const std::string& s);

// Action encoding shared by every environment. `load` is only legal in lbf.
enum Action : int { kStay = 0, kNorth = 1, kEast = 2, kSouth = 3, kWest = 4, kLoad = 5 };

int num_actions(EnvKind k);

struct OpennessConfig {
    int max_agents_train = 3;  // cap on simultaneously present agents, learner included
    int max_agents_eval = 5;
    int life_lo = 25, life_hi = 35;
    int wait_lo = 15, wait_hi = 25;
};

struct EnvConfig {
    EnvKind kind = EnvKind::wolfpack;
    int rows = 10, cols = 10;
    OpennessConfig open;
    bool partial_obs = false;
    bool eval_openness = false;  // selects max_agents_eval as the active cap
    int episode_len = 200;
    int num_objects = 3;     // lbf
    int mask_manhattan = 3;  // wolfpack observation radius (inclusive)
    int mask_box = 2;        // lbf/pcn: half-width of the (2k+1)^2 box

    int slot_count() const { return std::max(open.max_agents_train, open.max_agents_eval); }
    int active_cap() const { return eval_openness ? open.max_agents_eval : open.max_agents_train; }
};

// Per-environment teammate policy tags. Tag -1 marks the learner.
enum WolfType : int { kChaser = 0, kFlanker = 1, kWolfRandom = 2 };
enum LbfType : int { kNearestLoader = 0, kCoopWaiter = 1, kLbfRandom = 2 };
enum PcnType : int { kSeekerFirst = 0, kSeekerSecond = 1, kPcnRandom = 2 };

int num_teammate_types(EnvKind k);

struct AgentSlot {
    int id = 0;
    int type_tag = -1;
    int row = -1, col = -1;
    int level = 1;  // lbf only
    int lifetime = 0;
    int wait = 0;
    bool present = false;
    bool in_queue = false;
};

struct GridObject {
    int row = 0, col = 0;
    int level = 1;
};

struct EnvState {
    EnvConfig cfg;
    std::vector<AgentSlot> slots;
    std::deque<int> reentry;  // agent ids past their wait, FIFO after shuffle
    int step_count = 0;
    Rng rng;

    int prey_row = -1, prey_col = -1;        // wolfpack
    std::vector<GridObject> objects;         // lbf
    int dest_row[2] = {-1, -1};              // pcn
    int dest_col[2] = {-1, -1};
    bool learner_on_dest[2] = {false, false};  // pcn arrival tracking

    int present_count() const;
    bool cell_free(int r, int c) const;  // no agent, prey or object on it
    const AgentSlot& learner() const { return slots[0]; }
};

// (agent id, action) pairs over exactly the present agents, ascending id.
using JointAction = std::vector<std::pair<int, int>>;

struct ObsAgent {
    int id = 0;
    bool visible = false;
    std::vector<double> feat;  // zeroed when invisible
};

struct Observation {
    std::vector<ObsAgent> agents;
    std::vector<double> global_u;
};

struct OpennessEvents {
    std::vector<int> joins;
    std::vector<int> leaves;
};

struct StepResult {
    double reward = 0.0;
    bool done = false;
    OpennessEvents events;
};

int agent_feat_width(EnvKind k);
int global_feat_width(const EnvConfig& cfg);

EnvState reset(const EnvConfig& cfg, uint64_t seed);
StepResult step(EnvState& s, const JointAction& action);
OpennessEvents openness_tick(EnvState& s);

// Full-observability view: one record per present agent, all visible.
Observation observe(const EnvState& s);
// Partial-observability view: one record per slot; visibility per mask rule.
Observation observe_po(const EnvState& s);
// Privileged state view used by training losses: one record per slot,
// visible iff present.
Observation state_view(const EnvState& s);
// Mode-dependent view (observe_po under cfg.partial_obs, observe otherwise).
Observation current_view(const EnvState& s);

int teammate_act(const EnvState& s, int agent_id, Rng& rng);
JointAction teammate_actions(const EnvState& s, int learner_action, Rng& rng);

uint64_t observation_hash(const Observation& o);

// --- episode logs -------------------------------------------------------
// Line-delimited records; replayable bit-exactly from the header seed.

struct EpisodeStepRecord {
    int step = 0;
    std::vector<std::pair<int, int>> present;  // (id, type_tag)
    JointAction action;
    uint64_t reward_bits = 0;
    bool done = false;
    std::vector<int> joins, leaves;
    uint64_t obs_hash = 0;
};

struct EpisodeLog {
    EnvConfig cfg;
    uint64_t seed = 0;
    std::vector<EpisodeStepRecord> steps;
};

std::string episode_header_line(const EnvConfig& cfg, uint64_t seed);
std::string episode_step_line(const EpisodeStepRecord& rec);
EpisodeLog parse_episode_log(const std::string& path);
// A log file may hold several episodes back to back, each with a header line.
std::vector<EpisodeLog> parse_episode_logs(const std::string& path);
void write_episode_log(const EpisodeLog& log, const std::string& path);
void append_episode_log(const EpisodeLog& log, const std::string& path);

// `present` must list (id, type_tag) for the agents that acted, captured
// before the step advanced openness.
EpisodeStepRecord make_step_record(const std::vector<std::pair<int, int>>& present,
                                   int step_index, const JointAction& action,
                                   const StepResult& result, const Observation& next_obs);

std::vector<std::pair<int, int>> present_agents(const EnvState& s);

struct ReplayReport {
    bool ok = true;
    int first_divergence = -1;
    std::string detail;
};

// Re-simulates the logged episode and checks rewards/observations bit-exactly.
ReplayReport verify_episode(const EpisodeLog& log);

}  // namespace oat::env
