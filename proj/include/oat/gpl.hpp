#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oat/checkpoint.hpp"
#include "oat/env.hpp"
#include "oat/nn.hpp"

// The full-observability learner: LSTM type inference over per-agent feature
// rows, a low-rank coordination-graph joint-action value, a message-passing
// agent model, and the marginalized per-action value that combines them.
// The same coordination-graph machinery is reused by the belief backends,
// which swap the LSTM type vectors for their own per-agent representations.

namespace oat::gpl {

using ad::Array;
using ad::Tape;
using nn::Binding;

// --- preprocessing --------------------------------------------------------

// Full-observability input batch: row j = concat(agent-j features, global u).
Array build_batch_fullobs(const env::Observation& obs);

// Partial-observability batch over all slots:
// row j = concat(onehot(id), features, visible flag, global u).
Array build_batch_po(const env::Observation& obs, int n_slots);

// [n_slots x 1] 0/1 visibility column for a slot observation.
Array visibility_column(const env::Observation& obs);

std::vector<int> observed_ids(const env::Observation& obs);

// --- recurrent type memory --------------------------------------------------

// Per-agent recurrent state keyed by ascending agent id. Arrays may be
// detached values (acting) or tape nodes (loss replay).
struct TypeMemory {
    std::vector<int> ids;
    Array h;  // [n x hidden], theta
    Array c;

    static TypeMemory zeros(const std::vector<int>& ids, int hidden);
    int rows() const { return h.rows(); }
    int row_of(int id) const;
};

// Drops rows of leavers and inserts zero rows for joiners, keeping ids
// ascending; all surviving rows are passed through unchanged.
TypeMemory postprocess_membership(Tape& t, const TypeMemory& mem, const std::vector<int>& joins,
                                  const std::vector<int>& leaves);

// --- model ------------------------------------------------------------------

struct GplConfig {
    int n_actions = 5;
    int feat_width = 0;   // input batch row width
    int type_width = 64;
    int k_rank = 4;       // low-rank factor count, must stay < n_actions
    int hidden = 64;      // MLP hidden width / message width
    uint64_t init_seed = 0;
};

struct GplModel {
    GplConfig cfg;
    nn::ParamStore ps;
    nn::LstmCell lstm_value;  // type stack feeding the joint-action value
    nn::LstmCell lstm_agent;  // type stack feeding the agent model
    nn::Mlp beta;             // [2*type_width] -> |A|
    nn::Mlp delta;            // [2*type_width] -> K*|A|
    nn::MessagePassing zeta;
    nn::Mlp eta;              // embedding -> |A|

    std::vector<int> value_scope;  // param indices trained by the value loss
    std::vector<int> agent_scope;  // param indices trained by the NLL loss

    void init(const GplConfig& c);
};

// Coordination-graph heads over arbitrary per-agent representation rows.
struct CgHeads {
    const nn::Mlp* beta = nullptr;
    const nn::Mlp* delta = nullptr;
    int k_rank = 0;
    int n_actions = 0;
};

// Singular utility for agent row j: MLP_beta(rep_j, rep_i) -> [1 x |A|].
Array singular_utility(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps, int j,
                       int learner_row);

// Low-rank factor for agent row j: reshape(MLP_delta(rep_j, rep_i)) -> [K x |A|].
Array pairwise_factor(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps, int j,
                      int learner_row);

// Q^{j,k} = F_j^T F_k -> [|A| x |A|].
Array pairwise_utility(Tape& t, const Array& factor_j, const Array& factor_k);

// Per-agent next-action distributions: message passing over the rows plus a
// softmax head. Returns [n x |A|]; consumers read the teammate rows.
Array agent_model_probs(Tape& t, const Binding& bind, const nn::MessagePassing& zeta,
                        const nn::Mlp& eta, const Array& reps);

// Per-row action constraint for the expectation below: exactly one of
// {pinned action, distribution row} per non-learner row.
struct TeamActions {
    std::vector<int> pinned;                  // action per row, -1 when free
    std::vector<std::optional<Array>> dist;   // [1 x |A|] rows
    static TeamActions all_pinned(const std::vector<int>& actions);
};

// Joint CG value with every agent's action pinned (learner included):
// sum of singular terms plus ordered-pair pairwise terms.
Array joint_action_value(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps,
                         int learner_row, const std::vector<int>& actions);

// Expected CG value as a function of the learner's action: every other row is
// either pinned to an observed action or averaged under its distribution.
// Matches the brute-force expectation over the ordered-pair CG exactly.
Array cg_value_over_learner_actions(Tape& t, const Binding& bind, const CgHeads& cg,
                                    const Array& reps, int learner_row, const TeamActions& team);

// Marginalized action value: every teammate row carries a distribution.
Array marginalized_action_value(Tape& t, const Binding& bind, const CgHeads& cg,
                                const Array& reps, int learner_row, const Array& probs);

// --- action selection ---------------------------------------------------

struct ActionSelect {
    enum class Mode { eps_greedy, boltzmann } mode = Mode::eps_greedy;
    double eps = 0.0;
    double tau = 1.0;
};

int argmax_lowest(const std::vector<double>& q);
std::vector<double> boltzmann_probs(const std::vector<double>& q, double tau);
int select_action(const std::vector<double>& q, const ActionSelect& sel, Rng& rng);

// --- stepwise acting ------------------------------------------------------

struct QvResult {
    std::vector<double> qbar;  // per learner action
    TypeMemory mem_value;
    TypeMemory mem_agent;
};

// One full QV pass: LSTM steps on both stacks, agent model, marginalized Q.
QvResult qv_step(Tape& t, const Binding& bind, const GplModel& m, const Array& batch,
                 const TypeMemory& mem_value, const TypeMemory& mem_agent);

// --- training ---------------------------------------------------------------

struct TransitionRecord {
    std::vector<int> ids;          // present agents at s_t, ascending
    Array batch;                   // B_t
    std::vector<int> actions;     // per ids row (joint action)
    double reward = 0.0;
    bool done = false;
    std::vector<int> joins, leaves;  // membership events after this step
    std::vector<int> next_ids;       // present agents at s_{t+1}
    double y = 0.0;                  // frozen TD target (computed at act time)
};

struct LossPair {
    Array value;  // L_value
    Array nll;    // L_nll
};

// Replays the window on `t` with full backprop-through-time inside it.
// `mem0_*` snapshot the memories before the first record.
LossPair compute_losses(Tape& t, const Binding& bind, const GplModel& m,
                        const std::vector<TransitionRecord>& window,
                        const TypeMemory& mem0_value, const TypeMemory& mem0_agent);

struct AdamOpt {
    double lr = 2.5e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double clip_norm = 10.0;
    int t = 0;
    std::vector<Array> m, v;

    void init_like(const nn::ParamStore& ps);
    // Applies accumulated grads to the listed parameter indices only.
    void step(nn::ParamStore& ps, const std::vector<Array>& grads,
              const std::vector<int>& indices);
};

// Accumulates `grads.at(bound node)` into `acc` for the listed indices.
void accumulate_scope(const ad::Gradients& grads, const Binding& bind,
                      const std::vector<int>& indices, std::vector<Array>& acc);

std::vector<Array> zero_grads_like(const nn::ParamStore& ps);
double grad_global_norm(const std::vector<Array>& grads, const std::vector<int>& indices);

// --- ablation learners ----------------------------------------------------

struct QlConfig {
    int n_actions = 5;
    int feat_width = 0;
    int type_width = 64;
    int hidden = 64;
    int teammate_slots = 2;  // fixed slot count for the padded input
    bool with_agent_model = false;  // QL-AM
    uint64_t init_seed = 0;
};

struct QlModel {
    QlConfig cfg;
    nn::ParamStore ps;
    nn::LstmCell lstm_value;
    nn::LstmCell lstm_agent;  // QL-AM only
    nn::Mlp value;            // padded input -> |A|
    nn::MessagePassing zeta;  // QL-AM only
    nn::Mlp eta;

    std::vector<int> value_scope;
    std::vector<int> agent_scope;

    void init(const QlConfig& c);
    int input_width() const;
};

// Placeholder-padded action value: zeros stand in for absent agents.
Array ql_action_value(Tape& t, const Binding& bind, const QlModel& m, const TypeMemory& mem_value,
                      const Array* agent_probs, const std::vector<int>& ids);

// Window losses for the ablations; the learner's executed action indexes the
// padded value head. QL-AM adds the agent-model NLL.
LossPair ql_compute_losses(Tape& t, const Binding& bind, const QlModel& m,
                           const std::vector<TransitionRecord>& window,
                           const TypeMemory& mem0_value, const TypeMemory& mem0_agent);

}  // namespace oat::gpl
