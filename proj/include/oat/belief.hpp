#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "oat/gpl.hpp"
#include "oat/nn.hpp"

// Belief backends for partial observability: an AESMC particle filter over
// graph-structured particles, a recurrent autoencoder and a variational
// autoencoder, plus their loss bundles. All of them feed per-agent
// representation rows into the same coordination-graph machinery as the
// fully observable learner.

namespace oat::belief {

using ad::Array;
using ad::Tape;
using nn::Binding;

// --- draw trace ---------------------------------------------------------
// Records every random outcome of a belief update so a loss can be replayed
// as a deterministic, differentiable function of the parameters (continuous
// draws re-enter through reparameterization; discrete outcomes and frozen
// target values are replayed verbatim).
struct DrawTrace {
    enum class Mode { record, replay };
    Mode mode = Mode::record;
    std::vector<int> ints;
    std::vector<double> reals;
    size_t int_pos = 0, real_pos = 0;

    int take_int(const std::function<int()>& sample);
    double take_real(const std::function<double()>& sample);
    void rewind() { int_pos = real_pos = 0; }
};

int sample_categorical(Rng& rng, const std::vector<double>& probs);

// --- particles ------------------------------------------------------------

// One hypothesis of every latent variable plus a log importance weight.
// Rows for agents with exists = 0 are kept at zero. The type updater's
// recurrent cell rides along with the type vectors it produces.
struct Particle {
    std::vector<int> prev_actions;  // per slot; no-op for absent agents
    Array exists;                   // [N x 1], entries in {0, 1}
    Array state;                    // [N x m]
    Array types;                    // [N x n]
    Array type_h, type_c;           // [N x H]
    Array log_w;                    // [1 x 1]
};

using ParticleSet = std::vector<Particle>;

std::vector<double> normalized_weights(const ParticleSet& u);

struct ActionSampleResult {
    std::vector<int> actions;
    Array log_prop;  // [1 x 1]
    Array log_targ;
};

struct ExistStateResult {
    Array exists;     // sampled e_t, [N x 1]
    Array state_hat;  // sampled s-hat before existence gating, [N x m]
    Array log_prop;
    Array log_targ;
};

struct TypeResult {
    Array types, type_h, type_c;
};

// The distributions driving one particle update. The neural implementation
// lives below; tests plug in exact models (e.g. a discrete HMM).
class BeliefModels {
public:
    virtual ~BeliefModels() = default;
    virtual ActionSampleResult sample_prev_actions(Tape& t, const Binding& bind,
                                                   const Particle& p, const Array& obs_batch,
                                                   int learner_prev_action, Rng& rng,
                                                   DrawTrace* trace) const = 0;
    virtual ExistStateResult sample_exist_state(Tape& t, const Binding& bind, const Particle& p,
                                                const std::vector<int>& prev_actions,
                                                const Array& obs_batch, int learner_prev_action,
                                                Rng& rng, DrawTrace* trace) const = 0;
    virtual TypeResult update_types(Tape& t, const Binding& bind, const Particle& p,
                                    const Array& new_exists, const Array& new_state,
                                    const std::vector<int>& prev_actions, const Array& obs_batch,
                                    int learner_prev_action) const = 0;
    virtual Array observation_loglik(Tape& t, const Binding& bind, const Array& obs_batch,
                                     const Array& vis_col, const Array& state,
                                     const std::vector<int>& prev_actions) const = 0;
};

// One AESMC update: resample with replacement from softmax(w), then per
// particle sample previous actions, existence and state (s = e * s-hat),
// update types, and recompute the log weight as
//   w = log q(o | s, a) + log(q_state / p_state) + log(p_act_targ / p_act_prop).
ParticleSet pf_update(Tape& t, const Binding& bind, const BeliefModels& models,
                      const ParticleSet& prev, const Array& obs_batch, const Array& vis_col,
                      int learner_prev_action, Rng& rng, DrawTrace* trace);

// --- neural particle-filter model -------------------------------------------

struct PfConfig {
    int n_slots = 3;
    int n_actions = 5;
    int obs_width = 0;    // B_obs row width
    int state_width = 0;  // m; defaults to obs_width
    int type_width = 16;  // n
    int hidden = 32;
    int k_particles = 10;
    int noop_action = 0;
    bool tie_proposal_to_target = false;
    uint64_t init_seed = 0;
};

class PfModel : public BeliefModels {
public:
    PfConfig cfg;
    nn::ParamStore ps;

    nn::MessagePassing act_targ_mp, act_prop_mp;
    nn::Mlp act_targ_head, act_prop_head;
    nn::Mlp ex_targ_agg, ex_targ_head, ex_prop_agg, ex_prop_head;
    nn::Mlp st_targ_mu, st_targ_var, st_prop_mu, st_prop_var;
    nn::LstmCell type_lstm;
    nn::Mlp type_out;
    nn::Mlp obs_mu, obs_var;
    nn::Mlp sr_mu, sr_var;  // state reconstruction head (privileged target)
    nn::Mlp beta, delta;    // coordination-graph heads over [e|s|theta] rows

    std::vector<int> inf_scope, st_scope, ag_scope, val_scope;

    void init(const PfConfig& c);

    ActionSampleResult sample_prev_actions(Tape&, const Binding&, const Particle&, const Array&,
                                           int, Rng&, DrawTrace*) const override;
    ExistStateResult sample_exist_state(Tape&, const Binding&, const Particle&,
                                        const std::vector<int>&, const Array&, int, Rng&,
                                        DrawTrace*) const override;
    TypeResult update_types(Tape&, const Binding&, const Particle&, const Array&, const Array&,
                            const std::vector<int>&, const Array&, int) const override;
    Array observation_loglik(Tape&, const Binding&, const Array&, const Array&, const Array&,
                             const std::vector<int>&) const override;

    // Action distributions of the target net on particle contents; the agent
    // model under partial observability. [N x |A|].
    Array target_action_probs(Tape& t, const Binding& bind, const Particle& p) const;

    Particle initial_particle(Tape& t, const Binding& bind, const Array& obs_batch,
                              const Array& vis_col, Rng& rng, DrawTrace* trace) const;

    int rep_width() const { return 1 + cfg.state_width + cfg.type_width; }
};

// Marginalized action value weighted over the particle set. Each particle is
// evaluated on its rows with exists = 1.
std::vector<double> pf_action_value(Tape& t, const Binding& bind, const PfModel& m,
                                    const ParticleSet& u);

// --- autoencoder backend ----------------------------------------------------

struct AeConfig {
    int n_slots = 3;
    int n_actions = 5;
    int obs_width = 0;
    int embed_width = 32;  // rho row width
    int hidden = 32;
    uint64_t init_seed = 0;
};

struct AeModel {
    AeConfig cfg;
    nn::ParamStore ps;
    nn::LstmCell enc;       // input row = [obs row, onehot(a_prev)]
    nn::Mlp enc_out;        // cell -> rho row
    nn::Mlp dec_obs;        // rho row -> reconstructed obs row
    nn::MessagePassing dec_act_mp;
    nn::Mlp dec_act_head;   // embeddings -> action logits
    nn::Mlp sr;             // rho row -> reconstructed state row
    nn::Mlp beta, delta;

    std::vector<int> inf_scope, st_scope, ag_scope, val_scope;

    void init(const AeConfig& c);

    // Encoder step: returns (rho [N x embed], next lstm state).
    std::pair<Array, nn::LstmState> encode(Tape& t, const Binding& bind, const Array& obs_batch,
                                           int learner_prev_action,
                                           const nn::LstmState& st) const;
    Array action_probs(Tape& t, const Binding& bind, const Array& rho) const;
    std::vector<double> action_value(Tape& t, const Binding& bind, const Array& rho) const;
};

// --- variational autoencoder backend ----------------------------------------

struct VaeConfig {
    int n_slots = 3;
    int n_actions = 5;
    int obs_width = 0;
    int latent_width = 16;  // z row width
    int hidden = 32;
    int n_samples = 5;
    uint64_t init_seed = 0;
};

struct VaePosterior {
    nn::GaussianOut q;  // mu, var: [N x latent]
    nn::LstmState st;
};

struct VaeModel {
    VaeConfig cfg;
    nn::ParamStore ps;
    nn::LstmCell enc;
    nn::Mlp enc_mu, enc_var;
    nn::Mlp dec_obs_mu, dec_obs_var;
    nn::MessagePassing dec_act_mp;
    nn::Mlp dec_act_head;
    nn::Mlp sr_mu, sr_var;
    nn::Mlp beta, delta;

    std::vector<int> inf_scope, st_scope, ag_scope, val_scope;

    void init(const VaeConfig& c);

    VaePosterior encode(Tape& t, const Binding& bind, const Array& obs_batch,
                        int learner_prev_action, const nn::LstmState& st) const;
    // Reparameterized sample plus its log density under the posterior.
    std::pair<Array, Array> sample_z(Tape& t, const VaePosterior& post, Rng& rng,
                                     DrawTrace* trace) const;
    Array action_probs(Tape& t, const Binding& bind, const Array& z) const;
    // Density-weighted Monte Carlo value over n samples.
    std::vector<double> action_value(Tape& t, const Binding& bind, const VaePosterior& post,
                                     int n_samples, Rng& rng, DrawTrace* trace) const;
};

// --- loss bundles -----------------------------------------------------------

// One training step of a partially observed episode window.
struct PoRecord {
    Array obs_batch;   // B_obs(o_t)
    Array vis;         // [N x 1]
    Array state_batch; // privileged B_obs(s_t)
    int learner_prev_action = 0;  // a^i_{t-1}
    int learner_action = 0;       // a^i_t
    std::vector<int> visible_slots;    // visible teammate slot ids at t
    std::vector<int> visible_actions;  // their executed actions at t
    double reward = 0.0;
    bool done = false;
    Array next_obs_batch;
    Array next_vis;
};

struct PoLosses {
    Array inf;  // belief-inference loss (negative ELBO / reconstruction)
    Array sr;   // privileged state-reconstruction loss
    Array nll;  // visible-teammate action negative log likelihood
    Array rl;   // value loss
    Array total(Tape& t) const { return t.add(t.add(inf, sr), t.add(nll, rl)); }
};

PoLosses pf_losses(Tape& t, const Binding& bind, const PfModel& m,
                   const std::vector<PoRecord>& window, const ParticleSet& snapshot,
                   double gamma, Rng& rng, DrawTrace* trace);

PoLosses ae_losses(Tape& t, const Binding& bind, const AeModel& m,
                   const std::vector<PoRecord>& window, const nn::LstmState& snapshot,
                   double gamma, Rng& rng, DrawTrace* trace);

PoLosses vae_losses(Tape& t, const Binding& bind, const VaeModel& m,
                    const std::vector<PoRecord>& window, const nn::LstmState& snapshot,
                    double gamma, Rng& rng, DrawTrace* trace);

}  // namespace oat::belief
