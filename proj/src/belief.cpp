#include "oat/belief.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oat::belief {

int DrawTrace::take_int(const std::function<int()>& sample) {
    if (mode == Mode::replay) {
        if (int_pos >= ints.size()) throw std::runtime_error("DrawTrace: int replay exhausted");
        return ints[int_pos++];
    }
    int v = sample();
    ints.push_back(v);
    ++int_pos;
    return v;
}

double DrawTrace::take_real(const std::function<double()>& sample) {
    if (mode == Mode::replay) {
        if (real_pos >= reals.size()) throw std::runtime_error("DrawTrace: real replay exhausted");
        return reals[real_pos++];
    }
    double v = sample();
    reals.push_back(v);
    ++real_pos;
    return v;
}

int sample_categorical(Rng& rng, const std::vector<double>& probs) {
    double u = rng.uniform();
    double acc = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

std::vector<double> normalized_weights(const ParticleSet& u) {
    std::vector<double> w(u.size());
    double mx = -HUGE_VAL;
    for (size_t i = 0; i < u.size(); ++i) {
        w[i] = u[i].log_w.data[0];
        mx = std::max(mx, w[i]);
    }
    double z = 0;
    for (auto& v : w) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : w) v /= z;
    return w;
}

namespace {

Array detached(const Array& a) {
    Array out = a;
    out.node = -1;
    return out;
}

Particle detach_particle(const Particle& p) {
    Particle out = p;
    out.exists = detached(p.exists);
    out.state = detached(p.state);
    out.types = detached(p.types);
    out.type_h = detached(p.type_h);
    out.type_c = detached(p.type_c);
    out.log_w = detached(p.log_w);
    return out;
}

Array onehot_const(int idx, int width) {
    Array a(1, width);
    if (idx >= 0 && idx < width) a.at(0, idx) = 1.0;
    return a;
}

Array actions_onehot(const std::vector<int>& acts, int width) {
    Array a(static_cast<int>(acts.size()), width);
    for (size_t j = 0; j < acts.size(); ++j)
        if (acts[j] >= 0 && acts[j] < width) a.at(static_cast<int>(j), acts[j]) = 1.0;
    return a;
}

Array tile_row_const(const Array& row, int n) {
    Array a(n, row.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < row.cols(); ++j) a.at(i, j) = row.at(0, j);
    return a;
}

Array expand_col(Tape& t, const Array& col, int width) {
    return t.matmul(col, Array::full(1, width, 1.0));
}

// sigma = exp(0.5 * log var); avoids a dedicated sqrt primitive.
Array sigma_of(Tape& t, const Array& var) { return t.exp_fn(t.scale(t.log_fn(var), 0.5)); }

std::string particle_dump(const Particle& p) {
    std::ostringstream os;
    os << "particle{e=[";
    for (int j = 0; j < p.exists.rows(); ++j) os << (j ? "," : "") << p.exists.at(j, 0);
    os << "], log_w=" << p.log_w.data[0] << "}";
    return os.str();
}

}  // namespace

ParticleSet pf_update(Tape& t, const Binding& bind, const BeliefModels& models,
                      const ParticleSet& prev, const Array& obs_batch, const Array& vis_col,
                      int learner_prev_action, Rng& rng, DrawTrace* trace) {
    if (prev.empty()) throw std::runtime_error("pf_update: empty particle set");
    const std::vector<double> w = normalized_weights(prev);
    const int K = static_cast<int>(prev.size());
    ParticleSet out;
    out.reserve(K);
    for (int k = 0; k < K; ++k) {
        auto draw_idx = [&] { return sample_categorical(rng, w); };
        int idx = trace ? trace->take_int(draw_idx) : draw_idx();
        const Particle& src = prev[idx];

        ActionSampleResult act =
            models.sample_prev_actions(t, bind, src, obs_batch, learner_prev_action, rng, trace);
        ExistStateResult es = models.sample_exist_state(t, bind, src, act.actions, obs_batch,
                                                        learner_prev_action, rng, trace);
        Array state = t.mul(es.state_hat, expand_col(t, es.exists, es.state_hat.cols()));
        TypeResult ty = models.update_types(t, bind, src, es.exists, state, act.actions,
                                            obs_batch, learner_prev_action);
        Particle p;
        p.prev_actions = act.actions;
        p.exists = es.exists;
        p.state = state;
        p.types = ty.types;
        p.type_h = ty.type_h;
        p.type_c = ty.type_c;
        try {
            Array obs_ll =
                models.observation_loglik(t, bind, obs_batch, vis_col, state, act.actions);
            p.log_w = t.add(obs_ll, t.add(t.sub(es.log_targ, es.log_prop),
                                          t.sub(act.log_targ, act.log_prop)));
        } catch (const ad::NumericFault& e) {
            throw ad::NumericFault(std::string(e.what()) + " while updating " +
                                   particle_dump(src));
        }
        out.push_back(std::move(p));
    }
    return out;
}

// --- neural particle-filter model ---------------------------------------------

void PfModel::init(const PfConfig& c) {
    cfg = c;
    if (cfg.state_width == 0) cfg.state_width = cfg.obs_width;
    Rng rng(c.init_seed);
    const int m = cfg.state_width, n = cfg.type_width, A = cfg.n_actions, ow = cfg.obs_width;
    const int act_t_in = 1 + m + n;
    const int act_p_in = act_t_in + ow + A;
    const int es_t_in = 1 + m + A;
    const int es_p_in = es_t_in + ow + A;
    const int H = cfg.hidden;

    nn::MessagePassingSpec mp_t{act_t_in, H, H, 1, nn::Act::relu};
    nn::MessagePassingSpec mp_p{act_p_in, H, H, 1, nn::Act::relu};
    act_targ_mp.init(ps, "act_targ.mp", mp_t, rng);
    act_targ_head.init(ps, "act_targ.head", {{H, A}, nn::Act::relu, nn::Act::none}, rng);
    act_prop_mp.init(ps, "act_prop.mp", mp_p, rng);
    act_prop_head.init(ps, "act_prop.head", {{H, A}, nn::Act::relu, nn::Act::none}, rng);

    ex_targ_agg.init(ps, "ex_targ.agg", {{1 + es_t_in, H}, nn::Act::relu, nn::Act::relu}, rng);
    ex_targ_head.init(ps, "ex_targ.head", {{es_t_in + H, H, 1}, nn::Act::relu, nn::Act::none},
                      rng);
    ex_prop_agg.init(ps, "ex_prop.agg", {{1 + es_p_in, H}, nn::Act::relu, nn::Act::relu}, rng);
    ex_prop_head.init(ps, "ex_prop.head", {{es_p_in + H, H, 1}, nn::Act::relu, nn::Act::none},
                      rng);

    st_targ_mu.init(ps, "st_targ.mu", {{es_t_in, H, m}, nn::Act::relu, nn::Act::none}, rng);
    st_targ_var.init(ps, "st_targ.var", {{es_t_in, H, m}, nn::Act::relu, nn::Act::none}, rng);
    st_prop_mu.init(ps, "st_prop.mu", {{es_p_in, H, m}, nn::Act::relu, nn::Act::none}, rng);
    st_prop_var.init(ps, "st_prop.var", {{es_p_in, H, m}, nn::Act::relu, nn::Act::none}, rng);

    const int type_in = m + n + A + A + ow;
    type_lstm.init(ps, "type.lstm", type_in, H, rng);
    type_out.init(ps, "type.out", {{H, n}, nn::Act::relu, nn::Act::none}, rng);

    obs_mu.init(ps, "obs.mu", {{m + A, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    obs_var.init(ps, "obs.var", {{m + A, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    sr_mu.init(ps, "sr.mu", {{m + A, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    sr_var.init(ps, "sr.var", {{m + A, H, ow}, nn::Act::relu, nn::Act::none}, rng);

    const int r = rep_width();
    beta.init(ps, "beta", {{2 * r, H, A}, nn::Act::relu, nn::Act::none}, rng);
    delta.init(ps, "delta",
               {{2 * r, H, std::min(A - 1, 4) * A}, nn::Act::relu, nn::Act::none}, rng);

    auto push_mlp = [](std::vector<int>& v, const nn::Mlp& mm) {
        v.insert(v.end(), mm.w.begin(), mm.w.end());
        v.insert(v.end(), mm.b.begin(), mm.b.end());
    };
    auto push_mp = [&](std::vector<int>& v, const nn::MessagePassing& mp) {
        push_mlp(v, mp.edge);
        push_mlp(v, mp.node);
    };
    push_mp(inf_scope, act_targ_mp);
    push_mlp(inf_scope, act_targ_head);
    push_mp(inf_scope, act_prop_mp);
    push_mlp(inf_scope, act_prop_head);
    for (auto* mm : {&ex_targ_agg, &ex_targ_head, &ex_prop_agg, &ex_prop_head, &st_targ_mu,
                     &st_targ_var, &st_prop_mu, &st_prop_var, &type_out, &obs_mu, &obs_var})
        push_mlp(inf_scope, *mm);
    inf_scope.push_back(type_lstm.wx);
    inf_scope.push_back(type_lstm.wh);
    inf_scope.push_back(type_lstm.bias);
    push_mlp(st_scope, sr_mu);
    push_mlp(st_scope, sr_var);
    push_mp(ag_scope, act_targ_mp);
    push_mlp(ag_scope, act_targ_head);
    push_mlp(val_scope, beta);
    push_mlp(val_scope, delta);
}

namespace {

// Per-slot conditioning rows for the action nets: [e_{t-1}, s_{t-1}, theta_{t-1}]
// plus the observation batch and the learner's action for the proposal.
Array din_actions(Tape& t, const Particle& p, bool with_obs, const Array& obs_batch,
                  int learner_prev_action, int n_actions) {
    std::vector<Array> parts{p.exists, p.state, p.types};
    if (with_obs) {
        parts.push_back(obs_batch);
        parts.push_back(tile_row_const(onehot_const(learner_prev_action, n_actions),
                                       p.exists.rows()));
    }
    return t.concat_cols(parts);
}

// Conditioning rows for the existence/state nets: [e_{t-1}, s_{t-1}, a_{t-1}].
Array din_exist_state(Tape& t, const Particle& p, const std::vector<int>& prev_actions,
                      bool with_obs, const Array& obs_batch, int learner_prev_action,
                      int n_actions) {
    std::vector<Array> parts{p.exists, p.state, actions_onehot(prev_actions, n_actions)};
    if (with_obs) {
        parts.push_back(obs_batch);
        parts.push_back(tile_row_const(onehot_const(learner_prev_action, n_actions),
                                       p.exists.rows()));
    }
    return t.concat_cols(parts);
}

Array action_log_prob(Tape& t, const Array& probs, const std::vector<int>& actions,
                      const std::vector<int>& slots) {
    std::optional<Array> total;
    for (int j : slots) {
        Array pj = t.log_fn(t.slice(probs, j, j + 1, actions[j], actions[j] + 1));
        total = total ? t.add(*total, pj) : pj;
    }
    return total ? *total : Array::scalar_of(0.0);
}

}  // namespace

ActionSampleResult PfModel::sample_prev_actions(Tape& t, const Binding& bind, const Particle& p,
                                                const Array& obs_batch, int learner_prev_action,
                                                Rng& rng, DrawTrace* trace) const {
    const int N = cfg.n_slots, A = cfg.n_actions;
    Array din_t = din_actions(t, p, false, obs_batch, learner_prev_action, A);
    Array targ_probs = t.softmax(act_targ_head.apply(t, bind, act_targ_mp.apply(t, bind, din_t)));
    Array prop_probs = targ_probs;
    if (!cfg.tie_proposal_to_target) {
        Array din_p = din_actions(t, p, true, obs_batch, learner_prev_action, A);
        prop_probs =
            t.softmax(act_prop_head.apply(t, bind, act_prop_mp.apply(t, bind, din_p)));
    }

    ActionSampleResult res;
    res.actions.resize(N, cfg.noop_action);
    std::vector<int> sampled_slots;
    for (int j = 0; j < N; ++j) {
        if (j == 0) {
            res.actions[j] = learner_prev_action;  // the learner's action is known
            continue;
        }
        if (p.exists.at(j, 0) == 0.0) {
            res.actions[j] = cfg.noop_action;  // absent agents take no action
            continue;
        }
        std::vector<double> row(A);
        for (int a = 0; a < A; ++a) row[a] = prop_probs.at(j, a);
        auto draw = [&] { return sample_categorical(rng, row); };
        res.actions[j] = trace ? trace->take_int(draw) : draw();
        sampled_slots.push_back(j);
    }
    res.log_prop = action_log_prob(t, prop_probs, res.actions, sampled_slots);
    res.log_targ = action_log_prob(t, targ_probs, res.actions, sampled_slots);
    return res;
}

ExistStateResult PfModel::sample_exist_state(Tape& t, const Binding& bind, const Particle& p,
                                             const std::vector<int>& prev_actions,
                                             const Array& obs_batch, int learner_prev_action,
                                             Rng& rng, DrawTrace* trace) const {
    const int N = cfg.n_slots, A = cfg.n_actions, m = cfg.state_width;
    const bool tied = cfg.tie_proposal_to_target;
    Array din_t = din_exist_state(t, p, prev_actions, false, obs_batch, learner_prev_action, A);
    Array din_p = tied ? din_t
                       : din_exist_state(t, p, prev_actions, true, obs_batch,
                                         learner_prev_action, A);
    const nn::Mlp& prop_agg = tied ? ex_targ_agg : ex_prop_agg;
    const nn::Mlp& prop_head = tied ? ex_targ_head : ex_prop_head;

    ExistStateResult res;
    res.exists = Array::zeros(N, 1);
    std::optional<Array> lp, lt;
    auto acc = [&](std::optional<Array>& slot, const Array& v) {
        slot = slot ? t.add(*slot, v) : v;
    };

    // Autoregressive existence in ascending slot order; earlier outcomes feed
    // later decisions through a summed message.
    std::optional<Array> agg_prop, agg_targ;
    for (int j = 0; j < N; ++j) {
        Array dp_row = t.slice_rows(din_p, j, j + 1);
        Array dt_row = t.slice_rows(din_t, j, j + 1);
        if (j == 0) {
            res.exists.at(0, 0) = 1.0;  // the learner always exists
        } else {
            Array np = agg_prop ? *agg_prop : Array::zeros(1, cfg.hidden);
            Array nt = agg_targ ? *agg_targ : Array::zeros(1, cfg.hidden);
            Array logit_p = prop_head.apply(t, bind, t.concat_cols({dp_row, np}));
            Array logit_t = tied ? logit_p
                                 : ex_targ_head.apply(t, bind, t.concat_cols({dt_row, nt}));
            const double prob1 = 1.0 / (1.0 + std::exp(-logit_p.data[0]));
            auto draw = [&] { return rng.uniform() < prob1 ? 1 : 0; };
            int e = trace ? trace->take_int(draw) : draw();
            res.exists.at(j, 0) = static_cast<double>(e);
            // log-sigmoid form keeps the density finite for any logit
            if (e == 1) {
                acc(lp, t.neg(t.softplus(t.neg(logit_p))));
                acc(lt, t.neg(t.softplus(t.neg(logit_t))));
            } else {
                acc(lp, t.neg(t.softplus(logit_p)));
                acc(lt, t.neg(t.softplus(logit_t)));
            }
        }
        Array e_const = Array::scalar_of(res.exists.at(j, 0));
        Array msg_p = prop_agg.apply(t, bind, t.concat_cols({e_const, dp_row}));
        agg_prop = agg_prop ? t.add(*agg_prop, msg_p) : msg_p;
        Array msg_t = tied ? msg_p : ex_targ_agg.apply(t, bind, t.concat_cols({e_const, dt_row}));
        agg_targ = agg_targ ? t.add(*agg_targ, msg_t) : msg_t;
    }

    nn::GaussianOut gp = nn::gaussian_head(t, bind, tied ? st_targ_mu : st_prop_mu,
                                           tied ? st_targ_var : st_prop_var, din_p);
    Array eps(N, m);
    for (auto& v : eps.data) {
        auto draw = [&] { return rng.gauss(); };
        v = trace ? trace->take_real(draw) : draw();
    }
    res.state_hat = t.add(gp.mu, t.mul(sigma_of(t, gp.var), eps));

    Array mask = expand_col(t, res.exists, m);
    Array lp_state = nn::gaussian_log_density(t, res.state_hat, gp, &mask);
    Array lt_state = lp_state;
    if (!tied) {
        nn::GaussianOut gt = nn::gaussian_head(t, bind, st_targ_mu, st_targ_var, din_t);
        lt_state = nn::gaussian_log_density(t, res.state_hat, gt, &mask);
    }
    acc(lp, lp_state);
    acc(lt, lt_state);
    res.log_prop = *lp;
    res.log_targ = *lt;
    return res;
}

TypeResult PfModel::update_types(Tape& t, const Binding& bind, const Particle& p,
                                 const Array& new_exists, const Array& new_state,
                                 const std::vector<int>& prev_actions, const Array& obs_batch,
                                 int learner_prev_action) const {
    const int N = cfg.n_slots, A = cfg.n_actions;
    Array din = t.concat_cols({new_state, p.types, actions_onehot(prev_actions, A),
                               tile_row_const(onehot_const(learner_prev_action, A), N),
                               obs_batch});
    nn::LstmState st = type_lstm.step(t, bind, din, {p.type_h, p.type_c});
    Array theta = type_out.apply(t, bind, st.c);
    Array mask_n = expand_col(t, new_exists, cfg.type_width);
    Array mask_h = expand_col(t, new_exists, cfg.hidden);
    TypeResult res;
    res.types = t.mul(theta, mask_n);  // absent agents keep zero type vectors
    res.type_h = t.mul(st.h, mask_h);
    res.type_c = t.mul(st.c, mask_h);
    return res;
}

Array PfModel::observation_loglik(Tape& t, const Binding& bind, const Array& obs_batch,
                                  const Array& vis_col, const Array& state,
                                  const std::vector<int>& prev_actions) const {
    Array din = t.concat_cols({state, actions_onehot(prev_actions, cfg.n_actions)});
    nn::GaussianOut g = nn::gaussian_head(t, bind, obs_mu, obs_var, din);
    // Only visible rows are scored; zero-padded rows would reward trivial fits.
    Array mask = expand_col(t, vis_col, cfg.obs_width);
    return nn::gaussian_log_density(t, obs_batch, g, &mask);
}

Array PfModel::target_action_probs(Tape& t, const Binding& bind, const Particle& p) const {
    Array din = t.concat_cols({p.exists, p.state, p.types});
    return t.softmax(act_targ_head.apply(t, bind, act_targ_mp.apply(t, bind, din)));
}

Particle PfModel::initial_particle(Tape& t, const Binding& bind, const Array& obs_batch,
                                   const Array& vis_col, Rng& rng, DrawTrace* trace) const {
    const int N = cfg.n_slots;
    Particle zero;
    zero.prev_actions.assign(N, cfg.noop_action);
    zero.exists = Array::zeros(N, 1);
    zero.state = Array::zeros(N, cfg.state_width);
    zero.types = Array::zeros(N, cfg.type_width);
    zero.type_h = Array::zeros(N, cfg.hidden);
    zero.type_c = Array::zeros(N, cfg.hidden);
    zero.log_w = Array::scalar_of(0.0);

    ExistStateResult es =
        sample_exist_state(t, bind, zero, zero.prev_actions, obs_batch, 0, rng, trace);
    Particle p = zero;
    p.exists = detached(vis_col);  // existence pinned to the observed visibility
    p.state = t.mul(es.state_hat, expand_col(t, p.exists, cfg.state_width));
    return p;
}

std::vector<double> pf_action_value(Tape& t, const Binding& bind, const PfModel& m,
                                    const ParticleSet& u) {
    const std::vector<double> w = normalized_weights(u);
    std::vector<double> out(m.cfg.n_actions, 0.0);
    gpl::CgHeads cg{&m.beta, &m.delta, m.delta.out_width() / m.cfg.n_actions, m.cfg.n_actions};
    for (size_t k = 0; k < u.size(); ++k) {
        const Particle& p = u[k];
        std::vector<int> active;
        for (int j = 0; j < p.exists.rows(); ++j)
            if (p.exists.at(j, 0) > 0.5) active.push_back(j);
        if (active.empty() || active[0] != 0)
            throw std::runtime_error("pf_action_value: learner missing from particle");
        std::vector<Array> rows, prows;
        Array probs_all = m.target_action_probs(t, bind, p);
        for (int j : active) {
            rows.push_back(t.concat_cols({t.slice(p.exists, j, j + 1, 0, 1),
                                          t.slice_rows(p.state, j, j + 1),
                                          t.slice_rows(p.types, j, j + 1)}));
            prows.push_back(t.slice_rows(probs_all, j, j + 1));
        }
        Array reps = t.concat_rows(rows);
        Array probs = t.concat_rows(prows);
        Array q = gpl::marginalized_action_value(t, bind, cg, reps, 0, probs);
        for (int a = 0; a < m.cfg.n_actions; ++a) out[a] += w[k] * q.at(0, a);
    }
    return out;
}

// --- autoencoder ----------------------------------------------------------

void AeModel::init(const AeConfig& c) {
    cfg = c;
    Rng rng(c.init_seed);
    const int H = c.hidden, A = c.n_actions, ow = c.obs_width, E = c.embed_width;
    enc.init(ps, "enc", ow + A, H, rng);
    enc_out.init(ps, "enc_out", {{H, E}, nn::Act::relu, nn::Act::none}, rng);
    dec_obs.init(ps, "dec_obs", {{E, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    nn::MessagePassingSpec mp{E, H, H, 1, nn::Act::relu};
    dec_act_mp.init(ps, "dec_act.mp", mp, rng);
    dec_act_head.init(ps, "dec_act.head", {{H, A}, nn::Act::relu, nn::Act::none}, rng);
    sr.init(ps, "sr", {{E, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    beta.init(ps, "beta", {{2 * E, H, A}, nn::Act::relu, nn::Act::none}, rng);
    delta.init(ps, "delta", {{2 * E, H, std::min(A - 1, 4) * A}, nn::Act::relu, nn::Act::none},
               rng);

    auto push_mlp = [](std::vector<int>& v, const nn::Mlp& mm) {
        v.insert(v.end(), mm.w.begin(), mm.w.end());
        v.insert(v.end(), mm.b.begin(), mm.b.end());
    };
    inf_scope = {enc.wx, enc.wh, enc.bias};
    push_mlp(inf_scope, enc_out);
    push_mlp(inf_scope, dec_obs);
    push_mlp(inf_scope, dec_act_mp.edge);
    push_mlp(inf_scope, dec_act_mp.node);
    push_mlp(inf_scope, dec_act_head);
    push_mlp(st_scope, sr);
    push_mlp(ag_scope, dec_act_mp.edge);
    push_mlp(ag_scope, dec_act_mp.node);
    push_mlp(ag_scope, dec_act_head);
    push_mlp(val_scope, beta);
    push_mlp(val_scope, delta);
}

std::pair<Array, nn::LstmState> AeModel::encode(Tape& t, const Binding& bind,
                                                const Array& obs_batch, int learner_prev_action,
                                                const nn::LstmState& st) const {
    Array in = t.concat_cols(
        {obs_batch,
         tile_row_const(onehot_const(learner_prev_action, cfg.n_actions), obs_batch.rows())});
    nn::LstmState nxt = enc.step(t, bind, in, st);
    return {enc_out.apply(t, bind, nxt.c), nxt};
}

Array AeModel::action_probs(Tape& t, const Binding& bind, const Array& rho) const {
    return t.softmax(dec_act_head.apply(t, bind, dec_act_mp.apply(t, bind, rho)));
}

std::vector<double> AeModel::action_value(Tape& t, const Binding& bind, const Array& rho) const {
    gpl::CgHeads cg{&beta, &delta, delta.out_width() / cfg.n_actions, cfg.n_actions};
    Array probs = action_probs(t, bind, rho);
    return gpl::marginalized_action_value(t, bind, cg, rho, 0, probs).data;
}

// --- variational autoencoder ------------------------------------------------

void VaeModel::init(const VaeConfig& c) {
    cfg = c;
    Rng rng(c.init_seed);
    const int H = c.hidden, A = c.n_actions, ow = c.obs_width, Z = c.latent_width;
    enc.init(ps, "enc", ow + A, H, rng);
    enc_mu.init(ps, "enc_mu", {{H, Z}, nn::Act::relu, nn::Act::none}, rng);
    enc_var.init(ps, "enc_var", {{H, Z}, nn::Act::relu, nn::Act::none}, rng);
    dec_obs_mu.init(ps, "dec_obs.mu", {{Z, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    dec_obs_var.init(ps, "dec_obs.var", {{Z, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    nn::MessagePassingSpec mp{Z, H, H, 1, nn::Act::relu};
    dec_act_mp.init(ps, "dec_act.mp", mp, rng);
    dec_act_head.init(ps, "dec_act.head", {{H, A}, nn::Act::relu, nn::Act::none}, rng);
    sr_mu.init(ps, "sr.mu", {{Z, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    sr_var.init(ps, "sr.var", {{Z, H, ow}, nn::Act::relu, nn::Act::none}, rng);
    beta.init(ps, "beta", {{2 * Z, H, A}, nn::Act::relu, nn::Act::none}, rng);
    delta.init(ps, "delta", {{2 * Z, H, std::min(A - 1, 4) * A}, nn::Act::relu, nn::Act::none},
               rng);

    auto push_mlp = [](std::vector<int>& v, const nn::Mlp& mm) {
        v.insert(v.end(), mm.w.begin(), mm.w.end());
        v.insert(v.end(), mm.b.begin(), mm.b.end());
    };
    inf_scope = {enc.wx, enc.wh, enc.bias};
    for (auto* mm : {&enc_mu, &enc_var, &dec_obs_mu, &dec_obs_var, &dec_act_head})
        push_mlp(inf_scope, *mm);
    push_mlp(inf_scope, dec_act_mp.edge);
    push_mlp(inf_scope, dec_act_mp.node);
    push_mlp(st_scope, sr_mu);
    push_mlp(st_scope, sr_var);
    push_mlp(ag_scope, dec_act_mp.edge);
    push_mlp(ag_scope, dec_act_mp.node);
    push_mlp(ag_scope, dec_act_head);
    push_mlp(val_scope, beta);
    push_mlp(val_scope, delta);
}

VaePosterior VaeModel::encode(Tape& t, const Binding& bind, const Array& obs_batch,
                              int learner_prev_action, const nn::LstmState& st) const {
    Array in = t.concat_cols(
        {obs_batch,
         tile_row_const(onehot_const(learner_prev_action, cfg.n_actions), obs_batch.rows())});
    nn::LstmState nxt = enc.step(t, bind, in, st);
    VaePosterior post;
    post.q = nn::gaussian_head(t, bind, enc_mu, enc_var, nxt.c);
    post.st = nxt;
    return post;
}

std::pair<Array, Array> VaeModel::sample_z(Tape& t, const VaePosterior& post, Rng& rng,
                                           DrawTrace* trace) const {
    Array eps(post.q.mu.rows(), post.q.mu.cols());
    for (auto& v : eps.data) {
        auto draw = [&] { return rng.gauss(); };
        v = trace ? trace->take_real(draw) : draw();
    }
    Array z = t.add(post.q.mu, t.mul(sigma_of(t, post.q.var), eps));
    Array logq = nn::gaussian_log_density(t, z, post.q);
    return {z, logq};
}

Array VaeModel::action_probs(Tape& t, const Binding& bind, const Array& z) const {
    return t.softmax(dec_act_head.apply(t, bind, dec_act_mp.apply(t, bind, z)));
}

std::vector<double> VaeModel::action_value(Tape& t, const Binding& bind,
                                           const VaePosterior& post, int n_samples, Rng& rng,
                                           DrawTrace* trace) const {
    if (n_samples < 1) throw std::runtime_error("vae action_value: need at least one sample");
    gpl::CgHeads cg{&beta, &delta, delta.out_width() / cfg.n_actions, cfg.n_actions};
    std::vector<std::vector<double>> qs;
    std::vector<double> logq;
    for (int k = 0; k < n_samples; ++k) {
        auto [z, lq] = sample_z(t, post, rng, trace);
        Array probs = action_probs(t, bind, z);
        qs.push_back(gpl::marginalized_action_value(t, bind, cg, z, 0, probs).data);
        logq.push_back(lq.data[0]);
    }
    // Density-weighted average: softmax over the samples' own log densities.
    double mx = *std::max_element(logq.begin(), logq.end());
    double zsum = 0;
    for (auto& v : logq) {
        v = std::exp(v - mx);
        zsum += v;
    }
    std::vector<double> out(cfg.n_actions, 0.0);
    for (int k = 0; k < n_samples; ++k)
        for (int a = 0; a < cfg.n_actions; ++a) out[a] += (logq[k] / zsum) * qs[k][a];
    return out;
}

// --- loss bundles ------------------------------------------------------------

namespace {

// Expected joint value with the learner and visible teammates pinned and the
// remaining listed rows marginalized under `probs_rows`; returns the scalar
// at the learner's executed action.
Array pinned_marginal_value(Tape& t, const Binding& bind, const gpl::CgHeads& cg,
                            const Array& reps, const std::vector<int>& rep_slots,
                            const PoRecord& rec, const Array& probs_rows) {
    const int n = reps.rows();
    gpl::TeamActions team;
    team.pinned.assign(n, -1);
    team.dist.resize(n);
    int learner_row = 0;
    for (int r = 0; r < n; ++r) {
        const int slot = rep_slots[r];
        if (slot == 0) {
            learner_row = r;
            continue;
        }
        bool vis = false;
        for (size_t i = 0; i < rec.visible_slots.size(); ++i)
            if (rec.visible_slots[i] == slot) {
                team.pinned[r] = rec.visible_actions[i];
                vis = true;
            }
        if (!vis) team.dist[r] = t.slice_rows(probs_rows, r, r + 1);
    }
    Array q = gpl::cg_value_over_learner_actions(t, bind, cg, reps, learner_row, team);
    return t.slice(q, 0, 1, rec.learner_action, rec.learner_action + 1);
}

std::vector<int> iota_slots(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
}

// Target values are constants of the optimization; record once, replay
// verbatim so finite-difference checks see a fixed target.
double frozen_target(DrawTrace* trace, const std::function<double()>& compute) {
    if (trace) return trace->take_real(compute);
    return compute();
}

}  // namespace

PoLosses pf_losses(Tape& t, const Binding& bind, const PfModel& m,
                   const std::vector<PoRecord>& window, const ParticleSet& snapshot,
                   double gamma, Rng& rng, DrawTrace* trace) {
    if (window.empty()) throw std::runtime_error("pf_losses: empty window");
    ParticleSet u = snapshot;
    std::optional<Array> inf, sr, nll, rl;
    auto acc = [&](std::optional<Array>& slot, const Array& v) {
        slot = slot ? t.add(*slot, v) : v;
    };
    gpl::CgHeads cg{&m.beta, &m.delta, m.delta.out_width() / m.cfg.n_actions, m.cfg.n_actions};

    for (const auto& rec : window) {
        u = pf_update(t, bind, m, u, rec.obs_batch, rec.vis, rec.learner_prev_action, rng, trace);

        std::vector<Array> wcols;
        for (const auto& p : u) wcols.push_back(p.log_w);
        acc(inf, t.neg(t.logsumexp(t.concat_cols(wcols))));

        const std::vector<double> wbar = normalized_weights(u);
        for (size_t k = 0; k < u.size(); ++k) {
            const Particle& p = u[k];
            Array din = t.concat_cols({p.state, actions_onehot(p.prev_actions, m.cfg.n_actions)});
            nn::GaussianOut g = nn::gaussian_head(t, bind, m.sr_mu, m.sr_var, din);
            acc(sr, t.neg(nn::gaussian_log_density(t, rec.state_batch, g)));

            Array probs = m.target_action_probs(t, bind, p);
            for (size_t i = 0; i < rec.visible_slots.size(); ++i) {
                int slot = rec.visible_slots[i], a = rec.visible_actions[i];
                acc(nll, t.neg(t.log_fn(t.slice(probs, slot, slot + 1, a, a + 1))));
            }

            std::vector<int> active;
            for (int j = 0; j < p.exists.rows(); ++j)
                if (p.exists.at(j, 0) > 0.5) active.push_back(j);
            std::vector<Array> rows, prows;
            for (int j : active) {
                rows.push_back(t.concat_cols({t.slice(p.exists, j, j + 1, 0, 1),
                                              t.slice_rows(p.state, j, j + 1),
                                              t.slice_rows(p.types, j, j + 1)}));
                prows.push_back(t.slice_rows(probs, j, j + 1));
            }
            Array reps = t.concat_rows(rows);
            Array pr = t.concat_rows(prows);
            Array ypred = pinned_marginal_value(t, bind, cg, reps, active, rec, pr);

            const Particle frozen = detach_particle(p);
            double y = frozen_target(trace, [&] {
                if (rec.done) return rec.reward;
                // Advance the particle one step with the same nets, no
                // resampling, no gradient flow.
                Tape t2;
                Binding b2 = nn::bind_all(t2, m.ps);
                ActionSampleResult act = m.sample_prev_actions(
                    t2, b2, frozen, rec.next_obs_batch, rec.learner_action, rng, nullptr);
                ExistStateResult es =
                    m.sample_exist_state(t2, b2, frozen, act.actions, rec.next_obs_batch,
                                         rec.learner_action, rng, nullptr);
                Array state =
                    t2.mul(es.state_hat, expand_col(t2, es.exists, es.state_hat.cols()));
                TypeResult ty = m.update_types(t2, b2, frozen, es.exists, state, act.actions,
                                               rec.next_obs_batch, rec.learner_action);
                Particle adv;
                adv.prev_actions = act.actions;
                adv.exists = es.exists;
                adv.state = state;
                adv.types = ty.types;
                adv.type_h = ty.type_h;
                adv.type_c = ty.type_c;
                adv.log_w = Array::scalar_of(0.0);
                std::vector<double> q = pf_action_value(t2, b2, m, {adv});
                return rec.reward + gamma * *std::max_element(q.begin(), q.end());
            });
            Array diff = t.sub(ypred, Array::scalar_of(y));
            acc(rl, t.scale(t.square(diff), wbar[k] / 2.0));
        }
    }
    PoLosses out;
    out.inf = *inf;
    out.sr = *sr;
    out.nll = nll ? *nll : t.leaf(Array::scalar_of(0.0));
    out.rl = *rl;
    return out;
}

PoLosses ae_losses(Tape& t, const Binding& bind, const AeModel& m,
                   const std::vector<PoRecord>& window, const nn::LstmState& snapshot,
                   double gamma, Rng& rng, DrawTrace* trace) {
    (void)rng;
    if (window.empty()) throw std::runtime_error("ae_losses: empty window");
    nn::LstmState st = snapshot;
    std::optional<Array> inf, sr, nll, rl;
    auto acc = [&](std::optional<Array>& slot, const Array& v) {
        slot = slot ? t.add(*slot, v) : v;
    };
    gpl::CgHeads cg{&m.beta, &m.delta, m.delta.out_width() / m.cfg.n_actions, m.cfg.n_actions};

    for (const auto& rec : window) {
        auto [rho, nxt] = m.encode(t, bind, rec.obs_batch, rec.learner_prev_action, st);
        st = nxt;

        Array bdiff = t.sub(m.dec_obs.apply(t, bind, rho), rec.obs_batch);
        Array recon = t.sum(t.mul(bdiff, bdiff));
        Array probs = m.action_probs(t, bind, rho);
        std::optional<Array> act_ll;
        for (size_t i = 0; i < rec.visible_slots.size(); ++i) {
            int slot = rec.visible_slots[i], a = rec.visible_actions[i];
            Array lp = t.log_fn(t.slice(probs, slot, slot + 1, a, a + 1));
            act_ll = act_ll ? t.add(*act_ll, lp) : lp;
        }
        if (act_ll) {
            acc(inf, t.sub(recon, *act_ll));
            acc(nll, t.neg(*act_ll));
        } else {
            acc(inf, recon);
        }

        Array sdiff = t.sub(m.sr.apply(t, bind, rho), rec.state_batch);
        acc(sr, t.sum(t.mul(sdiff, sdiff)));

        Array ypred = pinned_marginal_value(t, bind, cg, rho, iota_slots(rho.rows()), rec, probs);
        const nn::LstmState st_frozen{detached(st.h), detached(st.c)};
        double y = frozen_target(trace, [&] {
            if (rec.done) return rec.reward;
            Tape t2;
            Binding b2 = nn::bind_all(t2, m.ps);
            auto [rho2, ignored] =
                m.encode(t2, b2, rec.next_obs_batch, rec.learner_action, st_frozen);
            (void)ignored;
            std::vector<double> q = m.action_value(t2, b2, rho2);
            return rec.reward + gamma * *std::max_element(q.begin(), q.end());
        });
        Array diff = t.sub(ypred, Array::scalar_of(y));
        acc(rl, t.square(diff));
        if (rec.done) st = nn::LstmState::zeros(m.cfg.n_slots, m.cfg.hidden);
    }
    PoLosses out;
    out.inf = *inf;
    out.sr = *sr;
    out.nll = nll ? *nll : t.leaf(Array::scalar_of(0.0));
    out.rl = *rl;
    return out;
}

PoLosses vae_losses(Tape& t, const Binding& bind, const VaeModel& m,
                    const std::vector<PoRecord>& window, const nn::LstmState& snapshot,
                    double gamma, Rng& rng, DrawTrace* trace) {
    if (window.empty()) throw std::runtime_error("vae_losses: empty window");
    nn::LstmState st = snapshot;
    std::optional<Array> inf, sr, nll, rl;
    auto acc = [&](std::optional<Array>& slot, const Array& v) {
        slot = slot ? t.add(*slot, v) : v;
    };
    gpl::CgHeads cg{&m.beta, &m.delta, m.delta.out_width() / m.cfg.n_actions, m.cfg.n_actions};
    const int S = m.cfg.n_samples;

    for (const auto& rec : window) {
        VaePosterior post = m.encode(t, bind, rec.obs_batch, rec.learner_prev_action, st);
        st = post.st;

        std::vector<Array> ypreds, logqs;
        std::optional<Array> obs_ll_sum, act_ll_sum, sr_ll_sum;
        for (int k = 0; k < S; ++k) {
            auto [z, logq] = m.sample_z(t, post, rng, trace);
            logqs.push_back(logq);
            nn::GaussianOut go = nn::gaussian_head(t, bind, m.dec_obs_mu, m.dec_obs_var, z);
            Array oll = nn::gaussian_log_density(t, rec.obs_batch, go);
            obs_ll_sum = obs_ll_sum ? t.add(*obs_ll_sum, oll) : oll;

            Array probs = m.action_probs(t, bind, z);
            std::optional<Array> all;
            for (size_t i = 0; i < rec.visible_slots.size(); ++i) {
                int slot = rec.visible_slots[i], a = rec.visible_actions[i];
                Array lp = t.log_fn(t.slice(probs, slot, slot + 1, a, a + 1));
                all = all ? t.add(*all, lp) : lp;
            }
            Array act_ll = all ? *all : t.leaf(Array::scalar_of(0.0));
            act_ll_sum = act_ll_sum ? t.add(*act_ll_sum, act_ll) : act_ll;

            nn::GaussianOut gs = nn::gaussian_head(t, bind, m.sr_mu, m.sr_var, z);
            Array sll = nn::gaussian_log_density(t, rec.state_batch, gs);
            sr_ll_sum = sr_ll_sum ? t.add(*sr_ll_sum, sll) : sll;

            ypreds.push_back(
                pinned_marginal_value(t, bind, cg, z, iota_slots(z.rows()), rec, probs));
        }
        Array kl = nn::gaussian_kl_to_standard(t, post.q);
        acc(inf, t.add(t.scale(t.add(*obs_ll_sum, *act_ll_sum), -1.0 / S), kl));
        acc(sr, t.scale(*sr_ll_sum, -1.0 / S));
        acc(nll, t.scale(*act_ll_sum, -1.0 / S));

        std::vector<double> lq(S);
        for (int k = 0; k < S; ++k) lq[k] = logqs[k].data[0];
        double mx = *std::max_element(lq.begin(), lq.end());
        double zsum = 0;
        for (auto& v : lq) {
            v = std::exp(v - mx);
            zsum += v;
        }
        const nn::LstmState st_frozen{detached(st.h), detached(st.c)};
        double y = frozen_target(trace, [&] {
            if (rec.done) return rec.reward;
            Tape t2;
            Binding b2 = nn::bind_all(t2, m.ps);
            VaePosterior p2 = m.encode(t2, b2, rec.next_obs_batch, rec.learner_action, st_frozen);
            std::vector<double> q = m.action_value(t2, b2, p2, S, rng, nullptr);
            return rec.reward + gamma * *std::max_element(q.begin(), q.end());
        });
        for (int k = 0; k < S; ++k) {
            Array diff = t.sub(ypreds[k], Array::scalar_of(y));
            acc(rl, t.scale(t.square(diff), lq[k] / zsum / 2.0));
        }
        if (rec.done) st = nn::LstmState::zeros(m.cfg.n_slots, m.cfg.hidden);
    }
    PoLosses out;
    out.inf = *inf;
    out.sr = *sr;
    out.nll = *nll;
    out.rl = *rl;
    return out;
}

}  // namespace oat::belief
