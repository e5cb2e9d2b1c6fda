#include "oat/gpl.hpp"

#include <algorithm>
#include <cmath>

namespace oat::gpl {

// --- preprocessing ----------------------------------------------------------

Array build_batch_fullobs(const env::Observation& obs) {
    const int n = static_cast<int>(obs.agents.size());
    const int fw = n > 0 ? static_cast<int>(obs.agents[0].feat.size()) : 0;
    const int gw = static_cast<int>(obs.global_u.size());
    Array b(n, fw + gw);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < fw; ++k) b.at(j, k) = obs.agents[j].feat[k];
        for (int k = 0; k < gw; ++k) b.at(j, fw + k) = obs.global_u[k];
    }
    return b;
}

Array build_batch_po(const env::Observation& obs, int n_slots) {
    if (static_cast<int>(obs.agents.size()) != n_slots)
        throw std::runtime_error("build_batch_po: observation does not cover all slots");
    const int fw = static_cast<int>(obs.agents[0].feat.size());
    const int gw = static_cast<int>(obs.global_u.size());
    Array b(n_slots, n_slots + fw + 1 + gw);
    for (int j = 0; j < n_slots; ++j) {
        b.at(j, obs.agents[j].id) = 1.0;
        for (int k = 0; k < fw; ++k) b.at(j, n_slots + k) = obs.agents[j].feat[k];
        b.at(j, n_slots + fw) = obs.agents[j].visible ? 1.0 : 0.0;
        for (int k = 0; k < gw; ++k) b.at(j, n_slots + fw + 1 + k) = obs.global_u[k];
    }
    return b;
}

Array visibility_column(const env::Observation& obs) {
    Array v(static_cast<int>(obs.agents.size()), 1);
    for (size_t j = 0; j < obs.agents.size(); ++j) v.at(static_cast<int>(j), 0) =
        obs.agents[j].visible ? 1.0 : 0.0;
    return v;
}

std::vector<int> observed_ids(const env::Observation& obs) {
    std::vector<int> ids;
    for (const auto& a : obs.agents) ids.push_back(a.id);
    return ids;
}

// --- type memory -----------------------------------------------------------

TypeMemory TypeMemory::zeros(const std::vector<int>& ids, int hidden) {
    TypeMemory m;
    m.ids = ids;
    m.h = Array::zeros(static_cast<int>(ids.size()), hidden);
    m.c = Array::zeros(static_cast<int>(ids.size()), hidden);
    return m;
}

int TypeMemory::row_of(int id) const {
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return static_cast<int>(i);
    return -1;
}

TypeMemory postprocess_membership(Tape& t, const TypeMemory& mem, const std::vector<int>& joins,
                                  const std::vector<int>& leaves) {
    for (int id : leaves)
        if (mem.row_of(id) < 0)
            throw std::runtime_error("postprocess_membership: leaving id " + std::to_string(id) +
                                     " not in memory");
    if (joins.empty() && leaves.empty()) return mem;
    const int hidden = mem.h.cols();
    std::vector<int> new_ids;
    for (int id : mem.ids)
        if (std::find(leaves.begin(), leaves.end(), id) == leaves.end()) new_ids.push_back(id);
    for (int id : joins) new_ids.push_back(id);
    std::sort(new_ids.begin(), new_ids.end());

    TypeMemory out;
    out.ids = new_ids;
    if (new_ids.empty()) {
        out.h = Array::zeros(0, hidden);
        out.c = Array::zeros(0, hidden);
        return out;
    }
    std::vector<Array> hrows, crows;
    for (int id : new_ids) {
        int r = mem.row_of(id);
        bool joined = std::find(joins.begin(), joins.end(), id) != joins.end();
        if (r >= 0 && !joined) {
            hrows.push_back(t.slice_rows(mem.h, r, r + 1));
            crows.push_back(t.slice_rows(mem.c, r, r + 1));
        } else {
            hrows.push_back(Array::zeros(1, hidden));
            crows.push_back(Array::zeros(1, hidden));
        }
    }
    out.h = t.concat_rows(hrows);
    out.c = t.concat_rows(crows);
    return out;
}

// --- model -------------------------------------------------------------------

void GplModel::init(const GplConfig& c) {
    cfg = c;
    if (cfg.k_rank >= cfg.n_actions)
        throw std::runtime_error("GplConfig: k_rank must stay below the action count");
    Rng rng(c.init_seed);
    lstm_value.init(ps, "lstm_value", c.feat_width, c.type_width, rng);
    lstm_agent.init(ps, "lstm_agent", c.feat_width, c.type_width, rng);
    nn::MlpSpec beta_spec{{2 * c.type_width, c.hidden, c.n_actions}, nn::Act::relu,
                          nn::Act::none};
    nn::MlpSpec delta_spec{{2 * c.type_width, c.hidden, c.k_rank * c.n_actions}, nn::Act::relu,
                           nn::Act::none};
    beta.init(ps, "beta", beta_spec, rng);
    delta.init(ps, "delta", delta_spec, rng);
    nn::MessagePassingSpec mp{c.type_width, c.hidden, c.hidden, 1, nn::Act::relu};
    zeta.init(ps, "zeta", mp, rng);
    eta.init(ps, "eta", nn::MlpSpec{{c.hidden, c.hidden, c.n_actions}, nn::Act::relu,
                                    nn::Act::none},
             rng);

    auto push_mlp = [](std::vector<int>& v, const nn::Mlp& m) {
        v.insert(v.end(), m.w.begin(), m.w.end());
        v.insert(v.end(), m.b.begin(), m.b.end());
    };
    value_scope = {lstm_value.wx, lstm_value.wh, lstm_value.bias};
    push_mlp(value_scope, beta);
    push_mlp(value_scope, delta);
    agent_scope = {lstm_agent.wx, lstm_agent.wh, lstm_agent.bias};
    push_mlp(agent_scope, zeta.edge);
    push_mlp(agent_scope, zeta.node);
    push_mlp(agent_scope, eta);
}

// --- coordination graph ------------------------------------------------------

namespace {
Array pair_input(Tape& t, const Array& reps, int j, int learner_row) {
    return t.concat_cols({t.slice_rows(reps, j, j + 1),
                          t.slice_rows(reps, learner_row, learner_row + 1)});
}
}  // namespace

Array singular_utility(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps, int j,
                       int learner_row) {
    return cg.beta->apply(t, bind, pair_input(t, reps, j, learner_row));
}

Array pairwise_factor(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps, int j,
                      int learner_row) {
    Array flat = cg.delta->apply(t, bind, pair_input(t, reps, j, learner_row));
    return t.reshape(flat, cg.k_rank, cg.n_actions);
}

Array pairwise_utility(Tape& t, const Array& factor_j, const Array& factor_k) {
    return t.matmul(t.transpose(factor_j), factor_k);
}

Array agent_model_probs(Tape& t, const Binding& bind, const nn::MessagePassing& zeta,
                        const nn::Mlp& eta, const Array& reps) {
    if (reps.rows() == 0) return Array::zeros(0, eta.out_width());
    Array embed = zeta.apply(t, bind, reps);
    return t.softmax(eta.apply(t, bind, embed));
}

TeamActions TeamActions::all_pinned(const std::vector<int>& actions) {
    TeamActions team;
    team.pinned = actions;
    team.dist.resize(actions.size());
    return team;
}

namespace {

struct CgTerms {
    std::vector<Array> sing;              // [1 x A] per row
    std::vector<Array> factor;            // [K x A] per row
    std::vector<std::vector<Array>> pw;   // pw[p][q] for p < q
    int n = 0;

    Array pair(Tape& t, int p, int q) const {
        // Q^{q,p} is the transpose of Q^{p,q}; slices stay bit-identical.
        return p < q ? pw[p][q] : t.transpose(pw[q][p]);
    }
};

CgTerms build_terms(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps,
                    int learner_row) {
    CgTerms terms;
    terms.n = reps.rows();
    for (int j = 0; j < terms.n; ++j) {
        terms.sing.push_back(singular_utility(t, bind, cg, reps, j, learner_row));
        terms.factor.push_back(pairwise_factor(t, bind, cg, reps, j, learner_row));
    }
    terms.pw.resize(terms.n);
    for (int p = 0; p < terms.n; ++p) {
        terms.pw[p].resize(terms.n);
        for (int q = p + 1; q < terms.n; ++q)
            terms.pw[p][q] = pairwise_utility(t, terms.factor[p], terms.factor[q]);
    }
    return terms;
}

Array pick(Tape& t, const Array& rowvec, int idx) { return t.slice(rowvec, 0, 1, idx, idx + 1); }

}  // namespace

Array joint_action_value(Tape& t, const Binding& bind, const CgHeads& cg, const Array& reps,
                         int learner_row, const std::vector<int>& actions) {
    const int n = reps.rows();
    if (static_cast<int>(actions.size()) != n)
        throw std::runtime_error("joint_action_value: action count does not match agent rows");
    CgTerms terms = build_terms(t, bind, cg, reps, learner_row);
    Array total = pick(t, terms.sing[0], actions[0]);
    for (int j = 1; j < n; ++j) total = t.add(total, pick(t, terms.sing[j], actions[j]));
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            if (p == q) continue;
            Array m = terms.pair(t, p, q);
            total = t.add(total, t.slice(m, actions[p], actions[p] + 1, actions[q],
                                         actions[q] + 1));
        }
    return total;
}

Array cg_value_over_learner_actions(Tape& t, const Binding& bind, const CgHeads& cg,
                                    const Array& reps, int learner_row, const TeamActions& team) {
    const int n = reps.rows();
    CgTerms terms = build_terms(t, bind, cg, reps, learner_row);
    Array out = terms.sing[learner_row];
    std::optional<Array> scalar_acc;
    auto add_scalar = [&](const Array& s) {
        scalar_acc = scalar_acc ? t.add(*scalar_acc, s) : s;
    };
    auto row_dist = [&](int j) -> const Array& { return *team.dist[j]; };

    for (int j = 0; j < n; ++j) {
        if (j == learner_row) continue;
        if (team.pinned[j] >= 0) add_scalar(pick(t, terms.sing[j], team.pinned[j]));
        else add_scalar(t.dot(row_dist(j), terms.sing[j]));
    }
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            if (p == q) continue;
            Array m = terms.pair(t, p, q);
            if (p == learner_row) {
                if (team.pinned[q] >= 0)
                    out = t.add(out, t.transpose(t.slice_cols(m, team.pinned[q],
                                                              team.pinned[q] + 1)));
                else out = t.add(out, t.transpose(t.matmul(m, t.transpose(row_dist(q)))));
            } else if (q == learner_row) {
                if (team.pinned[p] >= 0)
                    out = t.add(out, t.slice_rows(m, team.pinned[p], team.pinned[p] + 1));
                else out = t.add(out, t.matmul(row_dist(p), m));
            } else {
                const bool pp = team.pinned[p] >= 0, qp = team.pinned[q] >= 0;
                if (pp && qp)
                    add_scalar(t.slice(m, team.pinned[p], team.pinned[p] + 1, team.pinned[q],
                                       team.pinned[q] + 1));
                else if (pp && !qp)
                    add_scalar(t.matmul(t.slice_rows(m, team.pinned[p], team.pinned[p] + 1),
                                        t.transpose(row_dist(q))));
                else if (!pp && qp)
                    add_scalar(t.matmul(row_dist(p),
                                        t.slice_cols(m, team.pinned[q], team.pinned[q] + 1)));
                else add_scalar(t.matmul(t.matmul(row_dist(p), m), t.transpose(row_dist(q))));
            }
        }
    if (scalar_acc) out = t.add(out, *scalar_acc);
    return out;
}

Array marginalized_action_value(Tape& t, const Binding& bind, const CgHeads& cg,
                                const Array& reps, int learner_row, const Array& probs) {
    const int n = reps.rows();
    TeamActions team;
    team.pinned.assign(n, -1);
    team.dist.resize(n);
    for (int j = 0; j < n; ++j)
        if (j != learner_row) team.dist[j] = t.slice_rows(probs, j, j + 1);
    return cg_value_over_learner_actions(t, bind, cg, reps, learner_row, team);
}

// --- action selection ---------------------------------------------------

int argmax_lowest(const std::vector<double>& q) {
    int best = 0;
    for (size_t i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = static_cast<int>(i);
    return best;
}

std::vector<double> boltzmann_probs(const std::vector<double>& q, double tau) {
    if (tau <= 0) throw std::invalid_argument("boltzmann: tau must be positive");
    double mx = *std::max_element(q.begin(), q.end());
    std::vector<double> p(q.size());
    double z = 0;
    for (size_t i = 0; i < q.size(); ++i) {
        p[i] = std::exp((q[i] - mx) / tau);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

int select_action(const std::vector<double>& q, const ActionSelect& sel, Rng& rng) {
    if (sel.mode == ActionSelect::Mode::eps_greedy) {
        if (sel.eps < 0 || sel.eps > 1) throw std::invalid_argument("select_action: eps in [0,1]");
        if (sel.eps > 0 && rng.uniform() < sel.eps)
            return rng.uniform_int(0, static_cast<int>(q.size()) - 1);
        return argmax_lowest(q);
    }
    std::vector<double> p = boltzmann_probs(q, sel.tau);
    double u = rng.uniform();
    double acc = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

// --- acting -------------------------------------------------------------

QvResult qv_step(Tape& t, const Binding& bind, const GplModel& m, const Array& batch,
                 const TypeMemory& mem_value, const TypeMemory& mem_agent) {
    QvResult r;
    nn::LstmState sv{mem_value.h, mem_value.c};
    nn::LstmState sa{mem_agent.h, mem_agent.c};
    nn::LstmState nv = m.lstm_value.step(t, bind, batch, sv);
    nn::LstmState na = m.lstm_agent.step(t, bind, batch, sa);
    r.mem_value = TypeMemory{mem_value.ids, nv.h, nv.c};
    r.mem_agent = TypeMemory{mem_agent.ids, na.h, na.c};

    const int learner_row = r.mem_value.row_of(0);
    if (learner_row < 0) throw std::runtime_error("qv_step: learner row missing");
    Array probs = agent_model_probs(t, bind, m.zeta, m.eta, na.h);
    CgHeads cg{&m.beta, &m.delta, m.cfg.k_rank, m.cfg.n_actions};
    Array qbar = marginalized_action_value(t, bind, cg, nv.h, learner_row, probs);
    r.qbar = qbar.data;
    return r;
}

// --- losses -------------------------------------------------------------

LossPair compute_losses(Tape& t, const Binding& bind, const GplModel& m,
                        const std::vector<TransitionRecord>& window,
                        const TypeMemory& mem0_value, const TypeMemory& mem0_agent) {
    if (window.empty()) throw std::runtime_error("compute_losses: empty batch");
    CgHeads cg{&m.beta, &m.delta, m.cfg.k_rank, m.cfg.n_actions};
    TypeMemory mv = mem0_value, ma = mem0_agent;
    std::optional<Array> l_value, l_nll;
    auto acc = [&](std::optional<Array>& slot, const Array& term) {
        slot = slot ? t.add(*slot, term) : term;
    };

    for (const auto& rec : window) {
        if (mv.ids != rec.ids)
            throw std::runtime_error("compute_losses: memory ids diverged from record");
        nn::LstmState nv = m.lstm_value.step(t, bind, rec.batch, {mv.h, mv.c});
        nn::LstmState na = m.lstm_agent.step(t, bind, rec.batch, {ma.h, ma.c});
        const int learner_row = mv.row_of(0);

        Array q = joint_action_value(t, bind, cg, nv.h, learner_row, rec.actions);
        Array diff = t.sub(q, Array::scalar_of(rec.y));
        acc(l_value, t.scale(t.square(diff), 0.5));

        if (rec.ids.size() > 1) {
            Array probs = agent_model_probs(t, bind, m.zeta, m.eta, na.h);
            for (size_t j = 0; j < rec.ids.size(); ++j) {
                if (static_cast<int>(j) == learner_row) continue;
                Array pj = t.slice(probs, static_cast<int>(j), static_cast<int>(j) + 1,
                                   rec.actions[j], rec.actions[j] + 1);
                acc(l_nll, t.neg(t.log_fn(pj)));
            }
        }

        mv = TypeMemory{mv.ids, nv.h, nv.c};
        ma = TypeMemory{ma.ids, na.h, na.c};
        if (rec.done) {
            mv = TypeMemory::zeros(rec.next_ids, m.cfg.type_width);
            ma = TypeMemory::zeros(rec.next_ids, m.cfg.type_width);
        } else {
            mv = postprocess_membership(t, mv, rec.joins, rec.leaves);
            ma = postprocess_membership(t, ma, rec.joins, rec.leaves);
        }
    }
    if (!l_nll) l_nll = t.leaf(Array::scalar_of(0.0));
    return LossPair{*l_value, *l_nll};
}

// --- optimizer ------------------------------------------------------------

void AdamOpt::init_like(const nn::ParamStore& ps) {
    m.clear();
    v.clear();
    for (int i = 0; i < ps.size(); ++i) {
        m.push_back(Array::zeros(ps.value(i).rows(), ps.value(i).cols()));
        v.push_back(Array::zeros(ps.value(i).rows(), ps.value(i).cols()));
    }
    t = 0;
}

std::vector<Array> zero_grads_like(const nn::ParamStore& ps) {
    std::vector<Array> g;
    for (int i = 0; i < ps.size(); ++i)
        g.push_back(Array::zeros(ps.value(i).rows(), ps.value(i).cols()));
    return g;
}

void accumulate_scope(const ad::Gradients& grads, const Binding& bind,
                      const std::vector<int>& indices, std::vector<Array>& acc) {
    for (int idx : indices) {
        const Array& g = grads.at(bind[idx]);
        Array& a = acc[idx];
        for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += g.data[i];
    }
}

double grad_global_norm(const std::vector<Array>& grads, const std::vector<int>& indices) {
    double s = 0;
    for (int idx : indices)
        for (double v : grads[idx].data) s += v * v;
    return std::sqrt(s);
}

void AdamOpt::step(nn::ParamStore& ps, const std::vector<Array>& grads,
                   const std::vector<int>& indices) {
    t += 1;
    double scale = 1.0;
    if (clip_norm > 0) {
        double norm = grad_global_norm(grads, indices);
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (int idx : indices) {
        Array& p = ps.value(idx);
        Array& mi = m[idx];
        Array& vi = v[idx];
        const Array& g = grads[idx];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i] * scale;
            mi.data[i] = beta1 * mi.data[i] + (1 - beta1) * gi;
            vi.data[i] = beta2 * vi.data[i] + (1 - beta2) * gi * gi;
            const double mh = mi.data[i] / bc1;
            const double vh = vi.data[i] / bc2;
            p.data[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

// --- ablations --------------------------------------------------------------

void QlModel::init(const QlConfig& c) {
    cfg = c;
    Rng rng(c.init_seed);
    lstm_value.init(ps, "lstm_value", c.feat_width, c.type_width, rng);
    nn::MlpSpec vs{{input_width(), c.hidden, c.hidden, c.n_actions}, nn::Act::relu,
                   nn::Act::none};
    value.init(ps, "value", vs, rng);
    value_scope = {lstm_value.wx, lstm_value.wh, lstm_value.bias};
    auto push_mlp = [](std::vector<int>& v, const nn::Mlp& m) {
        v.insert(v.end(), m.w.begin(), m.w.end());
        v.insert(v.end(), m.b.begin(), m.b.end());
    };
    push_mlp(value_scope, value);
    if (c.with_agent_model) {
        lstm_agent.init(ps, "lstm_agent", c.feat_width, c.type_width, rng);
        nn::MessagePassingSpec mp{c.type_width, c.hidden, c.hidden, 1, nn::Act::relu};
        zeta.init(ps, "zeta", mp, rng);
        eta.init(ps, "eta",
                 nn::MlpSpec{{c.hidden, c.hidden, c.n_actions}, nn::Act::relu, nn::Act::none},
                 rng);
        agent_scope = {lstm_agent.wx, lstm_agent.wh, lstm_agent.bias};
        push_mlp(agent_scope, zeta.edge);
        push_mlp(agent_scope, zeta.node);
        push_mlp(agent_scope, eta);
    }
}

int QlModel::input_width() const {
    return cfg.type_width +
           cfg.teammate_slots * (cfg.type_width + (cfg.with_agent_model ? cfg.n_actions : 0));
}

Array ql_action_value(Tape& t, const Binding& bind, const QlModel& m, const TypeMemory& mem_value,
                      const Array* agent_probs, const std::vector<int>& ids) {
    const int learner_row = mem_value.row_of(0);
    if (learner_row < 0) throw std::runtime_error("ql_action_value: learner missing");
    std::vector<Array> parts;
    parts.push_back(t.slice_rows(mem_value.h, learner_row, learner_row + 1));
    for (int slot = 1; slot <= m.cfg.teammate_slots; ++slot) {
        int r = -1;
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == slot) r = static_cast<int>(i);
        if (r >= 0) parts.push_back(t.slice_rows(mem_value.h, r, r + 1));
        else parts.push_back(Array::zeros(1, m.cfg.type_width));  // placeholder
        if (m.cfg.with_agent_model) {
            if (r >= 0 && agent_probs != nullptr)
                parts.push_back(t.slice_rows(*agent_probs, r, r + 1));
            else parts.push_back(Array::zeros(1, m.cfg.n_actions));
        }
    }
    return m.value.apply(t, bind, t.concat_cols(parts));
}

LossPair ql_compute_losses(Tape& t, const Binding& bind, const QlModel& m,
                           const std::vector<TransitionRecord>& window,
                           const TypeMemory& mem0_value, const TypeMemory& mem0_agent) {
    if (window.empty()) throw std::runtime_error("ql_compute_losses: empty batch");
    TypeMemory mv = mem0_value, ma = mem0_agent;
    std::optional<Array> l_value, l_nll;
    auto acc = [&](std::optional<Array>& slot, const Array& term) {
        slot = slot ? t.add(*slot, term) : term;
    };
    for (const auto& rec : window) {
        if (mv.ids != rec.ids)
            throw std::runtime_error("ql_compute_losses: memory ids diverged from record");
        nn::LstmState nv = m.lstm_value.step(t, bind, rec.batch, {mv.h, mv.c});
        mv = TypeMemory{mv.ids, nv.h, nv.c};
        const int learner_row = mv.row_of(0);
        Array probs;
        if (m.cfg.with_agent_model) {
            nn::LstmState na = m.lstm_agent.step(t, bind, rec.batch, {ma.h, ma.c});
            ma = TypeMemory{ma.ids, na.h, na.c};
            probs = agent_model_probs(t, bind, m.zeta, m.eta, na.h);
            for (size_t j = 0; j < rec.ids.size(); ++j) {
                if (static_cast<int>(j) == learner_row) continue;
                Array pj = t.slice(probs, static_cast<int>(j), static_cast<int>(j) + 1,
                                   rec.actions[j], rec.actions[j] + 1);
                acc(l_nll, t.neg(t.log_fn(pj)));
            }
        }
        Array q = ql_action_value(t, bind, m, mv, m.cfg.with_agent_model ? &probs : nullptr,
                                  rec.ids);
        const int a_i = rec.actions[learner_row];
        Array diff = t.sub(t.slice(q, 0, 1, a_i, a_i + 1), Array::scalar_of(rec.y));
        acc(l_value, t.scale(t.square(diff), 0.5));

        if (rec.done) {
            mv = TypeMemory::zeros(rec.next_ids, m.cfg.type_width);
            ma = TypeMemory::zeros(rec.next_ids, m.cfg.type_width);
        } else {
            mv = postprocess_membership(t, mv, rec.joins, rec.leaves);
            if (m.cfg.with_agent_model) ma = postprocess_membership(t, ma, rec.joins, rec.leaves);
        }
    }
    if (!l_nll) l_nll = t.leaf(Array::scalar_of(0.0));
    return LossPair{*l_value, *l_nll};
}

}  // namespace oat::gpl
