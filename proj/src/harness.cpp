#include "oat/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace oat::harness {

using ad::Array;
using ad::Tape;

// --- statistics ----------------------------------------------------------

namespace {

double betacf(double a, double b, double x) {
    const int kMaxIter = 200;
    const double eps = 3e-14, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int dof) {
    double x = dof / (dof + t * t);
    double p = 0.5 * betai(dof / 2.0, 0.5, x);
    return t >= 0 ? 1.0 - p : p;
}

}  // namespace

double student_t_quantile(double p, int dof) {
    if (dof < 1) throw std::invalid_argument("student_t_quantile: dof must be >= 1");
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("student_t_quantile: p in (0,1)");
    double lo = -1e6, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, dof) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

EvalResult summarize_returns(const std::vector<double>& returns) {
    EvalResult r;
    r.returns = returns;
    if (returns.empty()) throw std::runtime_error("summarize_returns: no episodes");
    double sum = 0;
    for (double v : returns) sum += v;
    r.mean = sum / static_cast<double>(returns.size());
    if (returns.size() > 1) {
        double ss = 0;
        for (double v : returns) ss += (v - r.mean) * (v - r.mean);
        double sd = std::sqrt(ss / static_cast<double>(returns.size() - 1));
        double tq = student_t_quantile(0.975, static_cast<int>(returns.size()) - 1);
        r.ci_halfwidth = tq * sd / std::sqrt(static_cast<double>(returns.size()));
    }
    return r;
}

// --- metrics ----------------------------------------------------------------

const char* kMetricsHeader =
    "step,seed,mean_return,return_ci_halfwidth,loss_value,loss_nll,loss_inf,loss_sr,wall_clock";

namespace {
std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

std::string metrics_csv_line(const MetricsRow& row) {
    std::ostringstream os;
    os << row.step << ',' << row.seed << ',' << fmt_g17(row.mean_return) << ','
       << fmt_g17(row.return_ci_halfwidth) << ',' << fmt_g17(row.loss_value) << ','
       << fmt_g17(row.loss_nll) << ',' << fmt_g17(row.loss_inf) << ',' << fmt_g17(row.loss_sr)
       << ',' << fmt_g17(row.wall_clock);
    return os.str();
}

void append_metrics(const std::string& path, const MetricsRow& row) {
    bool fresh = !std::filesystem::exists(path);
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot append metrics to " + path);
    if (fresh) os << kMetricsHeader << "\n";
    os << metrics_csv_line(row) << "\n";
    os.flush();
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open metrics file " + path);
    std::string line;
    std::getline(is, line);
    if (line != kMetricsHeader) throw std::runtime_error("metrics header mismatch in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        MetricsRow r;
        std::istringstream ls(line);
        char comma;
        ls >> r.step >> comma >> r.seed >> comma >> r.mean_return >> comma >>
            r.return_ci_halfwidth >> comma >> r.loss_value >> comma >> r.loss_nll >> comma >>
            r.loss_inf >> comma >> r.loss_sr >> comma >> r.wall_clock;
        if (ls.fail()) throw std::runtime_error("metrics row parse failure: " + line);
        rows.push_back(r);
    }
    return rows;
}

// --- shared helpers -----------------------------------------------------

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    uint64_t x = a * 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL + c + 0x94d049bb133111ebULL;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

Array detached(Array a) {
    a.node = -1;
    return a;
}

gpl::TypeMemory detach_mem(gpl::TypeMemory m) {
    m.h = detached(std::move(m.h));
    m.c = detached(std::move(m.c));
    return m;
}

nn::LstmState detach_state(nn::LstmState s) {
    s.h = detached(std::move(s.h));
    s.c = detached(std::move(s.c));
    return s;
}

belief::ParticleSet detach_particles(const belief::ParticleSet& u) {
    belief::ParticleSet out;
    for (const auto& p : u) {
        belief::Particle d = p;
        d.exists = detached(d.exists);
        d.state = detached(d.state);
        d.types = detached(d.types);
        d.type_h = detached(d.type_h);
        d.type_c = detached(d.type_c);
        d.log_w = detached(d.log_w);
        out.push_back(std::move(d));
    }
    return out;
}

int gpl_feat_width(const env::EnvConfig& cfg) {
    return env::agent_feat_width(cfg.kind) + env::global_feat_width(cfg);
}

int po_obs_width(const env::EnvConfig& cfg) {
    return cfg.slot_count() + env::agent_feat_width(cfg.kind) + 1 + env::global_feat_width(cfg);
}

// View of one step for the GPL-family learners. Under partial observability
// the visible agents play the role of the present set.
struct StepView {
    std::vector<int> ids;
    Array batch;
};

StepView gpl_step_view(const env::EnvState& s, bool po) {
    StepView v;
    if (!po) {
        env::Observation obs = env::observe(s);
        v.ids = gpl::observed_ids(obs);
        v.batch = gpl::build_batch_fullobs(obs);
        return v;
    }
    env::Observation obs = env::observe_po(s);
    const int fw = env::agent_feat_width(s.cfg.kind);
    const int gw = static_cast<int>(obs.global_u.size());
    std::vector<const env::ObsAgent*> vis;
    for (const auto& a : obs.agents)
        if (a.visible) vis.push_back(&a);
    v.batch = Array(static_cast<int>(vis.size()), fw + gw);
    for (size_t r = 0; r < vis.size(); ++r) {
        v.ids.push_back(vis[r]->id);
        for (int k = 0; k < fw; ++k) v.batch.at(static_cast<int>(r), k) = vis[r]->feat[k];
        for (int k = 0; k < gw; ++k) v.batch.at(static_cast<int>(r), fw + k) = obs.global_u[k];
    }
    return v;
}

std::pair<std::vector<int>, std::vector<int>> id_diff(const std::vector<int>& prev,
                                                      const std::vector<int>& now) {
    std::vector<int> joins, leaves;
    for (int id : now)
        if (std::find(prev.begin(), prev.end(), id) == prev.end()) joins.push_back(id);
    for (int id : prev)
        if (std::find(now.begin(), now.end(), id) == now.end()) leaves.push_back(id);
    return {joins, leaves};
}

std::vector<int> dedup_union(std::initializer_list<const std::vector<int>*> scopes) {
    std::vector<int> all;
    for (const auto* s : scopes) all.insert(all.end(), s->begin(), s->end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

double eps_at(const RunConfig& cfg, long step) {
    double horizon = std::max(1.0, cfg.eps_frac * static_cast<double>(cfg.total_steps));
    double frac = std::min(1.0, static_cast<double>(step) / horizon);
    return cfg.eps_start + (cfg.eps_final - cfg.eps_start) * frac;
}

}  // namespace

// --- policies ---------------------------------------------------------------

namespace {

class GplPolicy : public Policy {
public:
    GplPolicy(const gpl::GplModel* model, bool po, gpl::ActionSelect train_sel)
        : model_(model), po_(po), sel_(train_sel) {}

    void begin(const env::EnvState&) override { fresh_ = true; }

    int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) override {
        StepView view = gpl_step_view(s, po_);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        if (fresh_) {
            mv_ = gpl::TypeMemory::zeros(view.ids, model_->cfg.type_width);
            ma_ = gpl::TypeMemory::zeros(view.ids, model_->cfg.type_width);
            fresh_ = false;
        } else if (mv_.ids != view.ids) {
            auto [joins, leaves] = id_diff(mv_.ids, view.ids);
            mv_ = gpl::postprocess_membership(t, mv_, joins, leaves);
            ma_ = gpl::postprocess_membership(t, ma_, joins, leaves);
        }
        gpl::QvResult qv = gpl::qv_step(t, bind, *model_, view.batch, mv_, ma_);
        mv_ = detach_mem(qv.mem_value);
        ma_ = detach_mem(qv.mem_agent);
        return gpl::select_action(qv.qbar, sel, rng);
    }

    void after_step(const env::EnvState&, const env::StepResult& res, int) override {
        if (res.done) fresh_ = true;
    }

private:
    const gpl::GplModel* model_;
    bool po_;
    gpl::ActionSelect sel_;
    gpl::TypeMemory mv_, ma_;
    bool fresh_ = true;
};

class QlPolicy : public Policy {
public:
    explicit QlPolicy(const gpl::QlModel* model) : model_(model) {}

    void begin(const env::EnvState&) override { fresh_ = true; }

    int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) override {
        StepView view = gpl_step_view(s, false);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        if (fresh_) {
            mv_ = gpl::TypeMemory::zeros(view.ids, model_->cfg.type_width);
            ma_ = gpl::TypeMemory::zeros(view.ids, model_->cfg.type_width);
            fresh_ = false;
        } else if (mv_.ids != view.ids) {
            auto [joins, leaves] = id_diff(mv_.ids, view.ids);
            mv_ = gpl::postprocess_membership(t, mv_, joins, leaves);
            if (model_->cfg.with_agent_model)
                ma_ = gpl::postprocess_membership(t, ma_, joins, leaves);
        }
        nn::LstmState nv = model_->lstm_value.step(t, bind, view.batch, {mv_.h, mv_.c});
        mv_ = detach_mem(gpl::TypeMemory{view.ids, nv.h, nv.c});
        Array probs;
        if (model_->cfg.with_agent_model) {
            nn::LstmState na = model_->lstm_agent.step(t, bind, view.batch, {ma_.h, ma_.c});
            ma_ = detach_mem(gpl::TypeMemory{view.ids, na.h, na.c});
            probs = gpl::agent_model_probs(t, bind, model_->zeta, model_->eta, na.h);
        }
        Array q = gpl::ql_action_value(t, bind, *model_, mv_,
                                       model_->cfg.with_agent_model ? &probs : nullptr, view.ids);
        return gpl::select_action(q.data, sel, rng);
    }

    void after_step(const env::EnvState&, const env::StepResult& res, int) override {
        if (res.done) fresh_ = true;
    }

private:
    const gpl::QlModel* model_;
    gpl::TypeMemory mv_, ma_;
    bool fresh_ = true;
};

class PfPolicy : public Policy {
public:
    PfPolicy(const belief::PfModel* model, int k, uint64_t seed)
        : model_(model), k_(k), rng_(seed) {}

    void begin(const env::EnvState& s) override {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, model_->cfg.n_slots);
        Array vis = gpl::visibility_column(obs);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        particles_.clear();
        for (int i = 0; i < k_; ++i)
            particles_.push_back(model_->initial_particle(t, bind, b, vis, rng_, nullptr));
        particles_ = detach_particles(particles_);
        prev_action_ = 0;
        pending_update_ = false;
    }

    int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) override {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, model_->cfg.n_slots);
        Array vis = gpl::visibility_column(obs);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        if (pending_update_) {
            particles_ = detach_particles(
                belief::pf_update(t, bind, *model_, particles_, b, vis, prev_action_, rng_,
                                  nullptr));
        }
        std::vector<double> q = belief::pf_action_value(t, bind, *model_, particles_);
        int a = gpl::select_action(q, sel, rng);
        prev_action_ = a;
        pending_update_ = true;
        return a;
    }

    void after_step(const env::EnvState& s, const env::StepResult& res, int) override {
        if (res.done) begin(s);
    }

private:
    const belief::PfModel* model_;
    int k_;
    Rng rng_;
    belief::ParticleSet particles_;
    int prev_action_ = 0;
    bool pending_update_ = false;
};

class AePolicy : public Policy {
public:
    explicit AePolicy(const belief::AeModel* model) : model_(model) {}

    void begin(const env::EnvState&) override {
        st_ = nn::LstmState::zeros(model_->cfg.n_slots, model_->cfg.hidden);
        prev_action_ = 0;
    }
    int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) override {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, model_->cfg.n_slots);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        auto [rho, nxt] = model_->encode(t, bind, b, prev_action_, st_);
        st_ = detach_state(nxt);
        int a = gpl::select_action(model_->action_value(t, bind, rho), sel, rng);
        prev_action_ = a;
        return a;
    }
    void after_step(const env::EnvState& s, const env::StepResult& res, int) override {
        if (res.done) begin(s);
    }

private:
    const belief::AeModel* model_;
    nn::LstmState st_;
    int prev_action_ = 0;
};

class VaePolicy : public Policy {
public:
    VaePolicy(const belief::VaeModel* model, uint64_t seed) : model_(model), rng_(seed) {}

    void begin(const env::EnvState&) override {
        st_ = nn::LstmState::zeros(model_->cfg.n_slots, model_->cfg.hidden);
        prev_action_ = 0;
    }
    int act(const env::EnvState& s, const gpl::ActionSelect& sel, Rng& rng) override {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, model_->cfg.n_slots);
        Tape t;
        auto bind = nn::bind_all(t, model_->ps);
        belief::VaePosterior post = model_->encode(t, bind, b, prev_action_, st_);
        st_ = detach_state(post.st);
        std::vector<double> q =
            model_->action_value(t, bind, post, model_->cfg.n_samples, rng_, nullptr);
        int a = gpl::select_action(q, sel, rng);
        prev_action_ = a;
        return a;
    }
    void after_step(const env::EnvState& s, const env::StepResult& res, int) override {
        if (res.done) begin(s);
    }

private:
    const belief::VaeModel* model_;
    Rng rng_;
    nn::LstmState st_;
    int prev_action_ = 0;
};

}  // namespace

EvalResult evaluate_policy(const PolicyFactory& make_policy, const env::EnvConfig& env_cfg,
                           int episodes, uint64_t seed, const std::string& episode_log_path) {
    if (episodes < 1) throw std::runtime_error("evaluate_policy: need at least one episode");
    std::vector<double> returns;
    for (int ep = 0; ep < episodes; ++ep) {
        uint64_t es = mix_seed(seed, 7777, static_cast<uint64_t>(ep));
        env::EnvState s = env::reset(env_cfg, es);
        Rng trng = teammate_rng_for(es);
        Rng act_rng(mix_seed(seed, 551, static_cast<uint64_t>(ep)));
        std::unique_ptr<Policy> policy = make_policy();
        policy->begin(s);
        env::EpisodeLog log;
        log.cfg = env_cfg;
        log.seed = es;
        double total = 0;
        gpl::ActionSelect greedy{gpl::ActionSelect::Mode::eps_greedy, 0.0, 1.0};
        for (int t = 0;; ++t) {
            int a = policy->act(s, greedy, act_rng);
            auto present = env::present_agents(s);
            env::JointAction joint = env::teammate_actions(s, a, trng);
            env::StepResult res = env::step(s, joint);
            total += res.reward;
            if (!episode_log_path.empty())
                log.steps.push_back(
                    env::make_step_record(present, t, joint, res, env::current_view(s)));
            policy->after_step(s, res, a);
            if (res.done) break;
        }
        returns.push_back(total);
        if (!episode_log_path.empty()) env::append_episode_log(log, episode_log_path);
    }
    return summarize_returns(returns);
}

// --- agents ------------------------------------------------------------------

namespace {

struct GplAgent {
    RunConfig cfg;
    AlgoSpec spec;
    gpl::GplModel model, target;
    gpl::AdamOpt opt;
    long step = 0;
    Rng act_rng;

    static GplAgent make(const RunConfig& cfg) {
        GplAgent a;
        a.cfg = cfg;
        a.spec = cfg.algo();
        gpl::GplConfig mc;
        mc.n_actions = env::num_actions(cfg.env.kind);
        mc.feat_width = gpl_feat_width(cfg.env);
        mc.type_width = cfg.type_width;
        mc.k_rank = cfg.resolved_k_rank();
        mc.hidden = cfg.hidden;
        mc.init_seed = mix_seed(cfg.seed, 1, 1);
        a.model.init(mc);
        a.target.init(mc);
        a.target.ps.copy_from(a.model.ps);
        a.opt.lr = cfg.lr;
        a.opt.init_like(a.model.ps);
        a.act_rng.seed(mix_seed(cfg.seed, 2, 2));
        return a;
    }
};

struct QlAgent {
    RunConfig cfg;
    AlgoSpec spec;
    gpl::QlModel model, target;
    gpl::AdamOpt opt;
    long step = 0;
    Rng act_rng;

    static QlAgent make(const RunConfig& cfg) {
        QlAgent a;
        a.cfg = cfg;
        a.spec = cfg.algo();
        gpl::QlConfig mc;
        mc.n_actions = env::num_actions(cfg.env.kind);
        mc.feat_width = gpl_feat_width(cfg.env);
        mc.type_width = cfg.type_width;
        mc.hidden = cfg.hidden;
        mc.teammate_slots = cfg.env.slot_count() - 1;
        mc.with_agent_model = a.spec.algo == Algo::ql_am;
        mc.init_seed = mix_seed(cfg.seed, 1, 1);
        a.model.init(mc);
        a.target.init(mc);
        a.target.ps.copy_from(a.model.ps);
        a.opt.lr = cfg.lr;
        a.opt.init_like(a.model.ps);
        a.act_rng.seed(mix_seed(cfg.seed, 2, 2));
        return a;
    }
};

struct PoAgent {
    RunConfig cfg;
    AlgoSpec spec;
    std::unique_ptr<belief::PfModel> pf;
    std::unique_ptr<belief::AeModel> ae;
    std::unique_ptr<belief::VaeModel> vae;
    gpl::AdamOpt opt;
    long step = 0;
    Rng act_rng;

    nn::ParamStore& ps() {
        if (pf) return pf->ps;
        if (ae) return ae->ps;
        return vae->ps;
    }
    const nn::ParamStore& ps() const {
        if (pf) return pf->ps;
        if (ae) return ae->ps;
        return vae->ps;
    }

    static PoAgent make(const RunConfig& cfg) {
        PoAgent a;
        a.cfg = cfg;
        a.spec = cfg.algo();
        const int A = env::num_actions(cfg.env.kind);
        const int N = cfg.env.slot_count();
        const int ow = po_obs_width(cfg.env);
        if (a.spec.algo == Algo::pf_gpl) {
            belief::PfConfig pc;
            pc.n_slots = N;
            pc.n_actions = A;
            pc.obs_width = ow;
            pc.state_width = ow;
            pc.type_width = cfg.belief_type_width;
            pc.hidden = cfg.belief_hidden;
            pc.k_particles = a.spec.k_particles;
            pc.noop_action = env::kStay;
            pc.init_seed = mix_seed(cfg.seed, 1, 1);
            a.pf = std::make_unique<belief::PfModel>();
            a.pf->init(pc);
        } else if (a.spec.algo == Algo::ae_gpl) {
            belief::AeConfig ac;
            ac.n_slots = N;
            ac.n_actions = A;
            ac.obs_width = ow;
            ac.embed_width = cfg.embed_width;
            ac.hidden = cfg.belief_hidden;
            ac.init_seed = mix_seed(cfg.seed, 1, 1);
            a.ae = std::make_unique<belief::AeModel>();
            a.ae->init(ac);
        } else {
            belief::VaeConfig vc;
            vc.n_slots = N;
            vc.n_actions = A;
            vc.obs_width = ow;
            vc.latent_width = cfg.latent_width;
            vc.hidden = cfg.belief_hidden;
            vc.n_samples = cfg.n_z_samples;
            vc.init_seed = mix_seed(cfg.seed, 1, 1);
            a.vae = std::make_unique<belief::VaeModel>();
            a.vae->init(vc);
        }
        a.opt.lr = cfg.lr;
        a.opt.init_like(a.ps());
        a.act_rng.seed(mix_seed(cfg.seed, 2, 2));
        return a;
    }
};

// --- checkpoint wiring --------------------------------------------------

RunConfig config_from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return config_from_map(kv);
}

void save_adam(ckpt::Container& c, const gpl::AdamOpt& opt) {
    for (size_t i = 0; i < opt.m.size(); ++i) {
        c.put_array("adam/m/" + std::to_string(i), opt.m[i]);
        c.put_array("adam/v/" + std::to_string(i), opt.v[i]);
    }
    c.put_blob("adam/t", std::to_string(opt.t));
}

void load_adam(const ckpt::Container& c, gpl::AdamOpt& opt) {
    for (size_t i = 0; i < opt.m.size(); ++i) {
        const Array* m = c.find_array("adam/m/" + std::to_string(i));
        const Array* v = c.find_array("adam/v/" + std::to_string(i));
        if (m == nullptr || v == nullptr) throw std::runtime_error("checkpoint: adam state missing");
        opt.m[i] = *m;
        opt.v[i] = *v;
    }
    const std::string* t = c.find_blob("adam/t");
    if (t == nullptr) throw std::runtime_error("checkpoint: adam counter missing");
    opt.t = std::stoi(*t);
}

template <typename Agent>
void save_agent_common(ckpt::Container& c, const Agent& a) {
    c.put_blob("format", "oat-checkpoint-v1");
    std::string text = a.cfg.resolved_text();
    c.put_blob("config", text);
    c.put_blob("config_hash", std::to_string(fnv1a(text)));
    c.put_blob("algo", a.cfg.algorithm);
    c.put_blob("step", std::to_string(a.step));
    c.put_blob("rng/act", a.act_rng.save_state());
    save_adam(c, a.opt);
}

void save_checkpoint(const GplAgent& a, const std::string& path) {
    ckpt::Container c;
    save_agent_common(c, a);
    c.put_store("model", a.model.ps);
    c.put_store("target", a.target.ps);
    ckpt::save(c, path);
}

void save_checkpoint(const QlAgent& a, const std::string& path) {
    ckpt::Container c;
    save_agent_common(c, a);
    c.put_store("model", a.model.ps);
    c.put_store("target", a.target.ps);
    ckpt::save(c, path);
}

void save_checkpoint(const PoAgent& a, const std::string& path) {
    ckpt::Container c;
    save_agent_common(c, a);
    c.put_store("model", a.ps());
    ckpt::save(c, path);
}

template <typename Agent>
void load_agent_common(const ckpt::Container& c, Agent& a) {
    const std::string* step = c.find_blob("step");
    if (step == nullptr) throw std::runtime_error("checkpoint: step missing");
    a.step = std::stol(*step);
    const std::string* rs = c.find_blob("rng/act");
    if (rs != nullptr) a.act_rng.load_state(*rs);
    load_adam(c, a.opt);
}

}  // namespace

RunConfig config_from_checkpoint(const std::string& ckpt_path) {
    ckpt::Container c = ckpt::load(ckpt_path);
    const std::string* text = c.find_blob("config");
    if (text == nullptr) throw std::runtime_error("checkpoint: config blob missing");
    return config_from_text(*text);
}

// --- training loops -----------------------------------------------------

namespace {

struct RunPaths {
    std::filesystem::path dir;
    std::string metrics;
    std::string episodes;
};

RunPaths prepare_run_dir(const RunConfig& cfg, const std::string& override_dir) {
    RunPaths p;
    p.dir = override_dir.empty() ? default_run_dir(cfg) : std::filesystem::path(override_dir);
    std::filesystem::create_directories(p.dir);
    p.metrics = (p.dir / "metrics.csv").string();
    p.episodes = (p.dir / "episodes.jsonl").string();
    std::ofstream cfgout(p.dir / "config.resolved");
    cfgout << cfg.resolved_text();
    return p;
}

struct LossStats {
    double value = 0, nll = 0, inf = 0, sr = 0;
};

// One synchronous training driver shared by the three agent families. The
// callbacks hide the per-family record building and updates.
struct LoopHooks {
    std::function<int(int worker)> act;                       // returns learner action
    std::function<void(int worker, int a, const env::JointAction&, const env::StepResult&,
                       const env::EnvState& pre_reset)>
        record;                                               // before env reset on done
    std::function<void(int worker, bool done)> after;         // reset bookkeeping
    std::function<LossStats()> maybe_update;                  // returns last losses
    std::function<void()> sync_target;
    std::function<EvalResult()> evaluate;
    std::function<void(const std::string& path)> checkpoint;
};

struct WorkerEnv {
    env::EnvState env;
    Rng teammate_rng;
    long episode = 0;
    env::EpisodeLog log;
    int step_in_episode = 0;
};

struct TrainDriver {
    const RunConfig& cfg;
    RunPaths paths;
    std::vector<WorkerEnv> workers;
    LossStats last_losses;
    std::vector<MetricsRow> rows;
    std::filesystem::path best_ckpt;
    double best_return = -HUGE_VAL;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    TrainDriver(const RunConfig& c, const RunPaths& p) : cfg(c), paths(p) {}

    uint64_t episode_seed(int worker, long episode) const {
        return mix_seed(cfg.seed, 100 + static_cast<uint64_t>(worker),
                        static_cast<uint64_t>(episode));
    }

    void reset_worker(int w) {
        uint64_t es = episode_seed(w, workers[w].episode);
        workers[w].env = env::reset(cfg.env, es);
        workers[w].teammate_rng = teammate_rng_for(es);
        workers[w].log = env::EpisodeLog{cfg.env, es, {}};
        workers[w].step_in_episode = 0;
    }

    void init_workers() {
        workers.resize(cfg.workers);
        for (int w = 0; w < cfg.workers; ++w) reset_worker(w);
    }

    double wall_seconds() const {
        if (!cfg.wallclock) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void emit_metrics(long step, const EvalResult& ev) {
        MetricsRow row;
        row.step = step;
        row.seed = cfg.seed;
        row.mean_return = ev.mean;
        row.return_ci_halfwidth = ev.ci_halfwidth;
        row.loss_value = last_losses.value;
        row.loss_nll = last_losses.nll;
        row.loss_inf = last_losses.inf;
        row.loss_sr = last_losses.sr;
        row.wall_clock = wall_seconds();
        append_metrics(paths.metrics, row);
        rows.push_back(row);
    }

    void run(const LoopHooks& hooks, long start_step) {
        auto eval_and_save = [&](long step) {
            EvalResult ev = hooks.evaluate();
            emit_metrics(step, ev);
            std::string ck = (paths.dir / ("ckpt_" + std::to_string(step) + ".bin")).string();
            hooks.checkpoint(ck);
            if (ev.mean > best_return) {
                best_return = ev.mean;
                best_ckpt = ck;
            }
        };
        if (start_step == 0) eval_and_save(0);
        for (long step = start_step + 1; step <= cfg.total_steps; ++step) {
            int w = static_cast<int>((step - 1) % cfg.workers);
            int a = hooks.act(w);
            auto present = env::present_agents(workers[w].env);
            env::JointAction joint =
                env::teammate_actions(workers[w].env, a, workers[w].teammate_rng);
            env::StepResult res = env::step(workers[w].env, joint);
            if (cfg.log_episodes && w == 0)
                workers[w].log.steps.push_back(
                    env::make_step_record(present, workers[w].step_in_episode, joint, res,
                                          env::current_view(workers[w].env)));
            workers[w].step_in_episode += 1;
            hooks.record(w, a, joint, res, workers[w].env);
            if (res.done) {
                if (cfg.log_episodes && w == 0) env::append_episode_log(workers[w].log,
                                                                        paths.episodes);
                workers[w].episode += 1;
                reset_worker(w);
            }
            hooks.after(w, res.done);
            LossStats ls = hooks.maybe_update();
            if (ls.value != 0 || ls.nll != 0 || ls.inf != 0 || ls.sr != 0) last_losses = ls;
            if (step % cfg.t_targ_update == 0 && hooks.sync_target) hooks.sync_target();
            if (step % cfg.eval_every == 0) eval_and_save(step);
        }
        std::string final_ck = (paths.dir / "ckpt_final.bin").string();
        hooks.checkpoint(final_ck);
        if (best_ckpt.empty()) best_ckpt = final_ck;
    }
};

// --- GPL family -------------------------------------------------------------

struct GplWorkerState {
    gpl::TypeMemory mem_v, mem_a, mem_targ;
    gpl::TypeMemory win_v0, win_a0;
    std::vector<gpl::TransitionRecord> window;
    StepView view;  // view of the state being acted on
};

RunResult run_gpl(const RunConfig& cfg, const std::string& run_dir, const std::string& resume) {
    GplAgent agent = GplAgent::make(cfg);
    if (!resume.empty()) {
        ckpt::Container c = ckpt::load(resume);
        c.load_store("model", agent.model.ps);
        c.load_store("target", agent.target.ps);
        load_agent_common(c, agent);
    }
    const bool po = cfg.env.partial_obs;
    const bool spi = agent.spec.algo == Algo::gpl_spi;
    RunPaths paths = prepare_run_dir(cfg, run_dir);
    TrainDriver driver(cfg, paths);

    std::vector<GplWorkerState> ws(cfg.workers);

    auto fresh_worker = [&](int w) {
        ws[w].view = gpl_step_view(driver.workers[w].env, po);
        ws[w].mem_v = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
        ws[w].mem_a = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
        ws[w].mem_targ = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
    };

    LoopHooks hooks;
    hooks.act = [&](int w) {
        ws[w].view = gpl_step_view(driver.workers[w].env, po);
        if (ws[w].window.empty()) {
            ws[w].win_v0 = ws[w].mem_v;
            ws[w].win_a0 = ws[w].mem_a;
        }
        Tape t;
        auto bind = nn::bind_all(t, agent.model.ps);
        gpl::QvResult qv = gpl::qv_step(t, bind, agent.model, ws[w].view.batch, ws[w].mem_v,
                                        ws[w].mem_a);
        ws[w].mem_v = detach_mem(qv.mem_value);
        ws[w].mem_a = detach_mem(qv.mem_agent);
        gpl::ActionSelect sel;
        if (spi) {
            sel.mode = gpl::ActionSelect::Mode::boltzmann;
            sel.tau = cfg.tau;
        } else {
            sel.mode = gpl::ActionSelect::Mode::eps_greedy;
            sel.eps = eps_at(cfg, agent.step);
        }
        return gpl::select_action(qv.qbar, sel, agent.act_rng);
    };
    hooks.record = [&](int w, int a, const env::JointAction& joint, const env::StepResult& res,
                       const env::EnvState& post_env) {
        (void)a;
        gpl::TransitionRecord rec;
        rec.ids = ws[w].view.ids;
        rec.batch = ws[w].view.batch;
        for (int id : rec.ids) {
            auto it = std::find_if(joint.begin(), joint.end(),
                                   [&](const auto& p) { return p.first == id; });
            rec.actions.push_back(it == joint.end() ? env::kStay : it->second);
        }
        rec.reward = res.reward;
        rec.done = res.done;
        if (!res.done) {
            StepView next = gpl_step_view(post_env, po);
            auto [joins, leaves] = id_diff(rec.ids, next.ids);
            rec.joins = joins;
            rec.leaves = leaves;
            rec.next_ids = next.ids;
            // Target network value of the next state; the agent model comes
            // from the live stack advanced past the same batch.
            Tape t;
            auto bind_t = nn::bind_all(t, agent.target.ps);
            auto bind_l = nn::bind_all(t, agent.model.ps);
            gpl::TypeMemory tm =
                gpl::postprocess_membership(t, ws[w].mem_targ, joins, leaves);
            gpl::TypeMemory am = gpl::postprocess_membership(t, ws[w].mem_a, joins, leaves);
            nn::LstmState tv = agent.target.lstm_value.step(t, bind_t, next.batch, {tm.h, tm.c});
            nn::LstmState av = agent.model.lstm_agent.step(t, bind_l, next.batch, {am.h, am.c});
            Array probs = gpl::agent_model_probs(t, bind_l, agent.model.zeta, agent.model.eta,
                                                 av.h);
            gpl::CgHeads cg{&agent.target.beta, &agent.target.delta, agent.target.cfg.k_rank,
                            agent.target.cfg.n_actions};
            int learner_row = 0;
            for (size_t r = 0; r < next.ids.size(); ++r)
                if (next.ids[r] == 0) learner_row = static_cast<int>(r);
            Array qbar = gpl::marginalized_action_value(t, bind_t, cg, tv.h, learner_row, probs);
            double bootstrap;
            if (spi) {
                std::vector<double> p = gpl::boltzmann_probs(qbar.data, cfg.tau);
                bootstrap = 0;
                for (size_t i = 0; i < p.size(); ++i) bootstrap += p[i] * qbar.data[i];
            } else {
                bootstrap = *std::max_element(qbar.data.begin(), qbar.data.end());
            }
            rec.y = res.reward + cfg.gamma * bootstrap;
            ws[w].mem_targ = detach_mem(gpl::TypeMemory{next.ids, tv.h, tv.c});
            // Live memories only follow the membership change; the advance on
            // the next batch above was scratch work for the target value and
            // happens for real at the next act.
            ws[w].mem_v = detach_mem(gpl::postprocess_membership(t, ws[w].mem_v, joins, leaves));
            ws[w].mem_a = detach_mem(gpl::TypeMemory{next.ids, am.h, am.c});
        } else {
            rec.y = res.reward;
        }
        ws[w].window.push_back(std::move(rec));
        agent.step += 1;
    };
    hooks.after = [&](int w, bool done) {
        if (done) {
            fresh_worker(w);
            // записи already点 to the fresh episode's ids
            if (!ws[w].window.empty()) ws[w].window.back().next_ids = ws[w].view.ids;
        }
    };
    hooks.maybe_update = [&]() -> LossStats {
        LossStats out;
        for (int w = 0; w < cfg.workers; ++w) {
            if (static_cast<int>(ws[w].window.size()) < cfg.t_update) continue;
            Tape t;
            auto bind = nn::bind_all(t, agent.model.ps);
            gpl::LossPair lp = gpl::compute_losses(t, bind, agent.model, ws[w].window,
                                                   ws[w].win_v0, ws[w].win_a0);
            auto gv = t.backward(lp.value);
            auto ga = t.backward(lp.nll);
            auto grads = gpl::zero_grads_like(agent.model.ps);
            gpl::accumulate_scope(gv, bind, agent.model.value_scope, grads);
            gpl::accumulate_scope(ga, bind, agent.model.agent_scope, grads);
            agent.opt.step(agent.model.ps, grads,
                           dedup_union({&agent.model.value_scope, &agent.model.agent_scope}));
            out.value = lp.value.scalar();
            out.nll = lp.nll.scalar();
            ws[w].window.clear();
            ws[w].win_v0 = ws[w].mem_v;
            ws[w].win_a0 = ws[w].mem_a;
        }
        return out;
    };
    hooks.sync_target = [&]() { agent.target.ps.copy_from(agent.model.ps); };
    hooks.evaluate = [&]() {
        PolicyFactory f = [&]() -> std::unique_ptr<Policy> {
            return std::make_unique<GplPolicy>(&agent.model, po, gpl::ActionSelect{});
        };
        return evaluate_policy(f, cfg.env, cfg.eval_episodes,
                               mix_seed(cfg.seed, 9999, static_cast<uint64_t>(agent.step)));
    };
    hooks.checkpoint = [&](const std::string& path) { save_checkpoint(agent, path); };

    // initialize memories now that driver workers exist
    driver.init_workers();
    for (int w = 0; w < cfg.workers; ++w) fresh_worker(w);
    driver.run(hooks, agent.step);

    RunResult rr;
    rr.run_dir = paths.dir;
    rr.metrics = driver.rows;
    rr.best_checkpoint = driver.best_ckpt;
    return rr;
}

// --- QL family ---------------------------------------------------------------

struct QlWorkerState {
    gpl::TypeMemory mem_v, mem_a, mem_targ;
    gpl::TypeMemory win_v0, win_a0;
    std::vector<gpl::TransitionRecord> window;
    StepView view;
};

RunResult run_ql(const RunConfig& cfg, const std::string& run_dir, const std::string& resume) {
    QlAgent agent = QlAgent::make(cfg);
    if (!resume.empty()) {
        ckpt::Container c = ckpt::load(resume);
        c.load_store("model", agent.model.ps);
        c.load_store("target", agent.target.ps);
        load_agent_common(c, agent);
    }
    const bool am = agent.model.cfg.with_agent_model;
    RunPaths paths = prepare_run_dir(cfg, run_dir);
    TrainDriver driver(cfg, paths);
    std::vector<QlWorkerState> ws(cfg.workers);

    auto fresh_worker = [&](int w) {
        ws[w].view = gpl_step_view(driver.workers[w].env, false);
        ws[w].mem_v = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
        ws[w].mem_a = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
        ws[w].mem_targ = gpl::TypeMemory::zeros(ws[w].view.ids, cfg.type_width);
    };

    LoopHooks hooks;
    hooks.act = [&](int w) {
        ws[w].view = gpl_step_view(driver.workers[w].env, false);
        if (ws[w].window.empty()) {
            ws[w].win_v0 = ws[w].mem_v;
            ws[w].win_a0 = ws[w].mem_a;
        }
        Tape t;
        auto bind = nn::bind_all(t, agent.model.ps);
        nn::LstmState nv =
            agent.model.lstm_value.step(t, bind, ws[w].view.batch, {ws[w].mem_v.h, ws[w].mem_v.c});
        gpl::TypeMemory mv{ws[w].view.ids, nv.h, nv.c};
        Array probs;
        if (am) {
            nn::LstmState na = agent.model.lstm_agent.step(t, bind, ws[w].view.batch,
                                                           {ws[w].mem_a.h, ws[w].mem_a.c});
            ws[w].mem_a = detach_mem(gpl::TypeMemory{ws[w].view.ids, na.h, na.c});
            probs = gpl::agent_model_probs(t, bind, agent.model.zeta, agent.model.eta, na.h);
        }
        Array q = gpl::ql_action_value(t, bind, agent.model, mv, am ? &probs : nullptr,
                                       ws[w].view.ids);
        ws[w].mem_v = detach_mem(mv);
        gpl::ActionSelect sel{gpl::ActionSelect::Mode::eps_greedy, eps_at(cfg, agent.step), 1.0};
        return gpl::select_action(q.data, sel, agent.act_rng);
    };
    hooks.record = [&](int w, int, const env::JointAction& joint, const env::StepResult& res,
                       const env::EnvState& post_env) {
        gpl::TransitionRecord rec;
        rec.ids = ws[w].view.ids;
        rec.batch = ws[w].view.batch;
        for (int id : rec.ids) {
            auto it = std::find_if(joint.begin(), joint.end(),
                                   [&](const auto& p) { return p.first == id; });
            rec.actions.push_back(it == joint.end() ? env::kStay : it->second);
        }
        rec.reward = res.reward;
        rec.done = res.done;
        if (!res.done) {
            StepView next = gpl_step_view(post_env, false);
            auto [joins, leaves] = id_diff(rec.ids, next.ids);
            rec.joins = joins;
            rec.leaves = leaves;
            rec.next_ids = next.ids;
            Tape t;
            auto bind_t = nn::bind_all(t, agent.target.ps);
            auto bind_l = nn::bind_all(t, agent.model.ps);
            gpl::TypeMemory tm = gpl::postprocess_membership(t, ws[w].mem_targ, joins, leaves);
            nn::LstmState tv = agent.target.lstm_value.step(t, bind_t, next.batch, {tm.h, tm.c});
            gpl::TypeMemory tmv{next.ids, tv.h, tv.c};
            Array probs;
            if (am) {
                gpl::TypeMemory amem =
                    gpl::postprocess_membership(t, ws[w].mem_a, joins, leaves);
                nn::LstmState av =
                    agent.model.lstm_agent.step(t, bind_l, next.batch, {amem.h, amem.c});
                probs = gpl::agent_model_probs(t, bind_l, agent.model.zeta, agent.model.eta,
                                               av.h);
                // keep the membership change only; the next act re-steps
                ws[w].mem_a = detach_mem(amem);
            }
            Array q = gpl::ql_action_value(t, bind_t, agent.target, tmv, am ? &probs : nullptr,
                                           next.ids);
            rec.y = res.reward +
                    cfg.gamma * *std::max_element(q.data.begin(), q.data.end());
            ws[w].mem_targ = detach_mem(tmv);
            ws[w].mem_v = detach_mem(gpl::postprocess_membership(t, ws[w].mem_v, joins, leaves));
        } else {
            rec.y = res.reward;
        }
        ws[w].window.push_back(std::move(rec));
        agent.step += 1;
    };
    hooks.after = [&](int w, bool done) {
        if (done) {
            fresh_worker(w);
            if (!ws[w].window.empty()) ws[w].window.back().next_ids = ws[w].view.ids;
        }
    };
    hooks.maybe_update = [&]() -> LossStats {
        LossStats out;
        for (int w = 0; w < cfg.workers; ++w) {
            if (static_cast<int>(ws[w].window.size()) < cfg.t_update) continue;
            Tape t;
            auto bind = nn::bind_all(t, agent.model.ps);
            gpl::LossPair lp = gpl::ql_compute_losses(t, bind, agent.model, ws[w].window,
                                                      ws[w].win_v0, ws[w].win_a0);
            auto gv = t.backward(lp.value);
            auto grads = gpl::zero_grads_like(agent.model.ps);
            gpl::accumulate_scope(gv, bind, agent.model.value_scope, grads);
            std::vector<int> scope = agent.model.value_scope;
            if (am) {
                auto ga = t.backward(lp.nll);
                gpl::accumulate_scope(ga, bind, agent.model.agent_scope, grads);
                scope = dedup_union({&agent.model.value_scope, &agent.model.agent_scope});
            }
            agent.opt.step(agent.model.ps, grads, scope);
            out.value = lp.value.scalar();
            out.nll = lp.nll.scalar();
            ws[w].window.clear();
            ws[w].win_v0 = ws[w].mem_v;
            ws[w].win_a0 = ws[w].mem_a;
        }
        return out;
    };
    hooks.sync_target = [&]() { agent.target.ps.copy_from(agent.model.ps); };
    hooks.evaluate = [&]() {
        PolicyFactory f = [&]() -> std::unique_ptr<Policy> {
            return std::make_unique<QlPolicy>(&agent.model);
        };
        return evaluate_policy(f, cfg.env, cfg.eval_episodes,
                               mix_seed(cfg.seed, 9999, static_cast<uint64_t>(agent.step)));
    };
    hooks.checkpoint = [&](const std::string& path) { save_checkpoint(agent, path); };

    driver.init_workers();
    for (int w = 0; w < cfg.workers; ++w) fresh_worker(w);
    driver.run(hooks, agent.step);

    RunResult rr;
    rr.run_dir = paths.dir;
    rr.metrics = driver.rows;
    rr.best_checkpoint = driver.best_ckpt;
    return rr;
}

// --- partially observed family ------------------------------------------

struct PoWorkerState {
    belief::ParticleSet particles, snap_particles;
    nn::LstmState enc_state, snap_state;
    int prev_action = 0;
    std::vector<belief::PoRecord> window;
    // the record under construction for the step being acted on
    belief::PoRecord pending;
};

RunResult run_po(const RunConfig& cfg, const std::string& run_dir, const std::string& resume) {
    PoAgent agent = PoAgent::make(cfg);
    if (!resume.empty()) {
        ckpt::Container c = ckpt::load(resume);
        c.load_store("model", agent.ps());
        load_agent_common(c, agent);
    }
    RunPaths paths = prepare_run_dir(cfg, run_dir);
    TrainDriver driver(cfg, paths);
    std::vector<PoWorkerState> ws(cfg.workers);
    const int n_slots = cfg.env.slot_count();
    long update_counter = 0;

    auto begin_belief = [&](int w) {
        ws[w].prev_action = env::kStay;
        if (agent.pf) {
            env::Observation obs = env::observe_po(driver.workers[w].env);
            Array b = gpl::build_batch_po(obs, n_slots);
            Array vis = gpl::visibility_column(obs);
            Tape t;
            auto bind = nn::bind_all(t, agent.pf->ps);
            ws[w].particles.clear();
            for (int i = 0; i < agent.pf->cfg.k_particles; ++i)
                ws[w].particles.push_back(
                    agent.pf->initial_particle(t, bind, b, vis, agent.act_rng, nullptr));
            ws[w].particles = detach_particles(ws[w].particles);
            ws[w].snap_particles = ws[w].particles;
        } else {
            const int hid = agent.ae ? agent.ae->cfg.hidden : agent.vae->cfg.hidden;
            ws[w].enc_state = nn::LstmState::zeros(n_slots, hid);
            ws[w].snap_state = ws[w].enc_state;
        }
    };

    LoopHooks hooks;
    hooks.act = [&](int w) {
        env::EnvState& e = driver.workers[w].env;
        env::Observation obs = env::observe_po(e);
        belief::PoRecord& rec = ws[w].pending;
        rec = belief::PoRecord{};
        rec.obs_batch = gpl::build_batch_po(obs, n_slots);
        rec.vis = gpl::visibility_column(obs);
        rec.state_batch = gpl::build_batch_po(env::state_view(e), n_slots);
        rec.learner_prev_action = ws[w].prev_action;
        for (const auto& a : obs.agents)
            if (a.visible && a.id != 0) rec.visible_slots.push_back(a.id);

        Tape t;
        auto bind = nn::bind_all(t, agent.ps());
        std::vector<double> q;
        if (agent.pf) {
            ws[w].particles = detach_particles(
                belief::pf_update(t, bind, *agent.pf, ws[w].particles, rec.obs_batch, rec.vis,
                                  ws[w].prev_action, agent.act_rng, nullptr));
            q = belief::pf_action_value(t, bind, *agent.pf, ws[w].particles);
        } else if (agent.ae) {
            auto [rho, nxt] = agent.ae->encode(t, bind, rec.obs_batch, ws[w].prev_action,
                                               ws[w].enc_state);
            ws[w].enc_state = detach_state(nxt);
            q = agent.ae->action_value(t, bind, rho);
        } else {
            belief::VaePosterior post =
                agent.vae->encode(t, bind, rec.obs_batch, ws[w].prev_action, ws[w].enc_state);
            ws[w].enc_state = detach_state(post.st);
            q = agent.vae->action_value(t, bind, post, agent.vae->cfg.n_samples, agent.act_rng,
                                        nullptr);
        }
        gpl::ActionSelect sel{gpl::ActionSelect::Mode::eps_greedy, eps_at(cfg, agent.step), 1.0};
        return gpl::select_action(q, sel, agent.act_rng);
    };
    hooks.record = [&](int w, int a, const env::JointAction& joint, const env::StepResult& res,
                       const env::EnvState& post_env) {
        belief::PoRecord rec = ws[w].pending;
        rec.learner_action = a;
        for (int slot : rec.visible_slots) {
            auto it = std::find_if(joint.begin(), joint.end(),
                                   [&](const auto& p) { return p.first == slot; });
            rec.visible_actions.push_back(it == joint.end() ? env::kStay : it->second);
        }
        rec.reward = res.reward;
        rec.done = res.done;
        if (!res.done) {
            env::Observation next = env::observe_po(post_env);
            rec.next_obs_batch = gpl::build_batch_po(next, n_slots);
            rec.next_vis = gpl::visibility_column(next);
        } else {
            rec.next_obs_batch = rec.obs_batch;
            rec.next_vis = rec.vis;
        }
        ws[w].prev_action = a;
        ws[w].window.push_back(std::move(rec));
        agent.step += 1;
    };
    hooks.after = [&](int w, bool done) {
        auto flush = [&](int w2) {
            if (ws[w2].window.empty()) return LossStats{};
            Tape t;
            auto bind = nn::bind_all(t, agent.ps());
            belief::DrawTrace trace;
            Rng loss_rng(mix_seed(cfg.seed, 31337, static_cast<uint64_t>(update_counter++)));
            belief::PoLosses l{};
            std::vector<int>*inf_scope, *st_scope, *ag_scope, *val_scope;
            if (agent.pf) {
                l = belief::pf_losses(t, bind, *agent.pf, ws[w2].window, ws[w2].snap_particles,
                                      cfg.gamma, loss_rng, &trace);
                inf_scope = &agent.pf->inf_scope;
                st_scope = &agent.pf->st_scope;
                ag_scope = &agent.pf->ag_scope;
                val_scope = &agent.pf->val_scope;
            } else if (agent.ae) {
                l = belief::ae_losses(t, bind, *agent.ae, ws[w2].window, ws[w2].snap_state,
                                      cfg.gamma, loss_rng, &trace);
                inf_scope = &agent.ae->inf_scope;
                st_scope = &agent.ae->st_scope;
                ag_scope = &agent.ae->ag_scope;
                val_scope = &agent.ae->val_scope;
            } else {
                l = belief::vae_losses(t, bind, *agent.vae, ws[w2].window, ws[w2].snap_state,
                                       cfg.gamma, loss_rng, &trace);
                inf_scope = &agent.vae->inf_scope;
                st_scope = &agent.vae->st_scope;
                ag_scope = &agent.vae->ag_scope;
                val_scope = &agent.vae->val_scope;
            }
            auto grads = gpl::zero_grads_like(agent.ps());
            auto g_inf = t.backward(l.inf);
            auto g_sr = t.backward(l.sr);
            auto g_nll = t.backward(l.nll);
            auto g_rl = t.backward(l.rl);
            gpl::accumulate_scope(g_inf, bind, *inf_scope, grads);
            std::vector<int> sr_scope = dedup_union({inf_scope, st_scope});
            gpl::accumulate_scope(g_sr, bind, sr_scope, grads);
            gpl::accumulate_scope(g_nll, bind, *ag_scope, grads);
            gpl::accumulate_scope(g_rl, bind, *val_scope, grads);
            agent.opt.step(agent.ps(), grads,
                           dedup_union({inf_scope, st_scope, ag_scope, val_scope}));
            LossStats out;
            out.inf = l.inf.scalar();
            out.sr = l.sr.scalar();
            out.nll = l.nll.scalar();
            out.value = l.rl.scalar();
            ws[w2].window.clear();
            if (agent.pf) ws[w2].snap_particles = ws[w2].particles;
            else ws[w2].snap_state = ws[w2].enc_state;
            return out;
        };
        if (done) {
            LossStats ls = flush(w);
            if (ls.value != 0 || ls.inf != 0) driver.last_losses = ls;
            begin_belief(w);
        } else if (static_cast<int>(ws[w].window.size()) >= cfg.t_update) {
            LossStats ls = flush(w);
            if (ls.value != 0 || ls.inf != 0) driver.last_losses = ls;
        }
    };
    hooks.maybe_update = [&]() -> LossStats { return LossStats{}; };
    hooks.sync_target = nullptr;
    hooks.evaluate = [&]() {
        PolicyFactory f = [&]() -> std::unique_ptr<Policy> {
            if (agent.pf)
                return std::make_unique<PfPolicy>(agent.pf.get(), agent.pf->cfg.k_particles,
                                                  mix_seed(cfg.seed, 42, 42));
            if (agent.ae) return std::make_unique<AePolicy>(agent.ae.get());
            return std::make_unique<VaePolicy>(agent.vae.get(), mix_seed(cfg.seed, 43, 43));
        };
        return evaluate_policy(f, cfg.env, cfg.eval_episodes,
                               mix_seed(cfg.seed, 9999, static_cast<uint64_t>(agent.step)));
    };
    hooks.checkpoint = [&](const std::string& path) { save_checkpoint(agent, path); };

    driver.init_workers();
    for (int w = 0; w < cfg.workers; ++w) begin_belief(w);
    driver.run(hooks, agent.step);

    RunResult rr;
    rr.run_dir = paths.dir;
    rr.metrics = driver.rows;
    rr.best_checkpoint = driver.best_ckpt;
    return rr;
}

}  // namespace

std::filesystem::path default_run_dir(const RunConfig& cfg) {
    const char* root = std::getenv("OAT_RUN_ROOT");
    std::filesystem::path base = root != nullptr ? root : "runs";
    std::ostringstream name;
    name << cfg.algorithm << "_" << env::env_kind_name(cfg.env.kind) << "_seed" << cfg.seed << "_"
         << std::hex << (fnv1a(cfg.resolved_text()) & 0xffffffULL);
    return base / name.str();
}

RunResult train_run(const RunConfig& cfg, const std::string& run_dir_override,
                    const std::string& resume_from) {
    cfg.validate();
    AlgoSpec spec = cfg.algo();
    switch (spec.algo) {
        case Algo::gpl_q:
        case Algo::gpl_spi: return run_gpl(cfg, run_dir_override, resume_from);
        case Algo::ql:
        case Algo::ql_am: return run_ql(cfg, run_dir_override, resume_from);
        default: return run_po(cfg, run_dir_override, resume_from);
    }
}

// --- checkpoint-driven evaluation -----------------------------------------

namespace {

struct LoadedAgent {
    RunConfig cfg;
    AlgoSpec spec;
    std::shared_ptr<gpl::GplModel> gpl_model;
    std::shared_ptr<gpl::QlModel> ql_model;
    std::shared_ptr<belief::PfModel> pf;
    std::shared_ptr<belief::AeModel> ae;
    std::shared_ptr<belief::VaeModel> vae;
};

LoadedAgent load_any(const std::string& ckpt_path) {
    ckpt::Container c = ckpt::load(ckpt_path);
    LoadedAgent la;
    la.cfg = config_from_checkpoint(ckpt_path);
    la.spec = la.cfg.algo();
    switch (la.spec.algo) {
        case Algo::gpl_q:
        case Algo::gpl_spi: {
            GplAgent a = GplAgent::make(la.cfg);
            c.load_store("model", a.model.ps);
            la.gpl_model = std::make_shared<gpl::GplModel>(std::move(a.model));
            break;
        }
        case Algo::ql:
        case Algo::ql_am: {
            QlAgent a = QlAgent::make(la.cfg);
            c.load_store("model", a.model.ps);
            la.ql_model = std::make_shared<gpl::QlModel>(std::move(a.model));
            break;
        }
        default: {
            PoAgent a = PoAgent::make(la.cfg);
            c.load_store("model", a.ps());
            la.pf = std::move(a.pf);
            la.ae = std::move(a.ae);
            la.vae = std::move(a.vae);
            break;
        }
    }
    return la;
}

void check_env_compatible(const LoadedAgent& la, const env::EnvConfig& env_cfg) {
    if (env_cfg.kind != la.cfg.env.kind)
        throw std::runtime_error("checkpoint/environment mismatch: different environment kind");
    if (gpl_feat_width(env_cfg) != gpl_feat_width(la.cfg.env))
        throw std::runtime_error("checkpoint/environment mismatch: feature width differs");
    if (la.spec.is_belief() || la.spec.algo == Algo::ql || la.spec.algo == Algo::ql_am) {
        if (env_cfg.slot_count() != la.cfg.env.slot_count())
            throw std::runtime_error("checkpoint/environment mismatch: slot count differs");
    }
    if (la.spec.is_belief() && !env_cfg.partial_obs)
        throw std::runtime_error("belief checkpoints require partial_obs environments");
}

}  // namespace

PolicyFactory policy_from_checkpoint(const std::string& ckpt_path,
                                     const env::EnvConfig& env_cfg) {
    auto la = std::make_shared<LoadedAgent>(load_any(ckpt_path));
    check_env_compatible(*la, env_cfg);
    const bool po = env_cfg.partial_obs;
    return [la, po]() -> std::unique_ptr<Policy> {
        switch (la->spec.algo) {
            case Algo::gpl_q:
            case Algo::gpl_spi:
                return std::make_unique<GplPolicy>(la->gpl_model.get(), po, gpl::ActionSelect{});
            case Algo::ql:
            case Algo::ql_am: return std::make_unique<QlPolicy>(la->ql_model.get());
            case Algo::pf_gpl:
                return std::make_unique<PfPolicy>(la->pf.get(), la->pf->cfg.k_particles, 4242);
            case Algo::ae_gpl: return std::make_unique<AePolicy>(la->ae.get());
            default: return std::make_unique<VaePolicy>(la->vae.get(), 4343);
        }
    };
}

EvalResult eval_checkpoint(const std::string& ckpt_path, const env::EnvConfig& env_cfg,
                           int episodes, uint64_t seed, const std::string& episode_log_path) {
    PolicyFactory f = policy_from_checkpoint(ckpt_path, env_cfg);
    return evaluate_policy(f, env_cfg, episodes, seed, episode_log_path);
}

// --- reconstruction diagnostics ------------------------------------------

double action_logprob_step(const BeliefPrediction& pred,
                           const std::vector<std::pair<int, int>>& teammate_actions) {
    double total = 0;
    for (auto [slot, action] : teammate_actions) {
        const std::vector<double>* probs = nullptr;
        for (const auto& [s, p] : pred.action_probs)
            if (s == slot) probs = &p;
        if (probs == nullptr || action < 0 || action >= static_cast<int>(probs->size()))
            throw std::runtime_error("action_logprob_step: missing prediction for slot " +
                                     std::to_string(slot));
        total += std::log((*probs)[action]);
    }
    return total;
}

double existence_sqerr_step(const std::vector<double>& predicted,
                            const std::vector<double>& truth) {
    if (predicted.size() != truth.size())
        throw std::runtime_error("existence_sqerr_step: size mismatch");
    double total = 0;
    for (size_t i = 0; i < predicted.size(); ++i)
        total += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    return total;
}

namespace {

// The privileged state batch carries one visibility/existence flag per slot;
// reconstruction heads read the estimate back out of that column.
int existence_column(const env::EnvConfig& cfg) {
    return cfg.slot_count() + env::agent_feat_width(cfg.kind);
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

ReconstructionReport reconstruction_eval(const std::string& ckpt_path,
                                         const std::string& episode_log_path) {
    LoadedAgent la = load_any(ckpt_path);
    if (!la.spec.is_belief())
        throw std::runtime_error("reconstruction_eval: unsupported for fully observed "
                                 "checkpoints");
    env::EpisodeLog log = env::parse_episode_log(episode_log_path);
    check_env_compatible(la, log.cfg);
    const int n_slots = log.cfg.slot_count();
    const int ex_col = existence_column(log.cfg);

    env::EnvState s = env::reset(log.cfg, log.seed);
    belief::ParticleSet particles;
    nn::LstmState enc_state;
    Rng prng(mix_seed(log.seed, 7, 7));
    int prev_action = env::kStay;

    ReconstructionReport rep;
    for (const auto& recstep : log.steps) {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, n_slots);
        Array vis = gpl::visibility_column(obs);
        Array state_b = gpl::build_batch_po(env::state_view(s), n_slots);

        BeliefPrediction pred;
        Tape t;
        if (la.pf) {
            auto bind = nn::bind_all(t, la.pf->ps);
            if (particles.empty())
                for (int i = 0; i < la.pf->cfg.k_particles; ++i)
                    particles.push_back(
                        la.pf->initial_particle(t, bind, b, vis, prng, nullptr));
            else
                particles = belief::pf_update(t, bind, *la.pf, particles, b, vis, prev_action,
                                              prng, nullptr);
            particles = detach_particles(particles);
            auto w = belief::normalized_weights(particles);
            // weight-averaged per-slot action probabilities and existence
            std::vector<std::vector<double>> probs(n_slots,
                                                   std::vector<double>(la.pf->cfg.n_actions, 0.0));
            pred.existence.assign(n_slots, 0.0);
            double state_lp = -HUGE_VAL;
            for (size_t k = 0; k < particles.size(); ++k) {
                Array pk = la.pf->target_action_probs(t, bind, particles[k]);
                for (int j = 0; j < n_slots; ++j) {
                    for (int a = 0; a < la.pf->cfg.n_actions; ++a)
                        probs[j][a] += w[k] * pk.at(j, a);
                    pred.existence[j] += w[k] * particles[k].exists.at(j, 0);
                }
                Array din = t.concat_cols({particles[k].state,
                                           Array::zeros(n_slots, la.pf->cfg.n_actions)});
                // use the particle's own previous actions for the head input
                din = t.concat_cols(
                    {particles[k].state,
                     [&] {
                         Array oh(n_slots, la.pf->cfg.n_actions);
                         for (int j = 0; j < n_slots; ++j)
                             oh.at(j, particles[k].prev_actions[j]) = 1.0;
                         return oh;
                     }()});
                nn::GaussianOut g = nn::gaussian_head(t, bind, la.pf->sr_mu, la.pf->sr_var, din);
                double ll = nn::gaussian_log_density(t, state_b, g).scalar();
                double term = std::log(std::max(w[k], 1e-300)) + ll;
                state_lp = std::max(state_lp, term) +
                           std::log1p(std::exp(std::min(state_lp, term) -
                                               std::max(state_lp, term)));
            }
            pred.state_logprob = state_lp;
            for (int j = 1; j < n_slots; ++j)
                pred.action_probs.emplace_back(j, probs[j]);
        } else if (la.ae) {
            auto bind = nn::bind_all(t, la.ae->ps);
            auto [rho, nxt] = la.ae->encode(t, bind, b, prev_action, enc_state.rows() == 0
                                                                        ? nn::LstmState::zeros(
                                                                              n_slots,
                                                                              la.ae->cfg.hidden)
                                                                        : enc_state);
            enc_state = detach_state(nxt);
            Array probs = la.ae->action_probs(t, bind, rho);
            for (int j = 1; j < n_slots; ++j) {
                std::vector<double> row(la.ae->cfg.n_actions);
                for (int a = 0; a < la.ae->cfg.n_actions; ++a) row[a] = probs.at(j, a);
                pred.action_probs.emplace_back(j, row);
            }
            Array srp = la.ae->sr.apply(t, bind, rho);
            pred.existence.assign(n_slots, 0.0);
            for (int j = 0; j < n_slots; ++j) pred.existence[j] = clamp01(srp.at(j, ex_col));
            // squared error reported as a unit-variance Gaussian log density
            double se = 0;
            for (size_t i = 0; i < srp.data.size(); ++i) {
                double d = srp.data[i] - state_b.data[i];
                se += d * d;
            }
            pred.state_logprob =
                -0.5 * se - 0.5 * static_cast<double>(srp.data.size()) * std::log(2 * M_PI);
        } else {
            auto bind = nn::bind_all(t, la.vae->ps);
            belief::VaePosterior post =
                la.vae->encode(t, bind, b, prev_action, enc_state.rows() == 0
                                                            ? nn::LstmState::zeros(
                                                                  n_slots, la.vae->cfg.hidden)
                                                            : enc_state);
            enc_state = detach_state(post.st);
            Array z = post.q.mu;  // posterior mode
            Array probs = la.vae->action_probs(t, bind, z);
            for (int j = 1; j < n_slots; ++j) {
                std::vector<double> row(la.vae->cfg.n_actions);
                for (int a = 0; a < la.vae->cfg.n_actions; ++a) row[a] = probs.at(j, a);
                pred.action_probs.emplace_back(j, row);
            }
            nn::GaussianOut g = nn::gaussian_head(t, bind, la.vae->sr_mu, la.vae->sr_var, z);
            pred.state_logprob = nn::gaussian_log_density(t, state_b, g).scalar();
            pred.existence.assign(n_slots, 0.0);
            for (int j = 0; j < n_slots; ++j) pred.existence[j] = clamp01(g.mu.at(j, ex_col));
        }

        // ground truth from the log: all existing teammates and their actions
        std::vector<std::pair<int, int>> actions;
        std::vector<double> exist_truth(n_slots, 0.0);
        exist_truth[0] = 1.0;
        for (auto [id, tag] : recstep.present)
            if (id != 0) exist_truth[id] = 1.0;
        for (auto [id, a] : recstep.action)
            if (id != 0) actions.emplace_back(id, a);

        ReconstructionStep out;
        out.action_logprob = action_logprob_step(pred, actions);
        out.state_logprob = pred.state_logprob;
        out.existence_sqerr = existence_sqerr_step(pred.existence, exist_truth);
        rep.steps.push_back(out);

        for (auto [id, a] : recstep.action)
            if (id == 0) prev_action = a;
        env::step(s, recstep.action);
    }
    if (!rep.steps.empty()) {
        for (const auto& st : rep.steps) {
            rep.mean_action_logprob += st.action_logprob;
            rep.mean_state_logprob += st.state_logprob;
            rep.mean_existence_sqerr += st.existence_sqerr;
        }
        rep.mean_action_logprob /= static_cast<double>(rep.steps.size());
        rep.mean_state_logprob /= static_cast<double>(rep.steps.size());
        rep.mean_existence_sqerr /= static_cast<double>(rep.steps.size());
    }
    return rep;
}

void dump_belief_trace(const std::string& ckpt_path, const std::string& episode_log_path,
                       const std::string& out_path) {
    LoadedAgent la = load_any(ckpt_path);
    if (!la.spec.is_belief())
        throw std::runtime_error("dump_belief_trace: belief checkpoints only");
    env::EpisodeLog log = env::parse_episode_log(episode_log_path);
    const int n_slots = log.cfg.slot_count();
    env::EnvState s = env::reset(log.cfg, log.seed);
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + out_path);

    belief::ParticleSet particles;
    nn::LstmState enc_state;
    Rng prng(mix_seed(log.seed, 7, 7));
    int prev_action = env::kStay;
    int step_idx = 0;
    for (const auto& recstep : log.steps) {
        env::Observation obs = env::observe_po(s);
        Array b = gpl::build_batch_po(obs, n_slots);
        Array vis = gpl::visibility_column(obs);
        Tape t;
        nlohmann::json j;
        j["t"] = step_idx++;
        if (la.pf) {
            auto bind = nn::bind_all(t, la.pf->ps);
            if (particles.empty())
                for (int i = 0; i < la.pf->cfg.k_particles; ++i)
                    particles.push_back(la.pf->initial_particle(t, bind, b, vis, prng, nullptr));
            else
                particles = belief::pf_update(t, bind, *la.pf, particles, b, vis, prev_action,
                                              prng, nullptr);
            particles = detach_particles(particles);
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : particles) {
                nlohmann::json pj;
                pj["log_w"] = p.log_w.data[0];
                pj["e"] = p.exists.data;
                pj["s"] = p.state.data;
                pj["theta"] = p.types.data;
                pj["a_prev"] = p.prev_actions;
                arr.push_back(pj);
            }
            j["particles"] = arr;
        } else if (la.ae) {
            auto bind = nn::bind_all(t, la.ae->ps);
            if (enc_state.rows() == 0)
                enc_state = nn::LstmState::zeros(n_slots, la.ae->cfg.hidden);
            auto [rho, nxt] = la.ae->encode(t, bind, b, prev_action, enc_state);
            enc_state = detach_state(nxt);
            j["rho"] = rho.data;
        } else {
            auto bind = nn::bind_all(t, la.vae->ps);
            if (enc_state.rows() == 0)
                enc_state = nn::LstmState::zeros(n_slots, la.vae->cfg.hidden);
            belief::VaePosterior post = la.vae->encode(t, bind, b, prev_action, enc_state);
            enc_state = detach_state(post.st);
            j["mu"] = post.q.mu.data;
            j["var"] = post.q.var.data;
        }
        os << j.dump() << "\n";
        for (auto [id, a] : recstep.action)
            if (id == 0) prev_action = a;
        env::step(s, recstep.action);
    }
}

// --- pairwise-utility probe ---------------------------------------------

SlotPredicate SlotPredicate::parse(const std::string& s) {
    SlotPredicate p;
    if (s == "any") p.kind = Kind::any;
    else if (s == "learner") p.kind = Kind::learner;
    else if (s == "teammate") p.kind = Kind::teammate;
    else if (s.rfind("type=", 0) == 0) {
        p.kind = Kind::type_tag;
        p.type_tag = std::stoi(s.substr(5));
    } else {
        throw std::runtime_error("bad slot predicate '" + s +
                                 "' (expected any, learner, teammate or type=<n>)");
    }
    return p;
}

bool SlotPredicate::matches(int slot_id, int tag) const {
    switch (kind) {
        case Kind::any: return true;
        case Kind::learner: return slot_id == 0;
        case Kind::teammate: return slot_id != 0;
        case Kind::type_tag: return tag == type_tag;
    }
    return false;
}

ProbeResult pairwise_probe(const std::string& ckpt_path,
                           const std::vector<std::string>& episode_logs, int probe_action,
                           const SlotPredicate& pred_j, const SlotPredicate& pred_k) {
    LoadedAgent la = load_any(ckpt_path);
    if (!la.gpl_model)
        throw std::runtime_error(
            "pairwise_probe: checkpoint has no pairwise utility head over type vectors");
    const gpl::GplModel& model = *la.gpl_model;
    if (probe_action < 0 || probe_action >= model.cfg.n_actions)
        throw std::runtime_error("pairwise_probe: probe action out of range");

    double total = 0;
    long pairs = 0;
    for (const std::string& path : episode_logs) {
        for (const env::EpisodeLog& log : env::parse_episode_logs(path)) {
            env::EnvState s = env::reset(log.cfg, log.seed);
            gpl::TypeMemory mem;
            bool fresh = true;
            for (const auto& recstep : log.steps) {
                StepView view = gpl_step_view(s, false);
                Tape t;
                auto bind = nn::bind_all(t, model.ps);
                if (fresh) {
                    mem = gpl::TypeMemory::zeros(view.ids, model.cfg.type_width);
                    fresh = false;
                } else if (mem.ids != view.ids) {
                    auto [joins, leaves] = id_diff(mem.ids, view.ids);
                    mem = gpl::postprocess_membership(t, mem, joins, leaves);
                }
                nn::LstmState nv = model.lstm_value.step(t, bind, view.batch, {mem.h, mem.c});
                mem = detach_mem(gpl::TypeMemory{view.ids, nv.h, nv.c});

                gpl::CgHeads cg{&model.beta, &model.delta, model.cfg.k_rank,
                                model.cfg.n_actions};
                int learner_row = mem.row_of(0);
                std::map<int, int> tags;
                for (auto [id, tag] : recstep.present) tags[id] = tag;
                std::vector<Array> factors;
                for (size_t r = 0; r < view.ids.size(); ++r)
                    factors.push_back(gpl::pairwise_factor(t, bind, cg, nv.h,
                                                           static_cast<int>(r), learner_row));
                for (size_t rj = 0; rj < view.ids.size(); ++rj)
                    for (size_t rk = 0; rk < view.ids.size(); ++rk) {
                        if (rj == rk) continue;
                        int id_j = view.ids[rj], id_k = view.ids[rk];
                        if (!pred_j.matches(id_j, tags.count(id_j) ? tags[id_j] : -1)) continue;
                        if (!pred_k.matches(id_k, tags.count(id_k) ? tags[id_k] : -1)) continue;
                        Array q = gpl::pairwise_utility(t, factors[rj], factors[rk]);
                        double mean = 0;
                        for (int a = 0; a < model.cfg.n_actions; ++a)
                            mean += q.at(probe_action, a);
                        total += mean / model.cfg.n_actions;
                        pairs += 1;
                    }
                env::step(s, recstep.action);
            }
        }
    }
    ProbeResult res;
    if (pairs > 0) {
        res.empty = false;
        res.value = total / static_cast<double>(pairs);
        res.pair_count = pairs;
    }
    return res;
}

env::ReplayReport replay_verify(const std::string& episode_log_path) {
    std::vector<env::EpisodeLog> logs = env::parse_episode_logs(episode_log_path);
    for (const auto& log : logs) {
        env::ReplayReport rep = env::verify_episode(log);
        if (!rep.ok) return rep;
    }
    return env::ReplayReport{};
}

}  // namespace oat::harness
