#include "oat/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace oat::harness {

AlgoSpec parse_algorithm(const std::string& s) {
    AlgoSpec spec;
    spec.name = s;
    if (s == "gpl-q") spec.algo = Algo::gpl_q;
    else if (s == "gpl-spi") spec.algo = Algo::gpl_spi;
    else if (s == "ql") spec.algo = Algo::ql;
    else if (s == "ql-am") spec.algo = Algo::ql_am;
    else if (s == "ae-gpl") spec.algo = Algo::ae_gpl;
    else if (s == "vae-gpl") spec.algo = Algo::vae_gpl;
    else if (s.rfind("pf-gpl-", 0) == 0) {
        spec.algo = Algo::pf_gpl;
        try {
            spec.k_particles = std::stoi(s.substr(7));
        } catch (...) {
            throw ConfigError("algorithm: bad particle count in '" + s + "'");
        }
        if (spec.k_particles < 1) throw ConfigError("algorithm: particle count must be >= 1");
    } else {
        throw ConfigError("algorithm: unknown value '" + s +
                          "' (expected gpl-q, gpl-spi, ql, ql-am, pf-gpl-<k>, ae-gpl, vae-gpl)");
    }
    return spec;
}

int RunConfig::resolved_k_rank() const {
    if (k_rank > 0) return k_rank;
    return std::min(6, env::num_actions(env.kind) - 1);
}

void RunConfig::validate() const {
    AlgoSpec spec = algo();
    if (spec.is_belief() && !env.partial_obs)
        throw ConfigError("algorithm: " + algorithm + " requires partial_obs=true");
    if ((spec.algo == Algo::ql || spec.algo == Algo::ql_am) && env.partial_obs)
        throw ConfigError("algorithm: " + algorithm + " runs under full observability only");
    if (env.open.max_agents_train < 1 || env.open.max_agents_eval < 1)
        throw ConfigError("max_agents: must be >= 1");
    if (env.open.life_lo > env.open.life_hi) throw ConfigError("lifetime range: lo > hi");
    if (env.open.wait_lo > env.open.wait_hi) throw ConfigError("wait range: lo > hi");
    if (env.open.life_lo < 1) throw ConfigError("lifetime range: lo must be >= 1");
    if (total_steps < 1) throw ConfigError("total_steps: must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
    if (eval_episodes < 1) throw ConfigError("eval_episodes: must be >= 1");
    if (t_update < 1) throw ConfigError("t_update: must be >= 1");
    if (t_targ_update < 1) throw ConfigError("t_targ_update: must be >= 1");
    if (workers < 1) throw ConfigError("workers: must be >= 1");
    if (lr < 0) throw ConfigError("lr: must not be negative");
    if (gamma < 0 || gamma >= 1) throw ConfigError("gamma: must lie in [0, 1)");
    if (tau <= 0) throw ConfigError("tau: must be positive");
    if (eps_start < 0 || eps_start > 1 || eps_final < 0 || eps_final > 1)
        throw ConfigError("eps: must lie in [0, 1]");
    if (resolved_k_rank() >= env::num_actions(env.kind))
        throw ConfigError("k_rank: must stay below the action count");
    if (type_width < 1 || hidden < 1) throw ConfigError("widths: must be >= 1");
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    os << "env=" << env::env_kind_name(env.kind) << "\n";
    os << "rows=" << env.rows << "\ncols=" << env.cols << "\n";
    os << "max_agents_train=" << env.open.max_agents_train << "\n";
    os << "max_agents_eval=" << env.open.max_agents_eval << "\n";
    os << "life_lo=" << env.open.life_lo << "\nlife_hi=" << env.open.life_hi << "\n";
    os << "wait_lo=" << env.open.wait_lo << "\nwait_hi=" << env.open.wait_hi << "\n";
    os << "partial_obs=" << (env.partial_obs ? 1 : 0) << "\n";
    os << "eval_openness=" << (env.eval_openness ? 1 : 0) << "\n";
    os << "episode_len=" << env.episode_len << "\n";
    os << "num_objects=" << env.num_objects << "\n";
    os << "mask_manhattan=" << env.mask_manhattan << "\nmask_box=" << env.mask_box << "\n";
    os << "algorithm=" << algorithm << "\n";
    os << "total_steps=" << total_steps << "\neval_every=" << eval_every << "\n";
    os << "eval_episodes=" << eval_episodes << "\n";
    os << "t_update=" << t_update << "\nt_targ_update=" << t_targ_update << "\n";
    os << "lr=" << lr << "\ngamma=" << gamma << "\n";
    os << "eps_start=" << eps_start << "\neps_final=" << eps_final << "\neps_frac=" << eps_frac
       << "\n";
    os << "tau=" << tau << "\nworkers=" << workers << "\nseed=" << seed << "\n";
    os << "type_width=" << type_width << "\nhidden=" << hidden << "\nk_rank=" << k_rank << "\n";
    os << "n_z_samples=" << n_z_samples << "\nlatent_width=" << latent_width << "\n";
    os << "embed_width=" << embed_width << "\nbelief_hidden=" << belief_hidden << "\n";
    os << "belief_type_width=" << belief_type_width << "\n";
    os << "log_episodes=" << (log_episodes ? 1 : 0) << "\n";
    os << "wallclock=" << (wallclock ? 1 : 0) << "\n";
    return os.str();
}

namespace {

void parse_into(const std::string& path, std::map<std::string, std::string>& kv, int depth) {
    if (depth > 8) throw ConfigError("config include depth exceeded at " + path);
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line.rfind("include ", 0) == 0) {
            std::filesystem::path inc = trim(line.substr(8));
            if (inc.is_relative()) inc = std::filesystem::path(path).parent_path() / inc;
            parse_into(inc.string(), kv, depth + 1);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::map<std::string, std::string> kv;
    parse_into(path, kv, 0);
    return kv;
}

RunConfig config_from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [key, v] : kv) {
        if (key == "env") cfg.env.kind = env::env_kind_from(v);
        else if (key == "rows") cfg.env.rows = static_cast<int>(parse_long(key, v));
        else if (key == "cols") cfg.env.cols = static_cast<int>(parse_long(key, v));
        else if (key == "max_agents_train")
            cfg.env.open.max_agents_train = static_cast<int>(parse_long(key, v));
        else if (key == "max_agents_eval")
            cfg.env.open.max_agents_eval = static_cast<int>(parse_long(key, v));
        else if (key == "life_lo") cfg.env.open.life_lo = static_cast<int>(parse_long(key, v));
        else if (key == "life_hi") cfg.env.open.life_hi = static_cast<int>(parse_long(key, v));
        else if (key == "wait_lo") cfg.env.open.wait_lo = static_cast<int>(parse_long(key, v));
        else if (key == "wait_hi") cfg.env.open.wait_hi = static_cast<int>(parse_long(key, v));
        else if (key == "partial_obs") cfg.env.partial_obs = parse_bool(key, v);
        else if (key == "eval_openness") cfg.env.eval_openness = parse_bool(key, v);
        else if (key == "episode_len") cfg.env.episode_len = static_cast<int>(parse_long(key, v));
        else if (key == "num_objects") cfg.env.num_objects = static_cast<int>(parse_long(key, v));
        else if (key == "mask_manhattan")
            cfg.env.mask_manhattan = static_cast<int>(parse_long(key, v));
        else if (key == "mask_box") cfg.env.mask_box = static_cast<int>(parse_long(key, v));
        else if (key == "algorithm") cfg.algorithm = v;
        else if (key == "total_steps") cfg.total_steps = parse_long(key, v);
        else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_long(key, v));
        else if (key == "eval_episodes")
            cfg.eval_episodes = static_cast<int>(parse_long(key, v));
        else if (key == "t_update") cfg.t_update = static_cast<int>(parse_long(key, v));
        else if (key == "t_targ_update")
            cfg.t_targ_update = static_cast<int>(parse_long(key, v));
        else if (key == "lr") cfg.lr = parse_double(key, v);
        else if (key == "gamma") cfg.gamma = parse_double(key, v);
        else if (key == "eps_start") cfg.eps_start = parse_double(key, v);
        else if (key == "eps_final") cfg.eps_final = parse_double(key, v);
        else if (key == "eps_frac") cfg.eps_frac = parse_double(key, v);
        else if (key == "tau") cfg.tau = parse_double(key, v);
        else if (key == "workers") cfg.workers = static_cast<int>(parse_long(key, v));
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_long(key, v));
        else if (key == "type_width") cfg.type_width = static_cast<int>(parse_long(key, v));
        else if (key == "hidden") cfg.hidden = static_cast<int>(parse_long(key, v));
        else if (key == "k_rank") cfg.k_rank = static_cast<int>(parse_long(key, v));
        else if (key == "n_z_samples") cfg.n_z_samples = static_cast<int>(parse_long(key, v));
        else if (key == "latent_width") cfg.latent_width = static_cast<int>(parse_long(key, v));
        else if (key == "embed_width") cfg.embed_width = static_cast<int>(parse_long(key, v));
        else if (key == "belief_hidden")
            cfg.belief_hidden = static_cast<int>(parse_long(key, v));
        else if (key == "belief_type_width")
            cfg.belief_type_width = static_cast<int>(parse_long(key, v));
        else if (key == "log_episodes") cfg.log_episodes = parse_bool(key, v);
        else if (key == "wallclock") cfg.wallclock = parse_bool(key, v);
        else if (key == "out_dir") cfg.out_dir = v;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::map<std::string, std::string> kv;
    if (!path.empty()) kv = parse_config_file(path);
    for (const std::string& ov : overrides) {
        size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        kv[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    return config_from_map(kv);
}

uint64_t fnv1a(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace oat::harness
