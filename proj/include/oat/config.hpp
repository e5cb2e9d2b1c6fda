#pragma once

#include <map>
#include <string>
#include <vector>

#include "oat/env.hpp"

// Line-oriented key=value configuration with include support. Every key is
// typed, documented in the README and validated here; unknown keys are
// rejected with a key-level message.

namespace oat::harness {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Algo { gpl_q, gpl_spi, ql, ql_am, pf_gpl, ae_gpl, vae_gpl };

struct AlgoSpec {
    Algo algo = Algo::gpl_q;
    int k_particles = 10;  // pf-gpl-{1,5,10}
    std::string name;
    bool is_belief() const { return algo == Algo::pf_gpl || algo == Algo::ae_gpl ||
                                    algo == Algo::vae_gpl; }
};

AlgoSpec parse_algorithm(const std::string& s);

struct RunConfig {
    env::EnvConfig env;
    std::string algorithm = "gpl-q";

    long total_steps = 200000;
    int eval_every = 10000;
    int eval_episodes = 100;
    int t_update = 8;
    int t_targ_update = 1000;
    double lr = 2.5e-4;
    double gamma = 0.99;
    double eps_start = 1.0, eps_final = 0.05, eps_frac = 0.2;
    double tau = 0.2;  // soft-policy-iteration temperature
    int workers = 1;
    uint64_t seed = 0;

    int type_width = 64;
    int hidden = 64;
    int k_rank = 0;  // 0 resolves to min(6, |A| - 1)

    int n_z_samples = 5;
    int latent_width = 16;
    int embed_width = 32;
    int belief_hidden = 32;
    int belief_type_width = 16;

    bool log_episodes = true;
    bool wallclock = false;  // off by default so metrics stay bit-reproducible
    std::string out_dir;

    AlgoSpec algo() const { return parse_algorithm(algorithm); }
    int resolved_k_rank() const;
    void validate() const;
    std::string resolved_text() const;  // canonical key=value dump
};

// Raw parse: file with `include` lines plus key=value overrides.
std::map<std::string, std::string> parse_config_file(const std::string& path);
RunConfig config_from_map(const std::map<std::string, std::string>& kv);
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

uint64_t fnv1a(const std::string& text);

}  // namespace oat::harness
