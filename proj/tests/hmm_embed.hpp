#pragma once

// Embeds a 2-state discrete HMM in the particle format so the filter can be
// checked against the exact forward algorithm. The proposal equals the
// transition prior, so the importance corrections vanish and the weight is
// the emission log likelihood.

#include "oat/belief.hpp"
#include "oracles.hpp"

namespace hmm_embed {

using namespace oat;
using oat::ad::Array;
using oat::ad::Tape;
using oat::belief::ActionSampleResult;
using oat::belief::BeliefModels;
using oat::belief::DrawTrace;
using oat::belief::ExistStateResult;
using oat::belief::Particle;
using oat::belief::ParticleSet;
using oat::belief::TypeResult;

struct HmmModels : BeliefModels {
    oracle::Hmm2 hmm;

    ActionSampleResult sample_prev_actions(Tape&, const nn::Binding&, const Particle& p,
                                           const Array&, int, Rng&, DrawTrace*) const override {
        ActionSampleResult r;
        r.actions = p.prev_actions;
        r.log_prop = Array::scalar_of(0.0);
        r.log_targ = Array::scalar_of(0.0);
        return r;
    }
    ExistStateResult sample_exist_state(Tape&, const nn::Binding&, const Particle& p,
                                        const std::vector<int>&, const Array&, int, Rng& rng,
                                        DrawTrace* trace) const override {
        int prev = p.state.at(0, 0) > 0.5 ? 1 : 0;
        auto draw = [&] { return rng.uniform() < hmm.trans[prev][1] ? 1 : 0; };
        int nxt = trace ? trace->take_int(draw) : draw();
        ExistStateResult r;
        r.exists = Array::full(1, 1, 1.0);
        r.state_hat = Array::full(1, 1, static_cast<double>(nxt));
        double lp = std::log(hmm.trans[prev][nxt]);
        r.log_prop = Array::scalar_of(lp);
        r.log_targ = Array::scalar_of(lp);
        return r;
    }
    TypeResult update_types(Tape&, const nn::Binding&, const Particle& p, const Array&,
                            const Array&, const std::vector<int>&, const Array&,
                            int) const override {
        return TypeResult{p.types, p.type_h, p.type_c};
    }
    Array observation_loglik(Tape&, const nn::Binding&, const Array& obs_batch, const Array&,
                             const Array& state, const std::vector<int>&) const override {
        int x = state.at(0, 0) > 0.5 ? 1 : 0;
        int y = static_cast<int>(obs_batch.at(0, 0));
        return Array::scalar_of(std::log(hmm.emit[x][y]));
    }
};

inline Particle hmm_particle(int x) {
    Particle p;
    p.prev_actions = {0};
    p.exists = Array::full(1, 1, 1.0);
    p.state = Array::full(1, 1, static_cast<double>(x));
    p.types = Array::zeros(1, 1);
    p.type_h = Array::zeros(1, 1);
    p.type_c = Array::zeros(1, 1);
    p.log_w = Array::scalar_of(0.0);
    return p;
}

// Average TV distance of the filtered posterior to the exact forward
// posterior over `steps` steps and `seeds` seeds.
inline double pf_tv(const oracle::Hmm2& hmm, int K, int steps, int seeds) {
    double total = 0;
    int count = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng world(100 + seed);
        std::vector<int> obs;
        int x = world.uniform() < hmm.prior[1] ? 1 : 0;
        for (int s = 0; s < steps; ++s) {
            x = world.uniform() < hmm.trans[x][1] ? 1 : 0;
            obs.push_back(world.uniform() < hmm.emit[x][1] ? 1 : 0);
        }
        auto exact = hmm.forward(obs);

        HmmModels models;
        models.hmm = hmm;
        nn::ParamStore empty;
        Rng prng(5000 + seed);
        ParticleSet u;
        for (int k = 0; k < K; ++k) u.push_back(hmm_particle(prng.uniform() < hmm.prior[1]));
        for (int s = 0; s < steps; ++s) {
            Tape t;
            auto bind = nn::bind_all(t, empty);
            Array y = Array::full(1, 1, static_cast<double>(obs[s]));
            u = belief::pf_update(t, bind, models, u, y, Array::full(1, 1, 1.0), 0, prng,
                                  nullptr);
            auto w = belief::normalized_weights(u);
            double p1 = 0;
            for (size_t k = 0; k < u.size(); ++k)
                if (u[k].state.at(0, 0) > 0.5) p1 += w[k];
            total += std::abs(p1 - exact[s][1]);  // TV distance for two states
            ++count;
        }
    }
    return total / count;
}

}  // namespace hmm_embed
