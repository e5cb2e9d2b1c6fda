#pragma once

// Test-only reference implementations, written as plain scalar loops so they
// stay independent of the tape machinery they check.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "oat/gpl.hpp"
#include "oat/nn.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Vec mat_vec_row(const Mat& w, const Vec& x, const Vec& b) {
    // y = x * W + b with W given as [in][out].
    Vec y(b);
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j) y[j] += x[i] * w[i][j];
    return y;
}

inline Mat to_mat(const oat::ad::Array& a) {
    Mat m(a.rows(), Vec(a.cols()));
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) m[i][j] = a.at(i, j);
    return m;
}

inline Vec to_row(const oat::ad::Array& a, int r) {
    Vec v(a.cols());
    for (int j = 0; j < a.cols(); ++j) v[j] = a.at(r, j);
    return v;
}

inline double act(oat::nn::Act a, double x) {
    switch (a) {
        case oat::nn::Act::none: return x;
        case oat::nn::Act::relu: return x > 0 ? x : 0;
        case oat::nn::Act::tanh_fn: return std::tanh(x);
        case oat::nn::Act::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case oat::nn::Act::softplus: return x > 0 ? x + std::log1p(std::exp(-x))
                                                  : std::log1p(std::exp(x));
    }
    return x;
}

// Forward pass of an Mlp straight from its ParamStore weights.
inline Vec mlp_forward(const oat::nn::Mlp& mlp, const oat::nn::ParamStore& ps, Vec x) {
    for (size_t l = 0; l < mlp.w.size(); ++l) {
        const auto& w = ps.value(mlp.w[l]);
        const auto& b = ps.value(mlp.b[l]);
        Vec y = mat_vec_row(to_mat(w), x, to_row(b, 0));
        oat::nn::Act a = l + 1 == mlp.w.size() ? mlp.spec.output : mlp.spec.hidden;
        for (auto& v : y) v = act(a, v);
        x = std::move(y);
    }
    return x;
}

inline Vec softmax(Vec x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double z = 0;
    for (auto& v : x) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : x) v /= z;
    return x;
}

// Step-by-step LSTM gate equations for one row.
struct LstmRowOut {
    Vec h, c;
};

inline LstmRowOut lstm_row(const oat::nn::LstmCell& cell, const oat::nn::ParamStore& ps,
                           const Vec& x, const Vec& h0, const Vec& c0) {
    const Mat wx = to_mat(ps.value(cell.wx));
    const Mat wh = to_mat(ps.value(cell.wh));
    const Vec b = to_row(ps.value(cell.bias), 0);
    const int H = cell.hidden;
    Vec gates(b);
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < gates.size(); ++j) gates[j] += x[i] * wx[i][j];
    for (int i = 0; i < H; ++i)
        for (size_t j = 0; j < gates.size(); ++j) gates[j] += h0[i] * wh[i][j];
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    LstmRowOut out;
    out.h.resize(H);
    out.c.resize(H);
    for (int j = 0; j < H; ++j) {
        const double gi = sig(gates[j]);
        const double gf = sig(gates[H + j]);
        const double gg = std::tanh(gates[2 * H + j]);
        const double go = sig(gates[3 * H + j]);
        out.c[j] = gf * c0[j] + gi * gg;
        out.h[j] = go * std::tanh(out.c[j]);
    }
    return out;
}

// Explicit double-loop message passing.
inline Mat message_pass(const oat::nn::MessagePassing& mp, const oat::nn::ParamStore& ps,
                        const Mat& nodes) {
    const int n = static_cast<int>(nodes.size());
    Mat out;
    for (int j = 0; j < n; ++j) {
        Vec agg(mp.spec.message_width, 0.0);
        for (int k = 0; k < n; ++k) {
            if (k == j) continue;
            Vec in(nodes[j]);
            in.insert(in.end(), nodes[k].begin(), nodes[k].end());
            Vec msg = mlp_forward(mp.edge, ps, in);
            for (size_t i = 0; i < agg.size(); ++i) agg[i] += msg[i];
        }
        Vec in(nodes[j]);
        in.insert(in.end(), agg.begin(), agg.end());
        out.push_back(mlp_forward(mp.node, ps, in));
    }
    return out;
}

inline double gauss_logpdf(double x, double mu, double var) {
    return -0.5 * (std::log(2.0 * M_PI) + std::log(var) + (x - mu) * (x - mu) / var);
}

// --- coordination-graph oracle ------------------------------------------

// All utilities recomputed with scalar loops from the raw weights.
struct CgOracle {
    const oat::gpl::GplModel& model;
    Mat reps;  // per-agent representation rows
    int learner_row;

    Vec singular(int j) const {
        Vec in(reps[j]);
        in.insert(in.end(), reps[learner_row].begin(), reps[learner_row].end());
        return mlp_forward(model.beta, model.ps, in);
    }
    Mat factor(int j) const {
        Vec in(reps[j]);
        in.insert(in.end(), reps[learner_row].begin(), reps[learner_row].end());
        Vec flat = mlp_forward(model.delta, model.ps, in);
        const int K = model.cfg.k_rank, A = model.cfg.n_actions;
        Mat f(K, Vec(A));
        for (int r = 0; r < K; ++r)
            for (int c = 0; c < A; ++c) f[r][c] = flat[r * A + c];
        return f;
    }
    double pairwise(int j, int k, int aj, int ak) const {
        Mat fj = factor(j), fk = factor(k);
        double s = 0;
        for (int r = 0; r < model.cfg.k_rank; ++r) s += fj[r][aj] * fk[r][ak];
        return s;
    }
    double joint_value(const std::vector<int>& actions) const {
        const int n = static_cast<int>(reps.size());
        double total = 0;
        for (int j = 0; j < n; ++j) total += singular(j)[actions[j]];
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                if (p != q) total += pairwise(p, q, actions[p], actions[q]);
        return total;
    }
    // Brute-force expectation over every teammate joint action.
    Vec brute_force_qbar(const Mat& probs) const {
        const int n = static_cast<int>(reps.size());
        const int A = model.cfg.n_actions;
        Vec qbar(A, 0.0);
        std::vector<int> others;
        for (int j = 0; j < n; ++j)
            if (j != learner_row) others.push_back(j);
        std::vector<int> actions(n, 0);
        const size_t combos = static_cast<size_t>(std::pow(A, others.size()));
        for (int ai = 0; ai < A; ++ai) {
            actions[learner_row] = ai;
            for (size_t c = 0; c < combos; ++c) {
                size_t rem = c;
                double p = 1.0;
                for (size_t o = 0; o < others.size(); ++o) {
                    int a = static_cast<int>(rem % A);
                    rem /= A;
                    actions[others[o]] = a;
                    p *= probs[others[o]][a];
                }
                qbar[ai] += p * joint_value(actions);
            }
        }
        return qbar;
    }
};

// --- discrete HMM forward algorithm ----------------------------------------

struct Hmm2 {
    double trans[2][2];  // trans[i][j] = p(x_t = j | x_{t-1} = i)
    double emit[2][2];   // emit[x][y]
    double prior[2];

    std::vector<std::array<double, 2>> forward(const std::vector<int>& obs) const {
        std::vector<std::array<double, 2>> post;
        std::array<double, 2> alpha{prior[0], prior[1]};
        for (int y : obs) {
            std::array<double, 2> nxt{0, 0};
            for (int j = 0; j < 2; ++j) {
                double s = 0;
                for (int i = 0; i < 2; ++i) s += alpha[i] * trans[i][j];
                nxt[j] = s * emit[j][y];
            }
            double z = nxt[0] + nxt[1];
            nxt[0] /= z;
            nxt[1] /= z;
            alpha = nxt;
            post.push_back(alpha);
        }
        return post;
    }
};

}  // namespace oracle
