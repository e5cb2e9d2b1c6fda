#include "oat/nn.hpp"

#include <cmath>

namespace oat::nn {

Array apply_act(Tape& t, Act a, const Array& x) {
    switch (a) {
        case Act::none: return x;
        case Act::relu: return t.relu(x);
        case Act::tanh_fn: return t.tanh_fn(x);
        case Act::sigmoid: return t.sigmoid(x);
        case Act::softplus: return t.softplus(x);
    }
    return x;
}

int ParamStore::add(const std::string& name, Array value) {
    if (by_name_.count(name)) throw std::runtime_error("ParamStore: duplicate name " + name);
    int idx = static_cast<int>(params_.size());
    params_.push_back(std::move(value));
    names_.push_back(name);
    by_name_[name] = idx;
    return idx;
}

int ParamStore::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::copy_from(const ParamStore& other) {
    for (int i = 0; i < size(); ++i) {
        int j = other.index_of(names_[i]);
        if (j < 0) throw std::runtime_error("ParamStore::copy_from: missing " + names_[i]);
        const Array& src = other.value(j);
        if (!params_[i].same_shape(src))
            throw std::runtime_error("ParamStore::copy_from: shape mismatch on " + names_[i]);
        params_[i].data = src.data;
    }
}

Binding bind_all(Tape& t, const ParamStore& store) {
    Binding b;
    b.store = &store;
    b.bound.reserve(store.size());
    for (int i = 0; i < store.size(); ++i) b.bound.push_back(t.leaf(store.value(i)));
    return b;
}

namespace {
Array uniform_init(int r, int c, int fan_in, Rng& rng) {
    Array a(r, c);
    const double bound = 1.0 / std::sqrt(std::max(1, fan_in));
    for (auto& v : a.data) v = rng.uniform(-bound, bound);
    return a;
}
}  // namespace

void Mlp::init(ParamStore& ps, const std::string& prefix, const MlpSpec& s, Rng& rng) {
    if (s.widths.size() < 2) throw std::runtime_error("Mlp: need at least input+output widths");
    for (int wdt : s.widths)
        if (wdt <= 0) throw std::runtime_error("Mlp: widths must be positive");
    spec = s;
    w.clear();
    b.clear();
    for (size_t l = 0; l + 1 < s.widths.size(); ++l) {
        const int in = s.widths[l], out = s.widths[l + 1];
        w.push_back(ps.add(prefix + ".w" + std::to_string(l), uniform_init(in, out, in, rng)));
        b.push_back(ps.add(prefix + ".b" + std::to_string(l), uniform_init(1, out, in, rng)));
    }
}

Array Mlp::apply(Tape& t, const Binding& bind, const Array& x) const {
    if (x.cols() != spec.widths.front())
        throw ad::ShapeError("Mlp: input width " + std::to_string(x.cols()) + ", expected " +
                             std::to_string(spec.widths.front()));
    Array h = x;
    for (size_t l = 0; l < w.size(); ++l) {
        h = t.add(t.matmul(h, bind[w[l]]), bind[b[l]]);
        h = apply_act(t, l + 1 == w.size() ? spec.output : spec.hidden, h);
    }
    return h;
}

void LstmCell::init(ParamStore& ps, const std::string& prefix, int in_w, int hid, Rng& rng) {
    in_width = in_w;
    hidden = hid;
    wx = ps.add(prefix + ".wx", uniform_init(in_w, 4 * hid, in_w, rng));
    wh = ps.add(prefix + ".wh", uniform_init(hid, 4 * hid, hid, rng));
    Array bias0 = uniform_init(1, 4 * hid, in_w + hid, rng);
    for (int j = hid; j < 2 * hid; ++j) bias0.at(0, j) = 1.0;  // forget gate
    bias = ps.add(prefix + ".b", std::move(bias0));
}

LstmState LstmCell::step(Tape& t, const Binding& bind, const Array& x,
                         const LstmState& prev) const {
    if (x.rows() != prev.rows())
        throw ad::ShapeError("lstm_step: input rows " + std::to_string(x.rows()) +
                             " do not match state rows " + std::to_string(prev.rows()));
    const int n = x.rows();
    if (n == 0) return LstmState::zeros(0, hidden);
    Array gates = t.add(t.add(t.matmul(x, bind[wx]), t.matmul(prev.h, bind[wh])), bind[bias]);
    Array gi = t.sigmoid(t.slice_cols(gates, 0, hidden));
    Array gf = t.sigmoid(t.slice_cols(gates, hidden, 2 * hidden));
    Array gg = t.tanh_fn(t.slice_cols(gates, 2 * hidden, 3 * hidden));
    Array go = t.sigmoid(t.slice_cols(gates, 3 * hidden, 4 * hidden));
    Array c = t.add(t.mul(gf, prev.c), t.mul(gi, gg));
    Array h = t.mul(go, t.tanh_fn(c));
    return LstmState{h, c};
}

void MessagePassing::init(ParamStore& ps, const std::string& prefix, const MessagePassingSpec& s,
                          Rng& rng) {
    spec = s;
    MlpSpec es{{2 * s.node_width, s.message_width, s.message_width}, s.hidden, Act::none};
    MlpSpec ns{{s.node_width + s.message_width, s.out_width, s.out_width}, s.hidden, Act::none};
    edge.init(ps, prefix + ".edge", es, rng);
    node.init(ps, prefix + ".node", ns, rng);
}

Array MessagePassing::apply(Tape& t, const Binding& bind, const Array& nodes) const {
    const int n = nodes.rows();
    if (n == 0) return Array::zeros(0, spec.out_width);
    Array cur = nodes;
    for (int round = 0; round < spec.rounds; ++round) {
        std::vector<Array> out_rows;
        out_rows.reserve(n);
        if (n == 1) {
            Array agg = Array::zeros(1, spec.message_width);
            out_rows.push_back(node.apply(t, bind, t.concat_cols({cur, agg})));
        } else {
            // One batched edge pass over all ordered pairs, grouped by
            // receiver j with senders k ascending.
            std::vector<Array> pair_rows;
            pair_rows.reserve(static_cast<size_t>(n) * (n - 1));
            std::vector<Array> rows;
            rows.reserve(n);
            for (int j = 0; j < n; ++j) rows.push_back(t.slice_rows(cur, j, j + 1));
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    if (k != j) pair_rows.push_back(t.concat_cols({rows[j], rows[k]}));
            Array msgs = edge.apply(t, bind, t.concat_rows(pair_rows));
            for (int j = 0; j < n; ++j) {
                Array agg = t.slice_rows(msgs, j * (n - 1), j * (n - 1) + 1);
                for (int m = 1; m < n - 1; ++m)
                    agg = t.add(agg, t.slice_rows(msgs, j * (n - 1) + m, j * (n - 1) + m + 1));
                out_rows.push_back(node.apply(t, bind, t.concat_cols({rows[j], agg})));
            }
        }
        cur = t.concat_rows(out_rows);
    }
    return cur;
}

Array categorical_head(Tape& t, const Binding& bind, const Mlp& mlp, const Array& x) {
    return t.softmax(mlp.apply(t, bind, x));
}

GaussianOut gaussian_head(Tape& t, const Binding& bind, const Mlp& mu_mlp, const Mlp& var_mlp,
                          const Array& x) {
    if (mu_mlp.in_width() != var_mlp.in_width())
        throw ad::ShapeError("gaussian_head: mu/var input widths differ");
    return GaussianOut{mu_mlp.apply(t, bind, x), t.softplus(var_mlp.apply(t, bind, x))};
}

Array gaussian_log_density(Tape& t, const Array& x, const GaussianOut& g, const Array* row_mask) {
    static const double kLog2Pi = std::log(2.0 * M_PI);
    Array diff = t.sub(x, g.mu);
    Array quad = t.mul(t.mul(diff, diff),
                       t.exp_fn(t.neg(t.log_fn(g.var))));  // (x-mu)^2 / var
    Array terms = t.add(t.add(quad, t.log_fn(g.var)), Array::scalar_of(kLog2Pi));
    if (row_mask != nullptr) terms = t.mul(terms, *row_mask);
    return t.scale(t.sum(terms), -0.5);
}

Array gaussian_kl_to_standard(Tape& t, const GaussianOut& g) {
    // 0.5 * sum(mu^2 + var - log var - 1)
    Array terms = t.sub(t.sub(t.add(t.mul(g.mu, g.mu), g.var), t.log_fn(g.var)),
                        Array::scalar_of(1.0));
    return t.scale(t.sum(terms), 0.5);
}

}  // namespace oat::nn
