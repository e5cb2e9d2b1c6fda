#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "oat/array.hpp"
#include "oat/rng.hpp"

// Network building blocks: MLP, LSTM cell, message-passing block and the
// categorical / diagonal-Gaussian heads. Weights live outside any tape;
// forward passes bind them as leaves on the caller's tape so a fresh graph
// is built per step.

namespace oat::nn {

using ad::Array;
using ad::Tape;

enum class Act { none, relu, tanh_fn, sigmoid, softplus };

Array apply_act(Tape& t, Act a, const Array& x);

struct MlpSpec {
    std::vector<int> widths;  // including input width; >= 2 entries
    Act hidden = Act::relu;
    Act output = Act::none;
};

// A named, ordered set of parameter arrays. Modules allocate their weights
// here; the optimizer and checkpoints address parameters by index/name.
class ParamStore {
public:
    int add(const std::string& name, Array value);
    Array& value(int idx) { return params_[idx]; }
    const Array& value(int idx) const { return params_[idx]; }
    const std::string& name(int idx) const { return names_[idx]; }
    int size() const { return static_cast<int>(params_.size()); }
    int index_of(const std::string& name) const;  // -1 when absent

    // Copies matching names from another store (used for target-network sync
    // and checkpoint load). Throws when a name or shape is missing/mismatched.
    void copy_from(const ParamStore& other);

private:
    std::vector<Array> params_;
    std::vector<std::string> names_;
    std::map<std::string, int> by_name_;
};

// Parameters bound to a tape for one forward pass.
struct Binding {
    const ParamStore* store = nullptr;
    std::vector<Array> bound;  // leaf arrays, index-aligned with the store
    const Array& operator[](int idx) const { return bound[idx]; }
};

Binding bind_all(Tape& t, const ParamStore& store);

struct Mlp {
    MlpSpec spec;
    std::vector<int> w;  // param indices
    std::vector<int> b;

    void init(ParamStore& ps, const std::string& prefix, const MlpSpec& s, Rng& rng);
    Array apply(Tape& t, const Binding& bind, const Array& x) const;
    int in_width() const { return spec.widths.front(); }
    int out_width() const { return spec.widths.back(); }
};

// Per-agent recurrent state; rows aligned with an external id list.
struct LstmState {
    Array h;  // [n x hidden]
    Array c;  // [n x hidden]
    static LstmState zeros(int n, int hidden) {
        return LstmState{Array::zeros(n, hidden), Array::zeros(n, hidden)};
    }
    int rows() const { return h.rows(); }
    int hidden() const { return h.cols(); }
};

// Standard gate equations, applied row-wise. Gate order i, f, g, o; the
// forget-gate bias starts at 1.
struct LstmCell {
    int in_width = 0;
    int hidden = 0;
    int wx = -1, wh = -1, bias = -1;

    void init(ParamStore& ps, const std::string& prefix, int in_w, int hid, Rng& rng);
    LstmState step(Tape& t, const Binding& bind, const Array& x, const LstmState& prev) const;
};

struct MessagePassingSpec {
    int node_width = 0;
    int message_width = 0;
    int out_width = 0;
    int rounds = 1;
    Act hidden = Act::relu;
};

// RFM-style block over a fully connected directed graph without self-edges:
// out_j = node_mlp(node_j, sum_{k != j} edge_mlp(node_j, node_k)).
// Aggregation is a plain sum; messages for node j accumulate in ascending k.
struct MessagePassing {
    MessagePassingSpec spec;
    Mlp edge;
    Mlp node;

    void init(ParamStore& ps, const std::string& prefix, const MessagePassingSpec& s, Rng& rng);
    Array apply(Tape& t, const Binding& bind, const Array& nodes) const;
};

// probs = softmax(mlp(x)) per row.
Array categorical_head(Tape& t, const Binding& bind, const Mlp& mlp, const Array& x);

struct GaussianOut {
    Array mu;
    Array var;  // softplus output, strictly positive
};

GaussianOut gaussian_head(Tape& t, const Binding& bind, const Mlp& mu_mlp, const Mlp& var_mlp,
                          const Array& x);

// Sum over all entries of the per-dimension Gaussian log density. `mask`,
// when non-null, selects rows (1 keeps, 0 drops) so zero-padded rows do not
// contribute.
Array gaussian_log_density(Tape& t, const Array& x, const GaussianOut& g,
                           const Array* row_mask = nullptr);

// exact KL( N(mu, var) || N(0, I) ), summed over entries.
Array gaussian_kl_to_standard(Tape& t, const GaussianOut& g);

}  // namespace oat::nn
