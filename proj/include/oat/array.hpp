#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Dense 2-D arrays of doubles plus a define-by-run reverse-mode tape.
// Everything trainable in this repo runs through these primitives; the
// networks are small enough that 64-bit floats and per-step tape rebuilds
// are cheap.

namespace oat::ad {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericFault : std::runtime_error {
    explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

// Row-major matrix. `node` is the handle into the active tape; -1 marks a
// constant that has not been recorded.
struct Array {
    int nrows = 0;
    int ncols = 0;
    std::vector<double> data;
    int node = -1;

    Array() = default;
    Array(int r, int c) : nrows(r), ncols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Array(int r, int c, std::vector<double> d);

    int rows() const { return nrows; }
    int cols() const { return ncols; }
    size_t size() const { return data.size(); }
    bool same_shape(const Array& o) const { return nrows == o.nrows && ncols == o.ncols; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * ncols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * ncols + c]; }

    // Value of a 1x1 array.
    double scalar() const;

    static Array zeros(int r, int c) { return Array(r, c); }
    static Array full(int r, int c, double v);
    static Array scalar_of(double v) { return full(1, 1, v); }
    static Array row(std::vector<double> v);
    static Array col(std::vector<double> v);

    std::string shape_str() const;
};

enum class Prim {
    leaf,
    matmul,
    transpose,
    reshape,
    add,
    sub,
    mul,
    neg,
    concat,   // axis in aux[0]: 0 rows, 1 cols
    sum,      // all entries -> 1x1
    mean,     // all entries -> 1x1
    softmax,  // row-wise
    sigmoid,
    tanh_fn,
    relu,
    softplus,
    log_fn,
    exp_fn,
    logsumexp,  // row-wise, max-subtracted -> n x 1
    slice,      // aux: r0, r1, c0, c1 (half-open)
};

const char* prim_name(Prim p);

struct TapeRecord {
    Prim op;
    std::vector<int> inputs;
    std::vector<int> aux;
};

// Gradient map produced by backward(): node id -> Array.
struct Gradients {
    std::vector<Array> by_node;
    const Array& at(const Array& x) const;
    const Array& at_node(int node) const;
};

// Define-by-run tape. Records are appended in topological order; backward
// walks them once in reverse. A tape is confined to one worker at a time.
class Tape {
public:
    // Registers a value as a differentiable leaf (parameter or input).
    Array leaf(const Array& value);

    Array value_of(int node) const { return values_[node]; }
    size_t num_nodes() const { return values_.size(); }
    void clear();

    Gradients backward(const Array& loss) const;

    // --- primitives -------------------------------------------------------
    Array matmul(const Array& a, const Array& b);
    Array transpose(const Array& a);
    Array reshape(const Array& a, int r, int c);
    Array add(const Array& a, const Array& b);   // b may be [1 x c] or [1 x 1]
    Array sub(const Array& a, const Array& b);
    Array mul(const Array& a, const Array& b);   // elementwise, same broadcast
    Array neg(const Array& a);
    Array concat_rows(const std::vector<Array>& parts);
    Array concat_cols(const std::vector<Array>& parts);
    Array sum(const Array& a);
    Array mean(const Array& a);
    Array softmax(const Array& a);
    Array sigmoid(const Array& a);
    Array tanh_fn(const Array& a);
    Array relu(const Array& a);
    Array softplus(const Array& a);
    Array log_fn(const Array& a);
    Array exp_fn(const Array& a);
    Array logsumexp(const Array& a);
    Array slice(const Array& a, int r0, int r1, int c0, int c1);
    Array slice_rows(const Array& a, int r0, int r1);
    Array slice_cols(const Array& a, int c0, int c1);

    // Convenience combinations built from the primitives above.
    Array scale(const Array& a, double k);
    Array add_scalar(const Array& a, double k);
    Array square(const Array& a);
    Array dot(const Array& a, const Array& b);  // 1xN . 1xN -> 1x1

private:
    Array record(Prim op, std::vector<int> inputs, std::vector<int> aux, Array out);
    int node_of(const Array& a);  // lifts constants to leaves
    void check_finite(const Array& out, Prim op) const;

    std::vector<TapeRecord> records_;
    std::vector<Array> values_;
};

// Generic dispatcher over the primitive set; thin wrapper over the named
// member functions, kept for parity with call sites that select ops by kind.
Array apply_primitive(Tape& tape, Prim kind, const std::vector<Array>& inputs,
                      const std::vector<int>& aux = {});

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be a deterministic scalar function of the flattened point.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> point, std::span<const double> analytic,
                  double eps);

}  // namespace oat::ad
