#include "oat/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oat::ad {

Array::Array(int r, int c, std::vector<double> d) : nrows(r), ncols(c), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(r) * c)
        throw ShapeError("Array: data length " + std::to_string(data.size()) +
                         " does not match shape [" + std::to_string(r) + " x " +
                         std::to_string(c) + "]");
}

double Array::scalar() const {
    if (nrows != 1 || ncols != 1) throw ShapeError("scalar() on non-1x1 array " + shape_str());
    return data[0];
}

Array Array::full(int r, int c, double v) {
    Array a(r, c);
    std::fill(a.data.begin(), a.data.end(), v);
    return a;
}

Array Array::row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Array(1, n, std::move(v));
}

Array Array::col(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Array(n, 1, std::move(v));
}

std::string Array::shape_str() const {
    return "[" + std::to_string(nrows) + " x " + std::to_string(ncols) + "]";
}

const char* prim_name(Prim p) {
    switch (p) {
        case Prim::leaf: return "leaf";
        case Prim::matmul: return "matmul";
        case Prim::transpose: return "transpose";
        case Prim::reshape: return "reshape";
        case Prim::add: return "add";
        case Prim::sub: return "sub";
        case Prim::mul: return "mul";
        case Prim::neg: return "neg";
        case Prim::concat: return "concat";
        case Prim::sum: return "sum";
        case Prim::mean: return "mean";
        case Prim::softmax: return "softmax";
        case Prim::sigmoid: return "sigmoid";
        case Prim::tanh_fn: return "tanh";
        case Prim::relu: return "relu";
        case Prim::softplus: return "softplus";
        case Prim::log_fn: return "log";
        case Prim::exp_fn: return "exp";
        case Prim::logsumexp: return "logsumexp";
        case Prim::slice: return "slice";
    }
    return "?";
}

const Array& Gradients::at(const Array& x) const {
    if (x.node < 0 || static_cast<size_t>(x.node) >= by_node.size())
        throw std::runtime_error("Gradients::at: array is not on the tape");
    return by_node[x.node];
}

const Array& Gradients::at_node(int node) const {
    if (node < 0 || static_cast<size_t>(node) >= by_node.size())
        throw std::runtime_error("Gradients::at_node: node not on tape");
    return by_node[node];
}

void Tape::clear() {
    records_.clear();
    values_.clear();
}

void Tape::check_finite(const Array& out, Prim op) const {
    for (double v : out.data)
        if (!std::isfinite(v))
            throw NumericFault(std::string("non-finite output from primitive '") + prim_name(op) +
                               "' with shape " + out.shape_str());
}

Array Tape::record(Prim op, std::vector<int> inputs, std::vector<int> aux, Array out) {
    check_finite(out, op);
    out.node = static_cast<int>(values_.size());
    records_.push_back(TapeRecord{op, std::move(inputs), std::move(aux)});
    values_.push_back(out);
    return out;
}

int Tape::node_of(const Array& a) {
    if (a.node >= 0) {
        if (static_cast<size_t>(a.node) >= values_.size())
            throw std::runtime_error("Array node id does not belong to this tape");
        return a.node;
    }
    Array copy = a;
    copy.node = static_cast<int>(values_.size());
    records_.push_back(TapeRecord{Prim::leaf, {}, {}});
    values_.push_back(copy);
    return copy.node;
}

Array Tape::leaf(const Array& value) {
    Array copy = value;
    copy.node = -1;
    int id = node_of(copy);
    return values_[id];
}

// --- forward implementations ------------------------------------------------

Array Tape::matmul(const Array& a, const Array& b) {
    if (a.ncols != b.nrows)
        throw ShapeError(std::string("matmul: inner dims differ, ") + a.shape_str() + " * " +
                         b.shape_str());
    Array out(a.nrows, b.ncols);
    for (int i = 0; i < a.nrows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.ncols];
        double* orow = &out.data[static_cast<size_t>(i) * out.ncols];
        for (int k = 0; k < a.ncols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.ncols];
            for (int j = 0; j < b.ncols; ++j) orow[j] += av * brow[j];
        }
    }
    int an = node_of(a), bn = node_of(b);
    return record(Prim::matmul, {an, bn}, {}, std::move(out));
}

Array Tape::transpose(const Array& a) {
    Array out(a.ncols, a.nrows);
    for (int i = 0; i < a.nrows; ++i)
        for (int j = 0; j < a.ncols; ++j) out.at(j, i) = a.at(i, j);
    int an = node_of(a);
    return record(Prim::transpose, {an}, {}, std::move(out));
}

Array Tape::reshape(const Array& a, int r, int c) {
    if (static_cast<size_t>(r) * c != a.size())
        throw ShapeError("reshape: size mismatch " + a.shape_str() + " -> [" + std::to_string(r) +
                         " x " + std::to_string(c) + "]");
    Array out(r, c, a.data);
    int an = node_of(a);
    return record(Prim::reshape, {an}, {a.nrows, a.ncols}, std::move(out));
}

namespace {
enum BroadcastMode { kSame = 0, kRow = 1, kScalar = 2 };

BroadcastMode broadcast_mode(const Array& a, const Array& b, const char* op) {
    if (a.same_shape(b)) return kSame;
    if (b.nrows == 1 && b.ncols == a.ncols) return kRow;
    if (b.nrows == 1 && b.ncols == 1) return kScalar;
    throw ShapeError(std::string(op) + ": shapes do not conform, " + a.shape_str() + " vs " +
                     b.shape_str());
}

double broadcast_get(const Array& b, BroadcastMode m, int i, int j) {
    switch (m) {
        case kSame: return b.at(i, j);
        case kRow: return b.at(0, j);
        default: return b.data[0];
    }
}
}  // namespace

Array Tape::add(const Array& a, const Array& b) {
    BroadcastMode m = broadcast_mode(a, b, "add");
    Array out(a.nrows, a.ncols);
    for (int i = 0; i < a.nrows; ++i)
        for (int j = 0; j < a.ncols; ++j) out.at(i, j) = a.at(i, j) + broadcast_get(b, m, i, j);
    int an = node_of(a), bn = node_of(b);
    return record(Prim::add, {an, bn}, {m}, std::move(out));
}

Array Tape::sub(const Array& a, const Array& b) {
    BroadcastMode m = broadcast_mode(a, b, "sub");
    Array out(a.nrows, a.ncols);
    for (int i = 0; i < a.nrows; ++i)
        for (int j = 0; j < a.ncols; ++j) out.at(i, j) = a.at(i, j) - broadcast_get(b, m, i, j);
    int an = node_of(a), bn = node_of(b);
    return record(Prim::sub, {an, bn}, {m}, std::move(out));
}

Array Tape::mul(const Array& a, const Array& b) {
    BroadcastMode m = broadcast_mode(a, b, "mul");
    Array out(a.nrows, a.ncols);
    for (int i = 0; i < a.nrows; ++i)
        for (int j = 0; j < a.ncols; ++j) out.at(i, j) = a.at(i, j) * broadcast_get(b, m, i, j);
    int an = node_of(a), bn = node_of(b);
    return record(Prim::mul, {an, bn}, {m}, std::move(out));
}

Array Tape::neg(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = -a.data[i];
    int an = node_of(a);
    return record(Prim::neg, {an}, {}, std::move(out));
}

Array Tape::concat_rows(const std::vector<Array>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int cols = parts[0].ncols, rows = 0;
    for (const auto& p : parts) {
        if (p.ncols != cols) throw ShapeError("concat rows: column mismatch");
        rows += p.nrows;
    }
    Array out(rows, cols);
    std::vector<int> ids;
    int r = 0;
    for (const auto& p : parts) {
        std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<size_t>(r) * cols);
        r += p.nrows;
    }
    for (const auto& p : parts) ids.push_back(node_of(p));
    return record(Prim::concat, std::move(ids), {0}, std::move(out));
}

Array Tape::concat_cols(const std::vector<Array>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int rows = parts[0].nrows, cols = 0;
    for (const auto& p : parts) {
        if (p.nrows != rows) throw ShapeError("concat cols: row mismatch");
        cols += p.ncols;
    }
    Array out(rows, cols);
    int c0 = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p.ncols; ++j) out.at(i, c0 + j) = p.at(i, j);
        c0 += p.ncols;
    }
    std::vector<int> ids;
    for (const auto& p : parts) ids.push_back(node_of(p));
    return record(Prim::concat, std::move(ids), {1}, std::move(out));
}

Array Tape::sum(const Array& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    int an = node_of(a);
    return record(Prim::sum, {an}, {}, Array::scalar_of(s));
}

Array Tape::mean(const Array& a) {
    if (a.size() == 0) throw ShapeError("mean of empty array");
    double s = 0.0;
    for (double v : a.data) s += v;
    int an = node_of(a);
    return record(Prim::mean, {an}, {}, Array::scalar_of(s / static_cast<double>(a.size())));
}

Array Tape::softmax(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (int i = 0; i < a.nrows; ++i) {
        double mx = -HUGE_VAL;
        for (int j = 0; j < a.ncols; ++j) mx = std::max(mx, a.at(i, j));
        double z = 0.0;
        for (int j = 0; j < a.ncols; ++j) {
            out.at(i, j) = std::exp(a.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (int j = 0; j < a.ncols; ++j) out.at(i, j) /= z;
    }
    int an = node_of(a);
    return record(Prim::softmax, {an}, {}, std::move(out));
}

Array Tape::sigmoid(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = a.data[i];
        out.data[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    int an = node_of(a);
    return record(Prim::sigmoid, {an}, {}, std::move(out));
}

Array Tape::tanh_fn(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = std::tanh(a.data[i]);
    int an = node_of(a);
    return record(Prim::tanh_fn, {an}, {}, std::move(out));
}

Array Tape::relu(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] > 0 ? a.data[i] : 0.0;
    int an = node_of(a);
    return record(Prim::relu, {an}, {}, std::move(out));
}

Array Tape::softplus(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = a.data[i];
        out.data[i] = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    int an = node_of(a);
    return record(Prim::softplus, {an}, {}, std::move(out));
}

Array Tape::log_fn(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = std::log(a.data[i]);
    int an = node_of(a);
    return record(Prim::log_fn, {an}, {}, std::move(out));
}

Array Tape::exp_fn(const Array& a) {
    Array out(a.nrows, a.ncols);
    for (size_t i = 0; i < a.size(); ++i) out.data[i] = std::exp(a.data[i]);
    int an = node_of(a);
    return record(Prim::exp_fn, {an}, {}, std::move(out));
}

Array Tape::logsumexp(const Array& a) {
    Array out(a.nrows, 1);
    for (int i = 0; i < a.nrows; ++i) {
        double mx = -HUGE_VAL;
        for (int j = 0; j < a.ncols; ++j) mx = std::max(mx, a.at(i, j));
        double z = 0.0;
        for (int j = 0; j < a.ncols; ++j) z += std::exp(a.at(i, j) - mx);
        out.at(i, 0) = mx + std::log(z);
    }
    int an = node_of(a);
    return record(Prim::logsumexp, {an}, {}, std::move(out));
}

Array Tape::slice(const Array& a, int r0, int r1, int c0, int c1) {
    if (r0 < 0 || r1 > a.nrows || c0 < 0 || c1 > a.ncols || r0 > r1 || c0 > c1)
        throw ShapeError("slice: bounds out of range for " + a.shape_str());
    Array out(r1 - r0, c1 - c0);
    for (int i = r0; i < r1; ++i)
        for (int j = c0; j < c1; ++j) out.at(i - r0, j - c0) = a.at(i, j);
    int an = node_of(a);
    return record(Prim::slice, {an}, {r0, r1, c0, c1}, std::move(out));
}

Array Tape::slice_rows(const Array& a, int r0, int r1) { return slice(a, r0, r1, 0, a.ncols); }
Array Tape::slice_cols(const Array& a, int c0, int c1) { return slice(a, 0, a.nrows, c0, c1); }

Array Tape::scale(const Array& a, double k) { return mul(a, Array::scalar_of(k)); }
Array Tape::add_scalar(const Array& a, double k) { return add(a, Array::scalar_of(k)); }
Array Tape::square(const Array& a) { return mul(a, a); }

Array Tape::dot(const Array& a, const Array& b) {
    if (a.nrows != 1 || b.nrows != 1 || a.ncols != b.ncols)
        throw ShapeError("dot: expects matching 1xN rows");
    return matmul(a, transpose(b));
}

// --- backward ----------------------------------------------------------------

Gradients Tape::backward(const Array& loss) const {
    if (loss.node < 0 || static_cast<size_t>(loss.node) >= values_.size())
        throw std::runtime_error("backward: loss is not on this tape");
    if (loss.nrows != 1 || loss.ncols != 1)
        throw ShapeError("backward: loss must be scalar, got " + loss.shape_str());

    Gradients g;
    g.by_node.resize(values_.size());
    for (size_t i = 0; i < values_.size(); ++i)
        g.by_node[i] = Array::zeros(values_[i].nrows, values_[i].ncols);
    g.by_node[loss.node].data[0] = 1.0;

    for (int id = loss.node; id >= 0; --id) {
        const TapeRecord& rec = records_[id];
        const Array& out = values_[id];
        const Array& go = g.by_node[id];
        bool any = false;
        for (double v : go.data)
            if (v != 0.0) { any = true; break; }
        if (!any || rec.op == Prim::leaf) continue;

        auto& in = rec.inputs;
        switch (rec.op) {
            case Prim::matmul: {
                const Array& a = values_[in[0]];
                const Array& b = values_[in[1]];
                Array& ga = g.by_node[in[0]];
                Array& gb = g.by_node[in[1]];
                // dA += dC * B^T ; dB += A^T * dC
                for (int i = 0; i < a.nrows; ++i)
                    for (int k = 0; k < a.ncols; ++k) {
                        double s = 0.0;
                        for (int j = 0; j < b.ncols; ++j) s += go.at(i, j) * b.at(k, j);
                        ga.at(i, k) += s;
                    }
                for (int k = 0; k < b.nrows; ++k)
                    for (int j = 0; j < b.ncols; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < a.nrows; ++i) s += a.at(i, k) * go.at(i, j);
                        gb.at(k, j) += s;
                    }
                break;
            }
            case Prim::transpose: {
                Array& ga = g.by_node[in[0]];
                for (int i = 0; i < out.nrows; ++i)
                    for (int j = 0; j < out.ncols; ++j) ga.at(j, i) += go.at(i, j);
                break;
            }
            case Prim::reshape: {
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
                break;
            }
            case Prim::add:
            case Prim::sub: {
                Array& ga = g.by_node[in[0]];
                Array& gb = g.by_node[in[1]];
                const double sgn = rec.op == Prim::add ? 1.0 : -1.0;
                const BroadcastMode m = static_cast<BroadcastMode>(rec.aux[0]);
                for (size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
                for (int i = 0; i < out.nrows; ++i)
                    for (int j = 0; j < out.ncols; ++j) {
                        double v = sgn * go.at(i, j);
                        if (m == kSame) gb.at(i, j) += v;
                        else if (m == kRow) gb.at(0, j) += v;
                        else gb.data[0] += v;
                    }
                break;
            }
            case Prim::mul: {
                const Array& a = values_[in[0]];
                const Array& b = values_[in[1]];
                Array& ga = g.by_node[in[0]];
                Array& gb = g.by_node[in[1]];
                const BroadcastMode m = static_cast<BroadcastMode>(rec.aux[0]);
                for (int i = 0; i < out.nrows; ++i)
                    for (int j = 0; j < out.ncols; ++j) {
                        const double gv = go.at(i, j);
                        ga.at(i, j) += gv * broadcast_get(b, m, i, j);
                        const double coef = gv * a.at(i, j);
                        if (m == kSame) gb.at(i, j) += coef;
                        else if (m == kRow) gb.at(0, j) += coef;
                        else gb.data[0] += coef;
                    }
                break;
            }
            case Prim::neg: {
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < go.size(); ++i) ga.data[i] -= go.data[i];
                break;
            }
            case Prim::concat: {
                const int axis = rec.aux[0];
                if (axis == 0) {
                    int r = 0;
                    for (int part : in) {
                        Array& gp = g.by_node[part];
                        for (int i = 0; i < gp.nrows; ++i)
                            for (int j = 0; j < gp.ncols; ++j) gp.at(i, j) += go.at(r + i, j);
                        r += gp.nrows;
                    }
                } else {
                    int c = 0;
                    for (int part : in) {
                        Array& gp = g.by_node[part];
                        for (int i = 0; i < gp.nrows; ++i)
                            for (int j = 0; j < gp.ncols; ++j) gp.at(i, j) += go.at(i, c + j);
                        c += gp.ncols;
                    }
                }
                break;
            }
            case Prim::sum: {
                Array& ga = g.by_node[in[0]];
                const double gv = go.data[0];
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += gv;
                break;
            }
            case Prim::mean: {
                Array& ga = g.by_node[in[0]];
                const double gv = go.data[0] / static_cast<double>(ga.size());
                for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += gv;
                break;
            }
            case Prim::softmax: {
                Array& ga = g.by_node[in[0]];
                for (int i = 0; i < out.nrows; ++i) {
                    double d = 0.0;
                    for (int j = 0; j < out.ncols; ++j) d += go.at(i, j) * out.at(i, j);
                    for (int j = 0; j < out.ncols; ++j)
                        ga.at(i, j) += out.at(i, j) * (go.at(i, j) - d);
                }
                break;
            }
            case Prim::sigmoid: {
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i)
                    ga.data[i] += go.data[i] * out.data[i] * (1.0 - out.data[i]);
                break;
            }
            case Prim::tanh_fn: {
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i)
                    ga.data[i] += go.data[i] * (1.0 - out.data[i] * out.data[i]);
                break;
            }
            case Prim::relu: {
                const Array& a = values_[in[0]];
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i)
                    if (a.data[i] > 0) ga.data[i] += go.data[i];
                break;
            }
            case Prim::softplus: {
                const Array& a = values_[in[0]];
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i) {
                    const double x = a.data[i];
                    const double s =
                        x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                    ga.data[i] += go.data[i] * s;
                }
                break;
            }
            case Prim::log_fn: {
                const Array& a = values_[in[0]];
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i) ga.data[i] += go.data[i] / a.data[i];
                break;
            }
            case Prim::exp_fn: {
                Array& ga = g.by_node[in[0]];
                for (size_t i = 0; i < out.size(); ++i) ga.data[i] += go.data[i] * out.data[i];
                break;
            }
            case Prim::logsumexp: {
                const Array& a = values_[in[0]];
                Array& ga = g.by_node[in[0]];
                for (int i = 0; i < a.nrows; ++i)
                    for (int j = 0; j < a.ncols; ++j)
                        ga.at(i, j) += go.at(i, 0) * std::exp(a.at(i, j) - out.at(i, 0));
                break;
            }
            case Prim::slice: {
                Array& ga = g.by_node[in[0]];
                const int r0 = rec.aux[0], c0 = rec.aux[2];
                for (int i = 0; i < out.nrows; ++i)
                    for (int j = 0; j < out.ncols; ++j) ga.at(r0 + i, c0 + j) += go.at(i, j);
                break;
            }
            case Prim::leaf: break;
        }
    }
    return g;
}

Array apply_primitive(Tape& tape, Prim kind, const std::vector<Array>& inputs,
                      const std::vector<int>& aux) {
    auto need = [&](size_t n) {
        if (inputs.size() != n)
            throw ShapeError(std::string("apply_primitive(") + prim_name(kind) + "): expected " +
                             std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
    };
    switch (kind) {
        case Prim::leaf: need(1); return tape.leaf(inputs[0]);
        case Prim::matmul: need(2); return tape.matmul(inputs[0], inputs[1]);
        case Prim::transpose: need(1); return tape.transpose(inputs[0]);
        case Prim::reshape: need(1); return tape.reshape(inputs[0], aux.at(0), aux.at(1));
        case Prim::add: need(2); return tape.add(inputs[0], inputs[1]);
        case Prim::sub: need(2); return tape.sub(inputs[0], inputs[1]);
        case Prim::mul: need(2); return tape.mul(inputs[0], inputs[1]);
        case Prim::neg: need(1); return tape.neg(inputs[0]);
        case Prim::concat:
            return aux.at(0) == 0 ? tape.concat_rows(inputs) : tape.concat_cols(inputs);
        case Prim::sum: need(1); return tape.sum(inputs[0]);
        case Prim::mean: need(1); return tape.mean(inputs[0]);
        case Prim::softmax: need(1); return tape.softmax(inputs[0]);
        case Prim::sigmoid: need(1); return tape.sigmoid(inputs[0]);
        case Prim::tanh_fn: need(1); return tape.tanh_fn(inputs[0]);
        case Prim::relu: need(1); return tape.relu(inputs[0]);
        case Prim::softplus: need(1); return tape.softplus(inputs[0]);
        case Prim::log_fn: need(1); return tape.log_fn(inputs[0]);
        case Prim::exp_fn: need(1); return tape.exp_fn(inputs[0]);
        case Prim::logsumexp: need(1); return tape.logsumexp(inputs[0]);
        case Prim::slice:
            need(1);
            return tape.slice(inputs[0], aux.at(0), aux.at(1), aux.at(2), aux.at(3));
    }
    throw std::runtime_error("apply_primitive: unknown kind");
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> point, std::span<const double> analytic, double eps) {
    if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
    if (point.size() != analytic.size())
        throw std::invalid_argument("grad_check: point/gradient size mismatch");
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double fp = f(x);
        x[i] = keep - eps;
        const double fm = f(x);
        x[i] = keep;
        const double fd = (fp - fm) / (2.0 * eps);
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace oat::ad
