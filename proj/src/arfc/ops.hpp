#pragma once

#include "tensor.hpp"
#include "rng.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>

// Dense op library on top of the autodiff node. Shapes are kept
// deliberately simple: elementwise ops need exact shape match,
// matmul understands 2-D, batched-3D×2D (shared weight) and
// batched-3D×3D, and add_bcast broadcasts a trailing-shape tensor
// (bias, positional table) over leading axes.

namespace arfc {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// raised when values (not shapes or arguments) go bad: overflow,
// NaN loss, degenerate norms mid-training
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
    return a->shape == b->shape;
}

// ─── matmul ───────────────────────────────────────────────────

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a->shape;
    const auto& bs = b->shape;
    check(as.size() >= 2 && bs.size() >= 2, "matmul: rank must be >= 2");
    int m = as[as.size() - 2], k = as[as.size() - 1];
    int k2 = bs[bs.size() - 2], p = bs[bs.size() - 1];
    check(k == k2, "matmul: inner extents mismatch");

    size_t batch_a = numel(as) / (size_t)(m * k);
    size_t batch_b = numel(bs) / (size_t)(k * p);
    check(batch_b == 1 || batch_b == batch_a,
          "matmul: batch extents mismatch");
    size_t batch = batch_a;

    std::vector<int> oshape(as.begin(), as.end() - 2);
    oshape.push_back(m);
    oshape.push_back(p);
    Tensor out = make_tensor(oshape);

    for (size_t i = 0; i < batch; ++i) {
        CMap A(a->data.data() + i * (size_t)m * k, m, k);
        CMap B(b->data.data() + (batch_b == 1 ? 0 : i) * (size_t)k * p, k, p);
        MMap C(out->data.data() + i * (size_t)m * p, m, p);
        C.noalias() = A * B;
    }

    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        int mm = m, kk = k, pp = p;
        size_t bb = batch_b;
        out->backward_fn = [a, b, mm, kk, pp, batch, bb](TensorNode& o) {
            for (size_t i = 0; i < batch; ++i) {
                CMap G(o.grad.data() + i * (size_t)mm * pp, mm, pp);
                if (a->requires_grad) {
                    CMap B(b->data.data() + (bb == 1 ? 0 : i) * (size_t)kk * pp, kk, pp);
                    MMap dA(a->ensure_grad().data() + i * (size_t)mm * kk, mm, kk);
                    dA.noalias() += G * B.transpose();
                }
                if (b->requires_grad) {
                    CMap A(a->data.data() + i * (size_t)mm * kk, mm, kk);
                    MMap dB(b->ensure_grad().data() + (bb == 1 ? 0 : i) * (size_t)kk * pp, kk, pp);
                    dB.noalias() += A.transpose() * G;
                }
            }
        };
    }
    return out;
}

// ─── shape ops ────────────────────────────────────────────────

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    check(numel(shape) == a->size(), "reshape: element count mismatch");
    Tensor out = make_tensor(std::move(shape));
    out->data = a->data;
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        };
    }
    return out;
}

// swap axes i and j
inline Tensor transpose(const Tensor& a, int axis_i, int axis_j) {
    int rank = (int)a->shape.size();
    if (axis_i < 0) axis_i += rank;
    if (axis_j < 0) axis_j += rank;
    check(axis_i >= 0 && axis_i < rank && axis_j >= 0 && axis_j < rank,
          "transpose: axis out of range");
    if (axis_i > axis_j) std::swap(axis_i, axis_j);

    std::vector<int> oshape = a->shape;
    std::swap(oshape[axis_i], oshape[axis_j]);
    Tensor out = make_tensor(oshape);

    std::vector<size_t> in_strides(rank, 1), out_strides(rank, 1);
    for (int d = rank - 2; d >= 0; --d) {
        in_strides[d] = in_strides[d + 1] * (size_t)a->shape[d + 1];
        out_strides[d] = out_strides[d + 1] * (size_t)oshape[d + 1];
    }
    // walk output positions; source index swaps the two axes
    // (captures by value: the closure outlives this frame via backward_fn)
    auto map_index = [rank, axis_i, axis_j, in_strides, out_strides](size_t oidx) {
        size_t rem = oidx, src = 0;
        for (int d = 0; d < rank; ++d) {
            size_t c = rem / out_strides[d];
            rem %= out_strides[d];
            int sd = (d == axis_i) ? axis_j : (d == axis_j) ? axis_i : d;
            src += c * in_strides[sd];
        }
        return src;
    };
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[map_index(i)];

    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a, map_index](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) g[map_index(i)] += o.grad[i];
        };
    }
    return out;
}

// contiguous [start, end) range along an axis
inline Tensor slice(const Tensor& a, int axis, int start, int end) {
    int rank = (int)a->shape.size();
    if (axis < 0) axis += rank;
    check(axis >= 0 && axis < rank, "slice: axis out of range");
    check(0 <= start && start < end && end <= a->shape[axis], "slice: bad range");

    size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= (size_t)a->shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= (size_t)a->shape[d];
    size_t ext = (size_t)a->shape[axis], len = (size_t)(end - start);

    std::vector<int> oshape = a->shape;
    oshape[axis] = end - start;
    Tensor out = make_tensor(oshape);
    for (size_t o = 0; o < outer; ++o)
        std::memcpy(out->data.data() + o * len * inner,
                    a->data.data() + (o * ext + (size_t)start) * inner,
                    len * inner * sizeof(double));

    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        size_t st = (size_t)start;
        out->backward_fn = [a, outer, inner, ext, len, st](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t ou = 0; ou < outer; ++ou) {
                const double* src = o.grad.data() + ou * len * inner;
                double* dst = g.data() + (ou * ext + st) * inner;
                for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: empty input list");
    int rank = (int)parts[0]->shape.size();
    if (axis < 0) axis += rank;
    std::vector<int> oshape = parts[0]->shape;
    int total = 0;
    for (const auto& p : parts) {
        check((int)p->shape.size() == rank, "concat: rank mismatch");
        for (int d = 0; d < rank; ++d)
            if (d != axis) check(p->shape[d] == oshape[d], "concat: shape mismatch");
        total += p->shape[axis];
    }
    oshape[axis] = total;
    Tensor out = make_tensor(oshape);

    size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= (size_t)oshape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= (size_t)oshape[d];

    std::vector<size_t> offsets(parts.size());
    size_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        offsets[pi] = off;
        size_t plen = (size_t)parts[pi]->shape[axis];
        for (size_t o = 0; o < outer; ++o)
            std::memcpy(out->data.data() + (o * (size_t)total + off) * inner,
                        parts[pi]->data.data() + o * plen * inner,
                        plen * inner * sizeof(double));
        off += plen;
    }

    bool need = false;
    if (grad_enabled())
        for (const auto& p : parts)
            if (p->requires_grad) need = true;
    if (need) {
        out->requires_grad = true;
        out->parents = parts;
        size_t tot = (size_t)total;
        int ax = axis;
        out->backward_fn = [parts, offsets, outer, inner, tot, ax](TensorNode& o) {
            for (size_t pi = 0; pi < parts.size(); ++pi) {
                if (!parts[pi]->requires_grad) continue;
                auto& g = parts[pi]->ensure_grad();
                size_t plen = (size_t)parts[pi]->shape[ax];
                for (size_t ou = 0; ou < outer; ++ou) {
                    const double* src = o.grad.data() + (ou * tot + offsets[pi]) * inner;
                    double* dst = g.data() + ou * plen * inner;
                    for (size_t i = 0; i < plen * inner; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return out;
}

// ─── elementwise ──────────────────────────────────────────────

inline Tensor add(const Tensor& a, const Tensor& b) {
    check(same_shape(a, b), "add: shape mismatch");
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check(same_shape(a, b), "sub: shape mismatch");
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check(same_shape(a, b), "mul: shape mismatch");
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backward_fn = [a, b](TensorNode& o) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * a->data[i];
            }
        };
    }
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * c;
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a, c](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * c;
        };
    }
    return out;
}

// b's shape must be a suffix of a's shape (bias over batch, pos
// table over batch, ...); b is tiled over the leading axes.
inline Tensor add_bcast(const Tensor& a, const Tensor& b) {
    check(b->shape.size() <= a->shape.size(), "add_bcast: b rank too large");
    size_t off = a->shape.size() - b->shape.size();
    for (size_t d = 0; d < b->shape.size(); ++d)
        check(a->shape[off + d] == b->shape[d], "add_bcast: trailing shape mismatch");
    size_t bn = b->size(), reps = a->size() / bn;
    Tensor out = make_tensor(a->shape);
    for (size_t r = 0; r < reps; ++r)
        for (size_t i = 0; i < bn; ++i)
            out->data[r * bn + i] = a->data[r * bn + i] + b->data[i];
    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backward_fn = [a, b, reps, bn](TensorNode& o) {
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (size_t r = 0; r < reps; ++r)
                    for (size_t i = 0; i < bn; ++i) g[i] += o.grad[r * bn + i];
            }
        };
    }
    return out;
}

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    Tensor out = make_tensor({1}, {s});
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0];
        };
    }
    return out;
}

// Σ‖a−b‖² over everything — the reconstruction loss workhorse
inline Tensor sq_dist(const Tensor& a, const Tensor& b) {
    check(same_shape(a, b), "sq_dist: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a->size(); ++i) {
        double d = a->data[i] - b->data[i];
        s += d * d;
    }
    Tensor out = make_tensor({1}, {s});
    if (track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backward_fn = [a, b](TensorNode& o) {
            double g0 = o.grad[0];
            if (a->requires_grad) {
                auto& g = a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i)
                    g[i] += 2.0 * g0 * (a->data[i] - b->data[i]);
            }
            if (b->requires_grad) {
                auto& g = b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i)
                    g[i] -= 2.0 * g0 * (a->data[i] - b->data[i]);
            }
        };
    }
    return out;
}

// ─── nonlinearities & normalization ───────────────────────────

inline Tensor softmax_lastdim(const Tensor& a) {
    int cols = a->shape.back();
    check(cols > 0, "softmax: empty last dim");
    size_t rows = a->size() / (size_t)cols;
    Tensor out = make_tensor(a->shape);
    for (size_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * (size_t)cols;
        double* y = out->data.data() + r * (size_t)cols;
        double mx = x[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double z = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        for (int c = 0; c < cols; ++c) y[c] /= z;
    }
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a, rows, cols](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t r = 0; r < rows; ++r) {
                const double* y = o.data.data() + r * (size_t)cols;
                const double* gy = o.grad.data() + r * (size_t)cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += y[c] * gy[c];
                double* gx = g.data() + r * (size_t)cols;
                for (int c = 0; c < cols; ++c) gx[c] += y[c] * (gy[c] - dot);
            }
        };
    }
    return out;
}

inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    int cols = a->shape.back();
    check((int)gain->size() == cols && (int)bias->size() == cols,
          "layer_norm: gain/bias must match last dim");
    size_t rows = a->size() / (size_t)cols;
    Tensor out = make_tensor(a->shape);
    std::vector<double> rstd(rows), mean(rows);
    for (size_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * (size_t)cols;
        double m = 0.0;
        for (int c = 0; c < cols; ++c) m += x[c];
        m /= cols;
        double v = 0.0;
        for (int c = 0; c < cols; ++c) v += (x[c] - m) * (x[c] - m);
        v /= cols;
        double rs = 1.0 / std::sqrt(v + eps);
        mean[r] = m;
        rstd[r] = rs;
        double* y = out->data.data() + r * (size_t)cols;
        for (int c = 0; c < cols; ++c)
            y[c] = (x[c] - m) * rs * gain->data[c] + bias->data[c];
    }
    if (track({a, gain, bias})) {
        out->requires_grad = true;
        out->parents = {a, gain, bias};
        out->backward_fn = [a, gain, bias, rows, cols, mean, rstd](TensorNode& o) {
            for (size_t r = 0; r < rows; ++r) {
                const double* x = a->data.data() + r * (size_t)cols;
                const double* gy = o.grad.data() + r * (size_t)cols;
                double m = mean[r], rs = rstd[r];
                // xhat = (x-m)*rs
                if (gain->requires_grad) {
                    auto& gg = gain->ensure_grad();
                    for (int c = 0; c < cols; ++c) gg[c] += gy[c] * (x[c] - m) * rs;
                }
                if (bias->requires_grad) {
                    auto& gb = bias->ensure_grad();
                    for (int c = 0; c < cols; ++c) gb[c] += gy[c];
                }
                if (a->requires_grad) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        double gh = gy[c] * gain->data[c];
                        sum_g += gh;
                        sum_gx += gh * (x[c] - m) * rs;
                    }
                    auto& gx = a->ensure_grad();
                    double* g = gx.data() + r * (size_t)cols;
                    for (int c = 0; c < cols; ++c) {
                        double gh = gy[c] * gain->data[c];
                        double xh = (x[c] - m) * rs;
                        g[c] += rs * (gh - sum_g / cols - xh * sum_gx / cols);
                    }
                }
            }
        };
    }
    return out;
}

// tanh-approximation GELU
inline Tensor gelu(const Tensor& a) {
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < a->size(); ++i) {
        double x = a->data[i];
        out->data[i] = 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
    }
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) {
                double x = a->data[i];
                double u = k * (x + 0.044715 * x * x * x);
                double t = std::tanh(u);
                double du = k * (1.0 + 3.0 * 0.044715 * x * x);
                double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                g[i] += o.grad[i] * d;
            }
        };
    }
    return out;
}

// inverted dropout; eval mode (train=false) is the identity
inline Tensor dropout(const Tensor& a, double rate, Rng& rng, bool train) {
    check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return a;
    double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(a->size());
    Tensor out = make_tensor(a->shape);
    for (size_t i = 0; i < a->size(); ++i) {
        double m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out->data[i] = a->data[i] * m;
    }
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a, mask](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (*mask)[i];
        };
    }
    return out;
}

// additive causal mask on attention scores shaped (..., S, S):
// column j may only be attended from row i when j <= i + offset.
// offset covers incremental decoding where the query block sits
// at the end of a longer key sequence.
inline Tensor add_causal_mask(const Tensor& scores, int offset = 0) {
    int rank = (int)scores->shape.size();
    check(rank >= 2, "causal mask: rank must be >= 2");
    int rows_dim = scores->shape[rank - 2], cols_dim = scores->shape[rank - 1];
    size_t outer = scores->size() / (size_t)(rows_dim * cols_dim);
    constexpr double NEG = -1e30;
    Tensor out = make_tensor(scores->shape);
    for (size_t o = 0; o < outer; ++o) {
        const double* x = scores->data.data() + o * (size_t)rows_dim * cols_dim;
        double* y = out->data.data() + o * (size_t)rows_dim * cols_dim;
        for (int i = 0; i < rows_dim; ++i)
            for (int j = 0; j < cols_dim; ++j)
                y[i * cols_dim + j] = (j <= i + offset) ? x[i * cols_dim + j]
                                                        : x[i * cols_dim + j] + NEG;
    }
    if (track({scores})) {
        out->requires_grad = true;
        out->parents = {scores};
        out->backward_fn = [scores](TensorNode& o) {
            auto& g = scores->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        };
    }
    return out;
}

// row-wise x/‖x‖ on a 2-D tensor (cosine-graph building block);
// backward applies (I − u uᵀ)/‖x‖ per row
inline Tensor l2_normalize_rows(const Tensor& a) {
    check(a->shape.size() == 2, "l2_normalize_rows: expects 2-D");
    int rows = a->shape[0], cols = a->shape[1];
    Tensor out = make_tensor(a->shape);
    auto norms = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const double* x = a->data.data() + (size_t)r * cols;
        double n = 0.0;
        for (int c = 0; c < cols; ++c) n += x[c] * x[c];
        n = std::sqrt(n);
        if (!(n > 0.0) || !std::isfinite(n))
            throw NumericalError("l2_normalize_rows: degenerate row norm");
        (*norms)[r] = n;
        double* y = out->data.data() + (size_t)r * cols;
        for (int c = 0; c < cols; ++c) y[c] = x[c] / n;
    }
    if (track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backward_fn = [a, norms, rows, cols](TensorNode& o) {
            auto& g = a->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const double* u = o.data.data() + (size_t)r * cols;
                const double* gy = o.grad.data() + (size_t)r * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += u[c] * gy[c];
                double inv = 1.0 / (*norms)[r];
                double* gx = g.data() + (size_t)r * cols;
                for (int c = 0; c < cols; ++c) gx[c] += inv * (gy[c] - u[c] * dot);
            }
        };
    }
    return out;
}

inline bool all_finite(const Tensor& t) {
    for (double v : t->data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace arfc
