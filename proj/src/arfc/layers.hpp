#pragma once

#include "ops.hpp"

#include <map>
#include <string>

namespace arfc {

// Named parameter store. std::map keeps iteration order sorted,
// which makes serialization and optimizer sweeps deterministic.
struct LayerParams {
    std::map<std::string, Tensor> by_name;

    Tensor& at(const std::string& name) {
        auto it = by_name.find(name);
        check(it != by_name.end(), "missing parameter: " + name);
        return it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = by_name.find(name);
        check(it != by_name.end(), "missing parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return by_name.count(name) > 0; }

    Tensor& add(const std::string& name, Tensor t) {
        check(!by_name.count(name), "duplicate parameter: " + name);
        t->requires_grad = true;
        return by_name[name] = std::move(t);
    }

    void zero_grad() {
        for (auto& [name, t] : by_name) t->grad.clear();
    }

    size_t count() const {
        size_t n = 0;
        for (const auto& [name, t] : by_name) n += t->size();
        return n;
    }
};

// Xavier-uniform init, limit sqrt(6/(fan_in+fan_out))
inline Tensor xavier(int rows, int cols, Rng& rng, double gain = 1.0) {
    double limit = gain * std::sqrt(6.0 / (rows + cols));
    Tensor t = make_tensor({rows, cols});
    for (auto& v : t->data) v = rng.uniform(-limit, limit);
    return t;
}

inline Tensor zeros(std::vector<int> shape) { return make_tensor(std::move(shape)); }

inline Tensor ones(std::vector<int> shape) {
    Tensor t = make_tensor(std::move(shape));
    for (auto& v : t->data) v = 1.0;
    return t;
}

// y = x @ W + b with W stored (in, out); b optional
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    if (b) y = add_bcast(y, b);
    return y;
}

inline void add_linear(LayerParams& p, const std::string& prefix, int in, int out,
                       Rng& rng, double gain = 1.0) {
    p.add(prefix + ".w", xavier(in, out, rng, gain));
    p.add(prefix + ".b", zeros({out}));
}

// ─── Multi-head self-attention ────────────────────────────────
// x: (B, S, W). Fused qkv projection; scaled dot-product with an
// optional causal mask. Attention-internal dropout defaults to 0.
inline Tensor mhsa(const Tensor& x, const LayerParams& p, const std::string& prefix,
                   int heads, bool causal, Rng& rng, double attn_dropout = 0.0,
                   bool train = false) {
    int B = x->dim(0), S = x->dim(1), W = x->dim(2);
    check(W % heads == 0, "mhsa: width not divisible by heads");
    int hd = W / heads;

    Tensor qkv = linear(x, p.at(prefix + ".qkv.w"), p.at(prefix + ".qkv.b")); // (B,S,3W)
    Tensor q = slice(qkv, 2, 0, W);
    Tensor k = slice(qkv, 2, W, 2 * W);
    Tensor v = slice(qkv, 2, 2 * W, 3 * W);
    // (B,S,W) -> (B,heads,S,hd)
    auto split_heads = [&](const Tensor& t) {
        return transpose(reshape(t, {B, S, heads, hd}), 1, 2);
    };
    q = split_heads(q);
    k = split_heads(k);
    v = split_heads(v);

    Tensor scores = matmul(reshape(q, {B * heads, S, hd}),
                           transpose(reshape(k, {B * heads, S, hd}), 1, 2));
    scores = scale(scores, 1.0 / std::sqrt((double)hd));
    if (causal) scores = add_causal_mask(scores);
    Tensor attn = softmax_lastdim(scores);
    if (attn_dropout > 0.0) attn = dropout(attn, attn_dropout, rng, train);

    Tensor ctx = matmul(attn, reshape(v, {B * heads, S, hd})); // (B*heads,S,hd)
    ctx = reshape(transpose(reshape(ctx, {B, heads, S, hd}), 1, 2), {B, S, W});
    return linear(ctx, p.at(prefix + ".out.w"), p.at(prefix + ".out.b"));
}

// Cross-attention flavor used by incremental decoding: a single
// query block (B, Sq, W) attends over separately supplied keys/
// values (B, Skv, W) that already include the query positions.
inline Tensor attention_over(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                             int heads) {
    int B = q_in->dim(0), Sq = q_in->dim(1), W = q_in->dim(2);
    int Skv = k_in->dim(1);
    int hd = W / heads;
    auto split = [&](const Tensor& t, int S) {
        return reshape(transpose(reshape(t, {B, S, heads, hd}), 1, 2), {B * heads, S, hd});
    };
    Tensor q = split(q_in, Sq);
    Tensor k = split(k_in, Skv);
    Tensor v = split(v_in, Skv);
    Tensor scores = scale(matmul(q, transpose(k, 1, 2)), 1.0 / std::sqrt((double)hd));
    // queries sit at the tail of the kv sequence
    scores = add_causal_mask(scores, Skv - Sq);
    Tensor ctx = matmul(softmax_lastdim(scores), v);
    return reshape(transpose(reshape(ctx, {B, heads, Sq, hd}), 1, 2), {B, Sq, W});
}

// Pre-norm transformer block parameters: ln1, qkv/out, ln2, FFN.
inline void add_block(LayerParams& p, const std::string& prefix, int W, int ffn_mult,
                      Rng& rng) {
    p.add(prefix + ".ln1.g", ones({W}));
    p.add(prefix + ".ln1.b", zeros({W}));
    p.add(prefix + ".attn.qkv.w", xavier(W, 3 * W, rng));
    p.add(prefix + ".attn.qkv.b", zeros({3 * W}));
    // damped output projections keep the residual stream near
    // identity at init, which stabilizes free-running generation
    p.add(prefix + ".attn.out.w", xavier(W, W, rng, 0.1));
    p.add(prefix + ".attn.out.b", zeros({W}));
    p.add(prefix + ".ln2.g", ones({W}));
    p.add(prefix + ".ln2.b", zeros({W}));
    p.add(prefix + ".ffn.in.w", xavier(W, ffn_mult * W, rng));
    p.add(prefix + ".ffn.in.b", zeros({ffn_mult * W}));
    p.add(prefix + ".ffn.out.w", xavier(ffn_mult * W, W, rng, 0.1));
    p.add(prefix + ".ffn.out.b", zeros({W}));
}

inline Tensor ffn(const Tensor& x, const LayerParams& p, const std::string& prefix) {
    Tensor h = gelu(linear(x, p.at(prefix + ".in.w"), p.at(prefix + ".in.b")));
    return linear(h, p.at(prefix + ".out.w"), p.at(prefix + ".out.b"));
}

inline Tensor block_forward(const Tensor& x, const LayerParams& p,
                            const std::string& prefix, int heads, bool causal,
                            Rng& rng) {
    Tensor h = add(x, mhsa(layer_norm(x, p.at(prefix + ".ln1.g"), p.at(prefix + ".ln1.b")),
                           p, prefix + ".attn", heads, causal, rng));
    return add(h, ffn(layer_norm(h, p.at(prefix + ".ln2.g"), p.at(prefix + ".ln2.b")),
                      p, prefix + ".ffn"));
}

// ─── AdamW ────────────────────────────────────────────────────
// Decoupled weight decay; per-parameter step counters so sparsely
// updated parameters (routed decoder clusters) keep correct bias
// correction.
struct AdamW {
    double lr = 0.001;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::map<std::string, std::vector<double>> m, v;
    std::map<std::string, int64_t> steps;

    // update every named parameter that currently has a gradient
    void step(LayerParams& params) {
        for (auto& [name, t] : params.by_name) {
            if (t->grad.empty()) continue;
            auto& mi = m[name];
            auto& vi = v[name];
            if (mi.empty()) {
                mi.assign(t->size(), 0.0);
                vi.assign(t->size(), 0.0);
            }
            check(mi.size() == t->size(), "adamw: parameter size changed: " + name);
            int64_t s = ++steps[name];
            double bc1 = 1.0 - std::pow(beta1, (double)s);
            double bc2 = 1.0 - std::pow(beta2, (double)s);
            for (size_t i = 0; i < t->size(); ++i) {
                double g = t->grad[i];
                mi[i] = beta1 * mi[i] + (1.0 - beta1) * g;
                vi[i] = beta2 * vi[i] + (1.0 - beta2) * g * g;
                double mhat = mi[i] / bc1;
                double vhat = vi[i] / bc2;
                t->data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) +
                                    weight_decay * t->data[i]);
            }
        }
    }
};

// scale all present grads so the global norm is at most max_norm
inline double clip_grad_norm(LayerParams& params, double max_norm) {
    double total = 0.0;
    for (auto& [name, t] : params.by_name)
        for (double g : t->grad) total += g * g;
    total = std::sqrt(total);
    if (total > max_norm && total > 0.0) {
        double s = max_norm / total;
        for (auto& [name, t] : params.by_name)
            for (double& g : t->grad) g *= s;
    }
    return total;
}

} // namespace arfc
