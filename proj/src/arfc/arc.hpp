#pragma once

#include "decoderpool.hpp"
#include "ergc.hpp"
#include "layers.hpp"
#include "tokenizer.hpp"

namespace arfc {

// ─── Arbitrary Ratio Compressor ───────────────────────────────
// A causal transformer over 2T positions: the T input tokens of
// the feature occupy positions 0..T-1, generated compressed
// tokens occupy T..2T-1. Generation is free-running and
// deterministic — each emitted token is embedded and fed back,
// and in a grad-enabled context the graph spans the whole chain.
// Per-layer key/value tensors from earlier positions are reused
// by later steps, so the chain costs one single-position pass per
// generated token.

struct ArcConfig {
    int D = 64;
    int T = 8;
    int W = 32;      // model width
    int layers = 2;
    int heads = 4;
    int ffn_mult = 4;

    int d() const { return D / T; }

    void validate() const {
        check(T > 0 && D % T == 0, "arc config: D must be divisible by T");
        check(heads > 0 && W % heads == 0, "arc config: W must be divisible by heads");
        check(layers >= 1, "arc config: layers must be >= 1");
    }
};

inline void init_arc_params(LayerParams& p, const ArcConfig& cfg, Rng& rng) {
    cfg.validate();
    add_linear(p, "arc.in", cfg.d(), cfg.W, rng);
    Tensor pos = make_tensor({2 * cfg.T, cfg.W});
    for (auto& v : pos->data) v = 0.02 * rng.normal();
    p.add("arc.pos", pos);
    for (int l = 0; l < cfg.layers; ++l)
        add_block(p, "arc.block" + std::to_string(l), cfg.W, cfg.ffn_mult, rng);
    p.add("arc.lnf.g", ones({cfg.W}));
    p.add("arc.lnf.b", zeros({cfg.W}));
    add_linear(p, "arc.out", cfg.W, cfg.d(), rng, 0.1);
}

inline size_t arc_param_count(const ArcConfig& cfg) {
    size_t W = cfg.W, d = cfg.d(), F = (size_t)cfg.ffn_mult * W;
    size_t block = 2 * W                 // ln1
                   + W * 3 * W + 3 * W   // qkv
                   + W * W + W           // attn out
                   + 2 * W               // ln2
                   + W * F + F           // ffn in
                   + F * W + W;          // ffn out
    return d * W + W                     // in proj
           + 2 * (size_t)cfg.T * W      // pos table
           + (size_t)cfg.layers * block
           + 2 * W                       // final ln
           + W * d + d;                  // out proj
}

namespace detail {

// embed one or more tokens: (B, S, d) -> in-proj + positions
// [pos_start, pos_start+S)
inline Tensor embed(const LayerParams& p, const ArcConfig& cfg, const Tensor& toks,
                    int pos_start) {
    int S = toks->dim(1);
    Tensor h = linear(toks, p.at("arc.in.w"), p.at("arc.in.b"));
    return add_bcast(h, slice(p.at("arc.pos"), 0, pos_start, pos_start + S));
}

struct KvCache {
    std::vector<Tensor> k, v; // per layer, (B, S_seen, W)
};

// causal pass over a block of positions, extending the cache
inline Tensor cached_pass(const LayerParams& p, const ArcConfig& cfg, Tensor x,
                          KvCache& cache) {
    int W = cfg.W;
    for (int l = 0; l < cfg.layers; ++l) {
        std::string pre = "arc.block" + std::to_string(l);
        Tensor xn = layer_norm(x, p.at(pre + ".ln1.g"), p.at(pre + ".ln1.b"));
        Tensor qkv = linear(xn, p.at(pre + ".attn.qkv.w"), p.at(pre + ".attn.qkv.b"));
        Tensor q = slice(qkv, 2, 0, W);
        Tensor k = slice(qkv, 2, W, 2 * W);
        Tensor v = slice(qkv, 2, 2 * W, 3 * W);
        if ((int)cache.k.size() <= l) {
            cache.k.push_back(k);
            cache.v.push_back(v);
        } else {
            cache.k[l] = concat({cache.k[l], k}, 1);
            cache.v[l] = concat({cache.v[l], v}, 1);
        }
        Tensor ctx = attention_over(q, cache.k[l], cache.v[l], cfg.heads);
        x = add(x, linear(ctx, p.at(pre + ".attn.out.w"), p.at(pre + ".attn.out.b")));
        x = add(x, ffn(layer_norm(x, p.at(pre + ".ln2.g"), p.at(pre + ".ln2.b")),
                       p, pre + ".ffn"));
    }
    return x;
}

inline Tensor head(const LayerParams& p, const Tensor& h) {
    Tensor hn = layer_norm(h, p.at("arc.lnf.g"), p.at("arc.lnf.b"));
    return linear(hn, p.at("arc.out.w"), p.at("arc.out.b"));
}

} // namespace detail

// f: (B, D) batch of features; returns (B, n_tokens*d) codes.
inline Tensor arc_generate(const LayerParams& p, const ArcConfig& cfg, const Tensor& f,
                           int n_tokens) {
    check(n_tokens >= 1 && n_tokens <= cfg.T, "arc_generate: n_tokens out of range");
    check(f->shape.size() == 2 && f->dim(1) == cfg.D, "arc_generate: feature dim mismatch");
    int B = f->dim(0), T = cfg.T, d = cfg.d();

    detail::KvCache cache;
    Tensor h = detail::cached_pass(p, cfg, detail::embed(p, cfg, reshape(f, {B, T, d}), 0),
                                   cache);
    std::vector<Tensor> out_tokens;
    Tensor tok = detail::head(p, slice(h, 1, T - 1, T)); // (B,1,d) = z_{T+1}
    out_tokens.push_back(tok);
    for (int t = 1; t < n_tokens; ++t) {
        Tensor x = detail::embed(p, cfg, tok, T + t - 1);
        tok = detail::head(p, detail::cached_pass(p, cfg, x, cache));
        out_tokens.push_back(tok);
    }
    return reshape(concat(out_tokens, 1), {B, n_tokens * d});
}

// Ablation comparator: emit all n tokens in one non-causal pass
// over [input tokens ; n empty slots at positions T..T+n-1].
// Because every output attends over the whole (n-dependent)
// sequence, codes for different n do not share prefixes — the
// structural property the causal model provides for free.
inline Tensor arc_generate_parallel(const LayerParams& p, const ArcConfig& cfg,
                                    const Tensor& f, int n_tokens, Rng& rng) {
    check(n_tokens >= 1 && n_tokens <= cfg.T, "arc_generate_parallel: n_tokens out of range");
    int B = f->dim(0), T = cfg.T, d = cfg.d();
    Tensor h_in = detail::embed(p, cfg, reshape(f, {B, T, d}), 0);
    Tensor slots = add_bcast(make_tensor({B, n_tokens, cfg.W}),
                             slice(p.at("arc.pos"), 0, T, T + n_tokens));
    Tensor x = concat({h_in, slots}, 1);
    for (int l = 0; l < cfg.layers; ++l)
        x = block_forward(x, p, "arc.block" + std::to_string(l), cfg.heads,
                          /*causal=*/false, rng);
    Tensor out = detail::head(p, slice(x, 1, T, T + n_tokens));
    return reshape(out, {B, n_tokens * d});
}

// ─── Stage-1 objective ────────────────────────────────────────

struct LossParts {
    double l_rec = 0.0;
    double l_aux = 0.0;   // raw sum over aux decoders (pre 1/M)
    double l_ergc = 0.0;
    double total = 0.0;
};

// Σ over sampled ratios of L_rec + (1/M)·L_aux + λ·L_ERGC, each
// term summed over the batch. The relation graph of the originals
// is built once; compressed graphs live in the truncated space.
inline Tensor arc_forward_loss(const LayerParams& p, const ArcConfig& cfg,
                               const DecoderPool& pool, const Tensor& f,
                               const std::vector<double>& ratios, double lambda,
                               Rng& rng, bool train, LossParts* parts = nullptr) {
    check(!ratios.empty(), "arc_forward_loss: empty ratio set");
    check(f->dim(0) >= 2, "arc_forward_loss: batch must be >= 2 for relation graphs");
    Tensor f_cmp = arc_generate(p, cfg, f, cfg.T);
    Tensor g_ori = build_graph(f);

    Tensor total = scalar_tensor(0.0);
    LossParts acc;
    for (double r : ratios) {
        int j = pool.route(r);
        Tensor code = truncate_batch(f_cmp, r, cfg.T);
        auto rec = pool.reconstruct(p, j, code, rng, train);
        auto [l_rec, l_aux] = reconstruction_losses(f, rec);
        Tensor l_ergc = ergc_loss(g_ori, build_graph(code));
        total = add(total, add(l_rec, add(scale(l_aux, 1.0 / pool.cfg.M),
                                          scale(l_ergc, lambda))));
        acc.l_rec += l_rec->data[0];
        acc.l_aux += l_aux->data[0];
        acc.l_ergc += l_ergc->data[0];
    }
    acc.total = total->data[0];
    if (parts) *parts = acc;
    return total;
}

} // namespace arfc
