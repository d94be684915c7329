#pragma once

#include "arc.hpp"

namespace arfc {

// ─── Mixture of Solutions ─────────────────────────────────────
// K Monte-Carlo dropout views of the compressed feature are
// refined jointly through L blocks of full self-attention over
// the length-(2K+1) sequence [S ; MoS_{l-1} ; C]: the original
// solutions, the previous block's refinement, and a learnable
// compression token whose final state is the refined feature.
// Tokens are D-wide — the solution matrix is attended as-is.

struct MosConfig {
    int D = 64;
    int K = 5;        // solutions
    int L = 2;        // blocks
    int heads = 4;
    int ffn_mult = 4;
    bool use_pos = true; // test switch for the permutation-invariance check

    void validate() const {
        check(K >= 1 && L >= 1, "mos config: K and L must be >= 1");
        check(D % heads == 0, "mos config: D must be divisible by heads");
    }
};

inline void init_mos_params(LayerParams& p, const MosConfig& cfg, Rng& rng) {
    cfg.validate();
    Tensor c = make_tensor({cfg.D});
    for (auto& v : c->data) v = 0.02 * rng.normal();
    p.add("mos.ctoken", c);
    Tensor pos = make_tensor({2 * cfg.K + 1, cfg.D});
    for (auto& v : pos->data) v = 0.02 * rng.normal();
    p.add("mos.pos", pos);
    for (int l = 0; l < cfg.L; ++l)
        add_block(p, "mos.block" + std::to_string(l), cfg.D, cfg.ffn_mult, rng);
}

inline size_t mos_param_count(const MosConfig& cfg) {
    size_t D = cfg.D, F = (size_t)cfg.ffn_mult * D;
    size_t block = 2 * D + D * 3 * D + 3 * D + D * D + D + 2 * D + D * F + F + F * D + D;
    return D + (size_t)(2 * cfg.K + 1) * D + (size_t)cfg.L * block;
}

// row k = dropout(f_cmp, dr_k), rates evenly spaced in [0.1,0.9]
// (eval mode: K identical copies)
inline Tensor make_solutions(const Tensor& f_cmp, int K, Rng& rng, bool train) {
    int B = f_cmp->dim(0), D = f_cmp->dim(1);
    auto rates = spaced_rates(K);
    std::vector<Tensor> rows;
    rows.reserve(K);
    for (int k = 0; k < K; ++k)
        rows.push_back(reshape(dropout(f_cmp, rates[k], rng, train), {B, 1, D}));
    return concat(rows, 1); // (B, K, D)
}

// S: (B, K, D) -> refined feature (B, D)
inline Tensor mos_refine(const LayerParams& p, const MosConfig& cfg, const Tensor& S) {
    int B = S->dim(0), K = S->dim(1), D = S->dim(2);
    check(K == cfg.K && D == cfg.D, "mos_refine: solution matrix shape mismatch");
    Rng dummy(0); // blocks run without dropout
    Tensor prev = S;                                           // MoS_0 := S
    Tensor c = reshape(p.at("mos.ctoken"), {1, D});
    Tensor ctok = add_bcast(make_tensor({B, 1, D}), c);        // broadcast to batch
    for (int l = 0; l < cfg.L; ++l) {
        Tensor x = concat({S, prev, ctok}, 1);                 // (B, 2K+1, D)
        if (cfg.use_pos) x = add_bcast(x, p.at("mos.pos"));
        x = block_forward(x, p, "mos.block" + std::to_string(l), cfg.heads,
                          /*causal=*/false, dummy);
        prev = slice(x, 1, K, 2 * K);
        ctok = slice(x, 1, 2 * K, 2 * K + 1);
    }
    return reshape(ctok, {B, D});
}

// Stage-2 objective: ARC frozen (codes generated without graph),
// the stage-1 loss form applied to the refined feature through
// the MoS decoder pool.
inline Tensor mos_forward_loss(const LayerParams& arc_p, const ArcConfig& arc_cfg,
                               const LayerParams& mos_p, const MosConfig& mos_cfg,
                               const DecoderPool& mos_pool, const Tensor& f,
                               const std::vector<double>& ratios, double lambda,
                               Rng& rng, bool train, LossParts* parts = nullptr) {
    check(!ratios.empty(), "mos_forward_loss: empty ratio set");
    check(f->dim(0) >= 2, "mos_forward_loss: batch must be >= 2 for relation graphs");
    Tensor f_cmp;
    {
        NoGradGuard ng; // ARC is frozen: no graph into its parameters
        f_cmp = arc_generate(arc_p, arc_cfg, f, arc_cfg.T);
    }
    Tensor sol = make_solutions(f_cmp, mos_cfg.K, rng, train);
    Tensor refined = mos_refine(mos_p, mos_cfg, sol);
    Tensor g_ori = build_graph(f);

    Tensor total = scalar_tensor(0.0);
    LossParts acc;
    for (double r : ratios) {
        int j = mos_pool.route(r);
        Tensor code = truncate_batch(refined, r, arc_cfg.T);
        auto rec = mos_pool.reconstruct(mos_p, j, code, rng, train);
        auto [l_rec, l_aux] = reconstruction_losses(f, rec);
        Tensor l_ergc = ergc_loss(g_ori, build_graph(code));
        total = add(total, add(l_rec, add(scale(l_aux, 1.0 / mos_pool.cfg.M),
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
