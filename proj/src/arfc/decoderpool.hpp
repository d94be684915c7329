#pragma once

#include "layers.hpp"
#include "tokenizer.hpp"

#include <vector>

namespace arfc {

// ─── Decoder pool ─────────────────────────────────────────────
// One cluster per retained-token count j in {1..T}. A cluster is
// a single-FC main decoder (j*d -> D) plus M auxiliary decoders
// fed Monte-Carlo dropout views of the code. Decoders exist only
// for training; inference never routes through them.
//
// Aux dropout rates are M fixed values evenly spaced in
// [0.1, 0.9] (M=1 degenerates to 0.5) rather than resampled per
// step, so every view is replayable from (seed, step, m).

inline std::vector<double> spaced_rates(int M) {
    std::vector<double> r(M);
    if (M == 1) {
        r[0] = 0.5;
    } else {
        for (int m = 0; m < M; ++m)
            r[m] = 0.1 + 0.8 * (double)m / (double)(M - 1);
    }
    return r;
}

struct DecoderPoolConfig {
    int D = 64;
    int T = 8;
    int M = 5;
};

struct DecoderPool {
    DecoderPoolConfig cfg;
    std::string prefix;          // parameter namespace, e.g. "arcpool"
    std::vector<double> rates;   // shared by all clusters

    static std::string main_name(const std::string& prefix, int j) {
        return prefix + ".j" + std::to_string(j) + ".main";
    }
    static std::string aux_name(const std::string& prefix, int j, int m) {
        return prefix + ".j" + std::to_string(j) + ".aux" + std::to_string(m);
    }

    void init(LayerParams& p, Rng& rng) const {
        int d = cfg.D / cfg.T;
        for (int j = 1; j <= cfg.T; ++j) {
            add_linear(p, main_name(prefix, j), j * d, cfg.D, rng);
            for (int m = 0; m < cfg.M; ++m)
                add_linear(p, aux_name(prefix, j, m), j * d, cfg.D, rng);
        }
    }

    // (M+1)*(j*d*D + D) per cluster, summed over the grid
    size_t param_count() const {
        int d = cfg.D / cfg.T;
        size_t n = 0;
        for (int j = 1; j <= cfg.T; ++j)
            n += (size_t)(cfg.M + 1) * ((size_t)j * d * cfg.D + cfg.D);
        return n;
    }

    int route(double r) const {
        int j = ratio_to_token_count(r, cfg.T);
        return j; // grid is dense in {1..T}, lookup is total
    }

    struct Reconstruction {
        Tensor main;               // (B, D)
        std::vector<Tensor> aux;   // M of (B, D)
    };

    // code: (B, j*d) truncated batch
    Reconstruction reconstruct(const LayerParams& p, int j, const Tensor& code,
                               Rng& rng, bool train) const {
        int d = cfg.D / cfg.T;
        check(code->dim(1) == j * d, "reconstruct: code length mismatch");
        Reconstruction out;
        out.main = linear(code, p.at(main_name(prefix, j) + ".w"),
                          p.at(main_name(prefix, j) + ".b"));
        out.aux.reserve(cfg.M);
        for (int m = 0; m < cfg.M; ++m) {
            Tensor view = dropout(code, rates[m], rng, train);
            out.aux.push_back(linear(view, p.at(aux_name(prefix, j, m) + ".w"),
                                     p.at(aux_name(prefix, j, m) + ".b")));
        }
        return out;
    }
};

inline DecoderPool make_pool(DecoderPoolConfig cfg, std::string prefix) {
    DecoderPool p;
    p.cfg = cfg;
    p.prefix = std::move(prefix);
    p.rates = spaced_rates(cfg.M);
    return p;
}

// L_rec = Σ‖f_ori − f_rec‖², L_aux = Σ_m Σ‖f_ori − f_aux^m‖²,
// both summed over the batch
inline std::pair<Tensor, Tensor> reconstruction_losses(
    const Tensor& f_ori, const DecoderPool::Reconstruction& rec) {
    Tensor l_rec = sq_dist(f_ori, rec.main);
    Tensor l_aux = scalar_tensor(0.0);
    for (const auto& a : rec.aux) l_aux = add(l_aux, sq_dist(f_ori, a));
    return {l_rec, l_aux};
}

} // namespace arfc
