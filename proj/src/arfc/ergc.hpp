#pragma once

#include "ops.hpp"

#include <vector>

namespace arfc {

// ─── Entity relation graph constraint ─────────────────────────
// A batch of B entities induces a complete graph whose edge
// weights are pairwise cosine similarities; compressing must not
// bend that graph. The loss is the squared Frobenius norm of the
// difference between the original-space and compressed-space
// graphs. The diagonal (both identically 1) contributes nothing
// and is left in.

// rows: (B, D) -> (B, B) cosine matrix, differentiable
inline Tensor build_graph(const Tensor& batch) {
    check(batch->shape.size() == 2 && batch->dim(0) >= 2,
          "build_graph: need a 2-D batch with B >= 2");
    Tensor n = l2_normalize_rows(batch);
    return matmul(n, transpose(n, 0, 1));
}

inline Tensor ergc_loss(const Tensor& g_ori, const Tensor& g_cmp) {
    check(same_shape(g_ori, g_cmp), "ergc_loss: graph dimension mismatch");
    return sq_dist(g_ori, g_cmp);
}

// Scalar relation-preservation report (no autodiff): mean
// absolute edge disagreement over off-diagonal entries, plus each
// graph's mean off-diagonal similarity for context.
struct RelationScore {
    double agreement_err = 0.0;  // mean |E_ori - E_cmp|, off-diagonal
    double mean_sim_ori = 0.0;
    double mean_sim_cmp = 0.0;
};

inline RelationScore relation_score(const std::vector<std::vector<double>>& original,
                                    const std::vector<std::vector<double>>& compressed) {
    check(original.size() == compressed.size() && original.size() >= 2,
          "relation_score: batches must align, B >= 2");
    size_t B = original.size();
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            d += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return d / (std::sqrt(na) * std::sqrt(nb));
    };
    RelationScore rs;
    size_t pairs = 0;
    for (size_t i = 0; i < B; ++i)
        for (size_t j = i + 1; j < B; ++j) {
            double eo = cosine(original[i], original[j]);
            double ec = cosine(compressed[i], compressed[j]);
            rs.agreement_err += std::abs(eo - ec);
            rs.mean_sim_ori += eo;
            rs.mean_sim_cmp += ec;
            ++pairs;
        }
    rs.agreement_err /= (double)pairs;
    rs.mean_sim_ori /= (double)pairs;
    rs.mean_sim_cmp /= (double)pairs;
    return rs;
}

} // namespace arfc
