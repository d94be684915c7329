#pragma once

#include "ops.hpp"

#include <vector>

namespace arfc {

// Feature <-> token plumbing. A D-length feature is read as T
// contiguous tokens of d = D/T reals; a compressed feature keeps
// the same layout so that any token-aligned prefix is itself a
// valid lower-ratio code.

struct TokenSequence {
    int T = 0;
    int d = 0;
    std::vector<double> values; // T*d, token t occupies [t*d, (t+1)*d)
};

inline TokenSequence tokenize(const std::vector<double>& f, int T) {
    check(T > 0 && f.size() % (size_t)T == 0, "tokenize: D not divisible by T");
    return TokenSequence{T, (int)(f.size() / (size_t)T), f};
}

inline std::vector<double> detokenize(const TokenSequence& s) { return s.values; }

// floor(T*(1-r)) clamped to [1, T]
inline int ratio_to_token_count(double r, int T) {
    check(r >= 0.0 && r < 1.0, "ratio must be in [0,1)");
    int j = (int)std::floor((double)T * (1.0 - r));
    if (j < 1) j = 1;
    if (j > T) j = T;
    return j;
}

// prefix of length d*ratio_to_token_count(r,T)
inline std::vector<double> truncate(const std::vector<double>& f_cmp, double r, int T) {
    check(f_cmp.size() % (size_t)T == 0, "truncate: length not divisible by T");
    int d = (int)(f_cmp.size() / (size_t)T);
    int j = ratio_to_token_count(r, T);
    return std::vector<double>(f_cmp.begin(), f_cmp.begin() + (size_t)j * d);
}

// same truncation on a batched (B, T*d) tensor, in-graph
inline Tensor truncate_batch(const Tensor& f_cmp, double r, int T) {
    int D = f_cmp->dim(1);
    check(D % T == 0, "truncate_batch: length not divisible by T");
    int d = D / T;
    int j = ratio_to_token_count(r, T);
    if (j == T) return f_cmp;
    return slice(f_cmp, 1, 0, j * d);
}

// snap an arbitrary ratio to the training grid {(T-j)/T}
inline double snap_ratio(double r, int T) {
    int j = ratio_to_token_count(r, T);
    return (double)(T - j) / (double)T;
}

} // namespace arfc
