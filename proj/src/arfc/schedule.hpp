#pragma once

#include "rng.hpp"
#include "tokenizer.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace arfc {

// ─── Progressive compression schedule ─────────────────────────
// Training ratios are drawn from Beta(α(step), β) and snapped to
// the token grid. α decays geometrically from a strong high-
// compression bias (80) to β (5) over the first 60% of training,
// then stays flat; uniform mode is the fixed Beta(1,1) arm and
// full_grid enumerates every grid point each step.

enum class ScheduleMode { progressive, uniform, full_grid };

inline std::string to_string(ScheduleMode m) {
    switch (m) {
        case ScheduleMode::progressive: return "progressive";
        case ScheduleMode::uniform: return "uniform";
        case ScheduleMode::full_grid: return "full_grid";
    }
    return "?";
}

inline ScheduleMode schedule_mode_from(const std::string& s) {
    if (s == "progressive") return ScheduleMode::progressive;
    if (s == "uniform") return ScheduleMode::uniform;
    if (s == "full_grid" || s == "full-grid") return ScheduleMode::full_grid;
    throw std::invalid_argument("unknown schedule mode: " + s);
}

struct BetaSchedule {
    double alpha_start = 80.0;
    double alpha_end = 5.0;
    double beta = 5.0;
    int total_steps = 1;
    int T = 8;
    ScheduleMode mode = ScheduleMode::progressive;
    double decay_frac = 0.6; // portion of training spent decaying alpha
};

inline double alpha_at(const BetaSchedule& s, int step) {
    check(step >= 0 && step <= s.total_steps, "alpha_at: step out of range");
    if (s.mode == ScheduleMode::uniform) return 1.0;
    double horizon = s.decay_frac * s.total_steps;
    if (horizon <= 0.0 || step >= horizon || s.alpha_start == s.alpha_end)
        return s.alpha_end;
    double t = (double)step / horizon;
    return s.alpha_start * std::pow(s.alpha_end / s.alpha_start, t);
}

inline double beta_at(const BetaSchedule& s) {
    return s.mode == ScheduleMode::uniform ? 1.0 : s.beta;
}

// one grid-snapped ratio
inline double sample_ratio(const BetaSchedule& s, int step, Rng& rng) {
    double r = rng.beta(alpha_at(s, step), beta_at(s));
    if (r >= 1.0) r = std::nextafter(1.0, 0.0);
    return snap_ratio(r, s.T);
}

inline std::vector<double> grid_ratios(int T) {
    std::vector<double> g;
    for (int j = T; j >= 1; --j) g.push_back((double)(T - j) / T);
    return g;
}

// `count` distinct grid ratios: rejection-sample up to 100*count
// draws, then fill from the grid points nearest the last draw.
inline std::vector<double> sample_batch_ratios(const BetaSchedule& s, int step,
                                               int count, Rng& rng) {
    check(count >= 1 && count <= s.T, "sample_batch_ratios: count must be in [1,T]");
    if (s.mode == ScheduleMode::full_grid) return grid_ratios(s.T);

    std::vector<double> out;
    double last = 0.0;
    for (int attempt = 0; (int)out.size() < count && attempt < 100 * count; ++attempt) {
        double r = sample_ratio(s, step, rng);
        last = r;
        if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
    }
    if ((int)out.size() < count) {
        auto grid = grid_ratios(s.T);
        std::sort(grid.begin(), grid.end(), [&](double a, double b) {
            double da = std::abs(a - last), db = std::abs(b - last);
            return da != db ? da < db : a < b;
        });
        for (double g : grid) {
            if ((int)out.size() >= count) break;
            if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace arfc
