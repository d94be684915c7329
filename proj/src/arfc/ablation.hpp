#pragma once

#include "evalkit.hpp"

#include <sstream>

namespace arfc {

// ─── Ablation experiments ─────────────────────────────────────
// Toy-scale comparative sweeps along one axis at a time. Each
// cell trains from scratch at its own (value, seed) and reports
// metrics at a fixed ratio grid; assertions over trends belong to
// the caller and are always over seed-means.

enum class AblationAxis { decoders_m, token_length, solutions_k, lambda, schedule, ar_vs_parallel };

inline std::string to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::decoders_m: return "decoders_m";
        case AblationAxis::token_length: return "token_length";
        case AblationAxis::solutions_k: return "solutions_k";
        case AblationAxis::lambda: return "lambda";
        case AblationAxis::schedule: return "schedule";
        case AblationAxis::ar_vs_parallel: return "ar_vs_parallel";
    }
    return "?";
}

struct AblationSpec {
    AblationAxis axis = AblationAxis::lambda;
    std::vector<double> values;     // axis grid (schedule: 0=progressive, 1=uniform, 2=full_grid)
    TrainConfig base;
    std::vector<uint64_t> seeds;
    std::vector<double> eval_ratios = {0.0, 0.5};
    bool train_mos_stage = true;

    void validate() const {
        check(values.size() >= 2, "ablation: need at least 2 grid values");
        check(seeds.size() >= 3, "ablation: need at least 3 seeds per cell");
    }
};

struct AblationCell {
    double value = 0.0;
    uint64_t seed = 0;
    std::string metric;
    double metric_value = 0.0;
};

inline TrainConfig apply_axis(const TrainConfig& base, AblationAxis axis, double v) {
    TrainConfig c = base;
    switch (axis) {
        case AblationAxis::decoders_m: c.M = (int)v; break;
        case AblationAxis::token_length:
            c.arc.T = (int)v;
            check(c.arc.D % c.arc.T == 0, "ablation: D must stay divisible by T");
            break;
        case AblationAxis::solutions_k: c.mos.K = (int)v; break;
        case AblationAxis::lambda: c.lambda = v; break;
        case AblationAxis::schedule:
            c.schedule = v == 0 ? ScheduleMode::progressive
                       : v == 1 ? ScheduleMode::uniform
                                : ScheduleMode::full_grid;
            break;
        case AblationAxis::ar_vs_parallel: break; // handled structurally
    }
    return c;
}

// max |prefix mismatch| between an n1-token code and the first
// n1 tokens of an n2-token code (0 for the causal generator)
inline double prefix_violation(const LayerParams& p, const ArcConfig& cfg,
                               const Tensor& f, bool parallel, Rng& rng) {
    NoGradGuard ng;
    int n1 = cfg.T / 2, n2 = cfg.T;
    Tensor a = parallel ? arc_generate_parallel(p, cfg, f, n1, rng)
                        : arc_generate(p, cfg, f, n1);
    Tensor b = parallel ? arc_generate_parallel(p, cfg, f, n2, rng)
                        : arc_generate(p, cfg, f, n2);
    double worst = 0.0;
    int B = f->dim(0), w = a->dim(1);
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < w; ++k)
            worst = std::max(worst, std::abs(a->data[i * w + k] -
                                             b->data[i * (n2 * cfg.d()) + k]));
    return worst;
}

inline std::vector<AblationCell> run_ablation(const AblationSpec& spec,
                                              const FeatureDataset& ds) {
    spec.validate();
    std::vector<AblationCell> cells;

    if (spec.axis == AblationAxis::ar_vs_parallel) {
        // structural comparison on untrained models: no training
        // budget can restore a property the architecture lacks
        for (uint64_t seed : spec.seeds) {
            Rng rng(seed);
            LayerParams p;
            init_arc_params(p, spec.base.arc, rng);
            Tensor f = gather_features(ds, {0, 1, 2, 3});
            for (double v : spec.values) {
                bool parallel = v != 0;
                double viol = prefix_violation(p, spec.base.arc, f, parallel, rng);
                cells.push_back({v, seed, "prefix_violation", viol});
            }
        }
        return cells;
    }

    for (double v : spec.values) {
        for (uint64_t seed : spec.seeds) {
            TrainConfig cfg = apply_axis(spec.base, spec.axis, v);
            cfg.seed = seed;
            std::ostringstream log;
            Checkpoint ck = train_arc(cfg, ds, &log);
            if (spec.train_mos_stage) train_mos(ck, ds, &log);

            if (spec.axis == AblationAxis::schedule) {
                // loss-curve metrics from the stage-1 log
                std::vector<double> totals;
                std::istringstream in(log.str());
                std::string line;
                while (std::getline(in, line)) {
                    json j = json::parse(line);
                    if (j.at("stage") == "arc") totals.push_back(j.at("total"));
                }
                auto smoothed = [&](size_t at) {
                    size_t lo = at >= 50 ? at - 50 : 0;
                    double s = 0;
                    for (size_t i = lo; i <= at; ++i) s += totals[i];
                    return s / (double)(at - lo + 1);
                };
                cells.push_back({v, seed, "loss_at_25pct", smoothed(totals.size() / 4)});
                cells.push_back({v, seed, "loss_final", smoothed(totals.size() - 1)});
                continue;
            }

            auto rows = evaluate_pipeline(ck, ds, spec.eval_ratios, spec.train_mos_stage);
            for (const auto& row : rows) {
                if (row.direction != "t2i") continue; // one row per ratio
                std::string tag = "@r" + std::to_string(row.ratio).substr(0, 4);
                cells.push_back({v, seed, "mse" + tag, row.mse});
                cells.push_back({v, seed, "r1" + tag, row.r1});
                cells.push_back({v, seed, "relation_err" + tag, row.relation_err});
            }
        }
    }
    return cells;
}

inline std::string ablation_to_csv(const AblationSpec& spec,
                                   const std::vector<AblationCell>& cells) {
    std::ostringstream os;
    os << "axis,value,seed,metric,metric_value\n" << std::setprecision(17);
    for (const auto& c : cells)
        os << to_string(spec.axis) << ',' << c.value << ',' << c.seed << ',' << c.metric
           << ',' << c.metric_value << "\n";
    return os.str();
}

// ─── Dynamic ratio adjustment ─────────────────────────────────
// Classify at a fixed ratio, rank classes by accuracy, then
// re-evaluate with the bottom `hard_frac` classes at an easier
// (lower) ratio and the top `easy_frac` at a harder one.

struct DynamicRatioReport {
    double fixed_accuracy = 0.0;
    double dynamic_accuracy = 0.0;
    std::vector<uint32_t> hard_classes, easy_classes;
};

inline std::vector<double> per_class_accuracy(const std::vector<std::vector<double>>& codes,
                                              const std::vector<uint32_t>& labels,
                                              uint32_t C) {
    std::vector<double> acc(C, 0.0);
    for (uint32_t c = 0; c < C; ++c) {
        std::vector<std::vector<double>> test;
        std::vector<uint32_t> tl;
        for (size_t i = 0; i < codes.size(); ++i)
            if (labels[i] == c) {
                test.push_back(codes[i]);
                tl.push_back(c);
            }
        acc[c] = nearest_centroid_accuracy(codes, labels, test, tl);
    }
    return acc;
}

inline DynamicRatioReport dynamic_ratio_experiment(const Checkpoint& ck,
                                                   const FeatureDataset& ds,
                                                   bool use_mos, double r_fixed,
                                                   double r_hard, double r_easy,
                                                   double hard_frac = 0.15,
                                                   double easy_frac = 0.30) {
    uint32_t C = ds.num_classes();
    std::vector<uint32_t> labels(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) labels[i] = ds.records[i].label;

    auto fixed_codes = compress_dataset(ck, ds, r_fixed, use_mos);
    DynamicRatioReport rep;
    rep.fixed_accuracy = nearest_centroid_accuracy(fixed_codes, labels, fixed_codes, labels);

    auto acc = per_class_accuracy(fixed_codes, labels, C);
    std::vector<uint32_t> order(C);
    for (uint32_t c = 0; c < C; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        return acc[a] != acc[b] ? acc[a] < acc[b] : a < b;
    });
    size_t n_hard = (size_t)(hard_frac * C), n_easy = (size_t)(easy_frac * C);
    rep.hard_classes.assign(order.begin(), order.begin() + n_hard);
    rep.easy_classes.assign(order.end() - n_easy, order.end());

    auto group_ratio = [&](uint32_t label) {
        for (uint32_t h : rep.hard_classes)
            if (h == label) return r_hard;
        for (uint32_t e : rep.easy_classes)
            if (e == label) return r_easy;
        return r_fixed;
    };
    // per-group classification happens in that group's code space
    size_t correct = 0;
    std::vector<double> distinct;
    for (double r : {r_hard, r_fixed, r_easy})
        if (std::find(distinct.begin(), distinct.end(), r) == distinct.end())
            distinct.push_back(r);
    for (double r : distinct) {
        auto codes = (r == r_fixed) ? fixed_codes : compress_dataset(ck, ds, r, use_mos);
        std::vector<std::vector<double>> test;
        std::vector<uint32_t> tl;
        for (size_t i = 0; i < ds.size(); ++i)
            if (group_ratio(labels[i]) == r) {
                test.push_back(codes[i]);
                tl.push_back(labels[i]);
            }
        if (test.empty()) continue;
        double a = nearest_centroid_accuracy(codes, labels, test, tl);
        correct += (size_t)std::llround(a / 100.0 * (double)test.size());
    }
    rep.dynamic_accuracy = 100.0 * (double)correct / (double)ds.size();
    return rep;
}

} // namespace arfc
