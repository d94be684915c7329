#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arfc/ablation.hpp"

using namespace arfc;

namespace {

TrainConfig tiny_base() {
    TrainConfig cfg;
    cfg.arc.D = 16;
    cfg.arc.T = 4;
    cfg.arc.W = 16;
    cfg.arc.layers = 1;
    cfg.arc.heads = 2;
    cfg.arc.ffn_mult = 2;
    cfg.mos.D = 16;
    cfg.mos.K = 2;
    cfg.mos.L = 1;
    cfg.mos.heads = 2;
    cfg.mos.ffn_mult = 2;
    cfg.M = 1;
    cfg.batch = 4;
    cfg.arc_steps = 6;
    cfg.mos_steps = 3;
    cfg.ratios_per_step = 2;
    return cfg;
}

FeatureDataset tiny_data() {
    SynthConfig s;
    s.classes = 2;
    s.pairs_per_class = 6;
    s.D = 16;
    s.latent = 8;
    s.seed = 2;
    return generate_synthetic(s);
}

} // namespace

TEST_CASE("spec validation and axis application") {
    AblationSpec spec;
    spec.base = tiny_base();
    spec.values = {0.0};
    spec.seeds = {1, 2, 3};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.values = {0.0, 0.5};
    spec.seeds = {1, 2};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.seeds = {1, 2, 3};
    spec.validate();

    TrainConfig base = tiny_base();
    CHECK(apply_axis(base, AblationAxis::decoders_m, 3).M == 3);
    CHECK(apply_axis(base, AblationAxis::token_length, 8).arc.T == 8);
    CHECK_THROWS_AS(apply_axis(base, AblationAxis::token_length, 3),
                    std::invalid_argument);
    CHECK(apply_axis(base, AblationAxis::solutions_k, 5).mos.K == 5);
    CHECK(apply_axis(base, AblationAxis::lambda, 0.25).lambda == 0.25);
    CHECK(apply_axis(base, AblationAxis::schedule, 1).schedule == ScheduleMode::uniform);
    CHECK(apply_axis(base, AblationAxis::schedule, 2).schedule ==
          ScheduleMode::full_grid);
}

TEST_CASE("causal generation keeps prefixes; the parallel variant does not") {
    auto ds = tiny_data();
    AblationSpec spec;
    spec.axis = AblationAxis::ar_vs_parallel;
    spec.base = tiny_base();
    spec.values = {0.0, 1.0};
    spec.seeds = {11, 12, 13};
    auto cells = run_ablation(spec, ds);
    REQUIRE(cells.size() == 6);
    for (const auto& c : cells) {
        CHECK(c.metric == "prefix_violation");
        if (c.value == 0.0)
            CHECK(c.metric_value == 0.0); // bitwise for the causal path
        else
            CHECK(c.metric_value > 1e-6);
    }
}

TEST_CASE("trained sweep: cell grid shape and reproducibility") {
    auto ds = tiny_data();
    AblationSpec spec;
    spec.axis = AblationAxis::lambda;
    spec.base = tiny_base();
    spec.values = {0.0, 0.5};
    spec.seeds = {1, 2, 3};
    spec.eval_ratios = {0.0, 0.5};
    auto cells = run_ablation(spec, ds);
    // 2 values x 3 seeds x 2 ratios x 3 metrics
    REQUIRE(cells.size() == 36);
    int mse = 0, r1 = 0, rel = 0;
    for (const auto& c : cells) {
        mse += c.metric.rfind("mse", 0) == 0;
        r1 += c.metric.rfind("r1", 0) == 0;
        rel += c.metric.rfind("relation_err", 0) == 0;
    }
    CHECK(mse == 12);
    CHECK(r1 == 12);
    CHECK(rel == 12);

    auto again = run_ablation(spec, ds);
    for (size_t i = 0; i < cells.size(); ++i) {
        CHECK(cells[i].metric_value == again[i].metric_value);
        CHECK(cells[i].seed == again[i].seed);
    }

    auto csv = ablation_to_csv(spec, cells);
    CHECK(csv.rfind("axis,value,seed,metric,metric_value\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 37);
    CHECK(csv.find("lambda,0.5,") != std::string::npos);
}

TEST_CASE("schedule axis reports loss-curve metrics from the log") {
    auto ds = tiny_data();
    AblationSpec spec;
    spec.axis = AblationAxis::schedule;
    spec.base = tiny_base();
    spec.base.arc_steps = 20;
    spec.values = {0.0, 1.0};
    spec.seeds = {5, 6, 7};
    spec.train_mos_stage = false;
    auto cells = run_ablation(spec, ds);
    REQUIRE(cells.size() == 12); // 2 values x 3 seeds x 2 metrics
    for (const auto& c : cells) {
        CHECK((c.metric == "loss_at_25pct" || c.metric == "loss_final"));
        CHECK(c.metric_value > 0.0);
        CHECK(std::isfinite(c.metric_value));
    }
}

TEST_CASE("per-class accuracy aggregates to the overall rate") {
    // synthetic codes: class 0 along x, class 1 along y, one
    // class-1 point deep inside class 0
    std::vector<std::vector<double>> codes = {
        {1, 0}, {0.9, 0.1}, {0.95, 0.05}, {0, 1}, {0.1, 0.9}, {0.99, 0.01}};
    std::vector<uint32_t> labels = {0, 0, 0, 1, 1, 1};
    auto acc = per_class_accuracy(codes, labels, 2);
    REQUIRE(acc.size() == 2);
    CHECK(acc[0] == 100.0);
    CHECK(acc[1] == doctest::Approx(200.0 / 3.0));
    double overall = nearest_centroid_accuracy(codes, labels, codes, labels);
    CHECK(overall == doctest::Approx((acc[0] * 3 + acc[1] * 3) / 6.0));
}

TEST_CASE("dynamic ratio adjustment experiment") {
    SynthConfig s;
    s.classes = 8;
    s.pairs_per_class = 4;
    s.D = 16;
    s.latent = 8;
    s.seed = 9;
    auto ds = generate_synthetic(s);
    TrainConfig cfg = tiny_base();
    cfg.seed = 41;
    Checkpoint ck = train_arc(cfg, ds);

    auto rep = dynamic_ratio_experiment(ck, ds, false, 0.5, 0.25, 0.75);
    // 15% of 8 classes -> 1 hard, 30% -> 2 easy
    CHECK(rep.hard_classes.size() == 1);
    CHECK(rep.easy_classes.size() == 2);
    CHECK(rep.fixed_accuracy >= 0.0);
    CHECK(rep.fixed_accuracy <= 100.0);
    CHECK(rep.dynamic_accuracy >= 0.0);
    CHECK(rep.dynamic_accuracy <= 100.0);
    // hard and easy sets are disjoint
    for (uint32_t h : rep.hard_classes)
        for (uint32_t e : rep.easy_classes) CHECK(h != e);

    // degenerate call where every group shares the ratio: the
    // dynamic result must equal the fixed one
    auto same = dynamic_ratio_experiment(ck, ds, false, 0.5, 0.5, 0.5);
    CHECK(same.dynamic_accuracy == doctest::Approx(same.fixed_accuracy));
}
