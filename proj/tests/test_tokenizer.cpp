#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arfc/tokenizer.hpp"

using namespace arfc;

TEST_CASE("tokenize layout and round trip") {
    std::vector<double> f = {1, 2, 3, 4, 5, 6, 7, 8};
    auto s = tokenize(f, 4);
    CHECK(s.T == 4);
    CHECK(s.d == 2);
    CHECK(std::vector<double>(s.values.begin(), s.values.begin() + 2) ==
          std::vector<double>{1, 2});
    CHECK(std::vector<double>(s.values.begin() + 6, s.values.end()) ==
          std::vector<double>{7, 8});

    auto s1 = tokenize(f, 1);
    CHECK(s1.T == 1);
    CHECK(detokenize(s1) == f);

    Rng rng(5);
    std::vector<double> r(24);
    for (auto& v : r) v = rng.normal();
    CHECK(detokenize(tokenize(r, 8)) == r);

    CHECK_THROWS_AS(tokenize(f, 3), std::invalid_argument);
}

TEST_CASE("ratio_to_token_count") {
    CHECK(ratio_to_token_count(0.0, 16) == 16);
    CHECK(ratio_to_token_count(0.9375, 16) == 1);
    CHECK(ratio_to_token_count(0.33, 16) == 10);
    CHECK(ratio_to_token_count(0.999, 8) == 1); // clamp to one token
    CHECK_THROWS_AS(ratio_to_token_count(1.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(ratio_to_token_count(-0.1, 8), std::invalid_argument);
}

TEST_CASE("truncate lengths") {
    std::vector<double> f1024(1024);
    for (size_t i = 0; i < f1024.size(); ++i) f1024[i] = (double)i;
    CHECK(truncate(f1024, 0.5, 16).size() == 512);
    CHECK(truncate(f1024, 0.0, 16) == f1024);

    std::vector<double> f64(64);
    for (size_t i = 0; i < f64.size(); ++i) f64[i] = (double)i;
    CHECK(truncate(f64, 0.30, 8).size() == 40); // floor(8*0.7)=5 tokens

    // length formula holds across the whole grid
    for (double r : {0.0, 0.1, 0.25, 0.5, 0.77, 0.875, 0.99})
        CHECK(truncate(f64, r, 8).size() == (size_t)8 * ratio_to_token_count(r, 8));
}

TEST_CASE("prefix property: higher ratio codes are prefixes of lower") {
    Rng rng(9);
    std::vector<double> f(64);
    for (auto& v : f) v = rng.normal();
    auto lo = truncate(f, 0.25, 8);
    auto hi = truncate(f, 0.75, 8);
    CHECK(hi.size() < lo.size());
    CHECK(std::equal(hi.begin(), hi.end(), lo.begin()));
}

TEST_CASE("truncate_batch matches per-vector truncate") {
    Rng rng(3);
    Tensor batch = make_tensor({2, 16});
    for (auto& v : batch->data) v = rng.normal();
    Tensor cut = truncate_batch(batch, 0.5, 4);
    CHECK(cut->shape == std::vector<int>{2, 8});
    for (int b = 0; b < 2; ++b) {
        std::vector<double> row(batch->data.begin() + b * 16,
                                batch->data.begin() + (b + 1) * 16);
        auto t = truncate(row, 0.5, 4);
        for (int i = 0; i < 8; ++i) CHECK(cut->data[b * 8 + i] == t[i]);
    }
}

TEST_CASE("snap_ratio lands on the grid") {
    CHECK(snap_ratio(0.0, 8) == 0.0);
    CHECK(snap_ratio(0.5, 8) == 0.5);
    CHECK(snap_ratio(0.30, 8) == doctest::Approx(3.0 / 8));
    CHECK(snap_ratio(0.95, 8) == doctest::Approx(7.0 / 8));
}
