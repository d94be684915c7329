#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arfc/layers.hpp"

using namespace arfc;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = make_tensor(std::move(shape));
    for (auto& v : t->data) v = scale * rng.normal();
    t->requires_grad = true;
    return t;
}

// central finite differences of scalar-valued fn w.r.t. every
// input entry, compared to reverse-mode gradients
double max_rel_grad_err(const std::vector<Tensor>& inputs,
                        const std::function<Tensor()>& fn, double h = 1e-6) {
    for (auto& t : inputs) t->grad.clear();
    Tensor loss = fn();
    backward(loss);
    double worst = 0.0;
    for (auto& t : inputs) {
        REQUIRE(!t->grad.empty());
        for (size_t i = 0; i < t->size(); ++i) {
            double keep = t->data[i];
            t->data[i] = keep + h;
            double up = fn()->data[0];
            t->data[i] = keep - h;
            double dn = fn()->data[0];
            t->data[i] = keep;
            double fd = (up - dn) / (2.0 * h);
            double ad = t->grad[i];
            double denom = std::max({std::abs(fd), std::abs(ad), 1e-4});
            worst = std::max(worst, std::abs(fd - ad) / denom);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("matmul identity cases") {
    Tensor a = make_tensor({2, 2}, {1, 2, 3, 4});
    Tensor i2 = make_tensor({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, i2);
    CHECK(c->data == std::vector<double>{1, 2, 3, 4});

    Tensor v = make_tensor({2, 1}, {5, 7});
    Tensor c2 = matmul(i2, v);
    CHECK(c2->data == std::vector<double>{5, 7});
}

TEST_CASE("matmul shape errors") {
    Tensor a = make_tensor({2, 3});
    Tensor b = make_tensor({2, 3});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul gradient: d/da sum(a@b) = ones @ b^T") {
    Rng rng(7);
    Tensor a = randn({3, 4}, rng);
    Tensor b = randn({4, 2}, rng);
    Tensor loss = sum_all(matmul(a, b));
    backward(loss);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double expect = b->data[j * 2 + 0] + b->data[j * 2 + 1];
            CHECK(a->grad[i * 4 + j] == doctest::Approx(expect).epsilon(1e-12));
        }
    double err = max_rel_grad_err({a, b}, [&] { return sum_all(matmul(a, b)); });
    CHECK(err < 1e-4);
}

TEST_CASE("batched matmul forms and gradients") {
    Rng rng(11);
    Tensor a = randn({2, 3, 4}, rng);
    Tensor w = randn({4, 5}, rng);   // shared weight broadcast
    Tensor b = randn({2, 4, 5}, rng); // per-batch
    CHECK(matmul(a, w)->shape == std::vector<int>{2, 3, 5});
    CHECK(matmul(a, b)->shape == std::vector<int>{2, 3, 5});
    // nonlinear composition so finite differences see both factors
    auto fn1 = [&] { return sq_dist(matmul(a, w), make_tensor({2, 3, 5})); };
    CHECK(max_rel_grad_err({a, w}, fn1) < 1e-4);
    auto fn2 = [&] { return sq_dist(matmul(a, b), make_tensor({2, 3, 5})); };
    CHECK(max_rel_grad_err({a, b}, fn2) < 1e-4);
}

TEST_CASE("softmax: symmetry, stability, brute formula") {
    Tensor z = make_tensor({3}, {0, 0, 0});
    Tensor s = softmax_lastdim(z);
    for (double v : s->data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Tensor big = make_tensor({2}, {1000, 0});
    Tensor sb = softmax_lastdim(big);
    CHECK(sb->data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sb->data[1] == doctest::Approx(0.0).epsilon(1e-12));

    Tensor x = make_tensor({3}, {1, 2, 3});
    Tensor sx = softmax_lastdim(x);
    double z3 = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i)
        CHECK(sx->data[i] == doctest::Approx(std::exp(i + 1.0) / z3).epsilon(1e-14));

    // rows sum to one
    Rng rng(3);
    Tensor r = randn({5, 7}, rng);
    Tensor sr = softmax_lastdim(r);
    for (int row = 0; row < 5; ++row) {
        double sum = 0;
        for (int c = 0; c < 7; ++c) sum += sr->data[row * 7 + c];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax gradient") {
    Rng rng(5);
    Tensor x = randn({2, 6}, rng);
    Tensor tgt = randn({2, 6}, rng);
    tgt->requires_grad = false;
    auto fn = [&] { return sq_dist(softmax_lastdim(x), tgt); };
    CHECK(max_rel_grad_err({x}, fn) < 1e-4);
}

TEST_CASE("layer_norm statistics and gradient") {
    Tensor g1 = ones({4}), b0 = zeros({4});
    Tensor c = make_tensor({4}, {3, 3, 3, 3});
    Tensor lc = layer_norm(c, g1, b0);
    for (double v : lc->data) CHECK(std::abs(v) < 1e-10);

    Tensor pm = make_tensor({2}, {1, -1});
    Tensor g2 = ones({2}), b2 = zeros({2});
    Tensor lp = layer_norm(pm, g2, b2);
    CHECK(lp->data[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(lp->data[1] == doctest::Approx(-1.0).epsilon(1e-4));

    Rng rng(9);
    Tensor x = randn({1, 32}, rng, 2.0);
    Tensor g = ones({32}), b = zeros({32});
    Tensor y = layer_norm(x, g, b);
    double mean = 0, var = 0;
    for (double v : y->data) mean += v;
    mean /= 32;
    for (double v : y->data) var += (v - mean) * (v - mean);
    var /= 32;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-4);

    Tensor gg = randn({8}, rng), bb = randn({8}, rng), xx = randn({3, 8}, rng);
    Tensor tgt = randn({3, 8}, rng);
    tgt->requires_grad = false;
    auto fn = [&] { return sq_dist(layer_norm(xx, gg, bb), tgt); };
    CHECK(max_rel_grad_err({xx, gg, bb}, fn) < 1e-4);
}

TEST_CASE("gelu values and gradient") {
    Tensor z = make_tensor({1}, {0.0});
    CHECK(gelu(z)->data[0] == 0.0);
    Tensor big = make_tensor({1}, {20.0});
    CHECK(gelu(big)->data[0] == doctest::Approx(20.0).epsilon(1e-12));
    Tensor one = make_tensor({1}, {1.0});
    CHECK(gelu(one)->data[0] == doctest::Approx(0.8412).epsilon(1e-3));

    Rng rng(13);
    Tensor x = randn({10}, rng);
    auto fn = [&] { return sum_all(mul(gelu(x), gelu(x))); };
    CHECK(max_rel_grad_err({x}, fn) < 1e-4);
}

TEST_CASE("dropout contracts") {
    Rng rng(1);
    Tensor x = make_tensor({100}, std::vector<double>(100, 1.0));
    Tensor same = dropout(x, 0.0, rng, true);
    CHECK(same->data == x->data);
    Tensor evalm = dropout(x, 0.7, rng, false);
    CHECK(evalm->data == x->data);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), std::invalid_argument);

    // inverted scaling keeps the mean: 1e6 scalar draws
    Rng rng2(42);
    Tensor onev = make_tensor({1}, {1.0});
    double acc = 0.0;
    for (int i = 0; i < 1000000; ++i) acc += dropout(onev, 0.5, rng2, true)->data[0];
    CHECK(std::abs(acc / 1e6 - 1.0) < 0.01);
}

TEST_CASE("mhsa: single token, causal invariance, gradients") {
    Rng rng(21);
    int W = 8, heads = 2;
    LayerParams p;
    p.add("attn.qkv.w", xavier(W, 3 * W, rng));
    p.add("attn.qkv.b", zeros({3 * W}));
    p.add("attn.out.w", xavier(W, W, rng));
    p.add("attn.out.b", zeros({W}));
    CHECK_THROWS_AS(mhsa(make_tensor({1, 1, 6}), p, "attn", 4, false, rng),
                    std::invalid_argument);

    // S=1: attention weight is 1, output = out(value(x))
    Tensor x1 = randn({1, 1, W}, rng);
    Tensor y1 = mhsa(x1, p, "attn", heads, false, rng);
    Tensor qkv = linear(x1, p.at("attn.qkv.w"), p.at("attn.qkv.b"));
    Tensor v = slice(qkv, 2, 2 * W, 3 * W);
    Tensor expect = linear(v, p.at("attn.out.w"), p.at("attn.out.b"));
    for (size_t i = 0; i < y1->size(); ++i)
        CHECK(y1->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));

    // causal: perturbing a later token leaves earlier outputs bitwise unchanged
    Tensor x = randn({1, 4, W}, rng);
    Tensor y = mhsa(x, p, "attn", heads, true, rng);
    Tensor x_pert = make_tensor(x->shape, x->data);
    for (int c = 0; c < W; ++c) x_pert->data[3 * W + c] += 10.0;
    Tensor y_pert = mhsa(x_pert, p, "attn", heads, true, rng);
    for (int s = 0; s < 3; ++s)
        for (int c = 0; c < W; ++c)
            CHECK(y->data[s * W + c] == y_pert->data[s * W + c]);

    // gradient vs finite differences
    Tensor xg = randn({1, 4, W}, rng);
    Tensor tgt = randn({1, 4, W}, rng);
    tgt->requires_grad = false;
    std::vector<Tensor> inputs = {xg, p.at("attn.qkv.w"), p.at("attn.qkv.b"),
                                  p.at("attn.out.w"), p.at("attn.out.b")};
    auto fn = [&] { return sq_dist(mhsa(xg, p, "attn", heads, true, rng), tgt); };
    CHECK(max_rel_grad_err(inputs, fn) < 1e-4);
}

TEST_CASE("transpose, slice, concat, add_bcast gradients") {
    Rng rng(31);
    Tensor a = randn({2, 3, 4}, rng);
    Tensor t = transpose(a, 1, 2);
    CHECK(t->shape == std::vector<int>{2, 4, 3});
    CHECK(t->data[0 * 12 + 2 * 3 + 1] == a->data[0 * 12 + 1 * 4 + 2]);

    Tensor tgt = randn({2, 4, 3}, rng);
    tgt->requires_grad = false;
    CHECK(max_rel_grad_err({a}, [&] { return sq_dist(transpose(a, 1, 2), tgt); }) < 1e-4);

    Tensor s = slice(a, 2, 1, 3);
    CHECK(s->shape == std::vector<int>{2, 3, 2});
    Tensor tgt2 = randn({2, 3, 2}, rng);
    tgt2->requires_grad = false;
    CHECK(max_rel_grad_err({a}, [&] { return sq_dist(slice(a, 2, 1, 3), tgt2); }) < 1e-4);

    Tensor b = randn({2, 2, 4}, rng);
    Tensor cc = concat({a, b}, 1);
    CHECK(cc->shape == std::vector<int>{2, 5, 4});
    Tensor tgt3 = randn({2, 5, 4}, rng);
    tgt3->requires_grad = false;
    CHECK(max_rel_grad_err({a, b}, [&] { return sq_dist(concat({a, b}, 1), tgt3); }) < 1e-4);

    Tensor bias = randn({4}, rng);
    Tensor tgt4 = randn({2, 3, 4}, rng);
    tgt4->requires_grad = false;
    CHECK(max_rel_grad_err({a, bias},
                           [&] { return sq_dist(add_bcast(a, bias), tgt4); }) < 1e-4);
}

TEST_CASE("l2_normalize_rows gradient") {
    Rng rng(33);
    Tensor x = randn({4, 6}, rng);
    Tensor tgt = randn({4, 6}, rng);
    tgt->requires_grad = false;
    CHECK(max_rel_grad_err({x}, [&] { return sq_dist(l2_normalize_rows(x), tgt); }) < 1e-4);
}

TEST_CASE("adamw contracts") {
    // zero gradient + zero weight decay: parameters unchanged
    LayerParams p;
    p.add("w", make_tensor({2}, {1.0, -2.0}));
    p.at("w")->ensure_grad();
    AdamW opt;
    opt.weight_decay = 0.0;
    opt.step(p);
    CHECK(p.at("w")->data == std::vector<double>{1.0, -2.0});

    // one step on f(w)=w^2 from w=1 decreases |w|
    LayerParams q;
    q.add("w", make_tensor({1}, {1.0}));
    AdamW opt2;
    opt2.weight_decay = 0.0;
    q.at("w")->ensure_grad()[0] = 2.0; // d/dw w^2 at 1
    opt2.step(q);
    CHECK(std::abs(q.at("w")->data[0]) < 1.0);

    // 500 steps on a 2-d quadratic reaches loss < 1e-4
    LayerParams r;
    r.add("w", make_tensor({2}, {1.5, -0.8}));
    AdamW opt3;
    opt3.lr = 0.05;
    opt3.weight_decay = 0.0;
    for (int i = 0; i < 500; ++i) {
        auto& w = r.at("w");
        w->grad.clear();
        auto& g = w->ensure_grad();
        g[0] = 2.0 * w->data[0];
        g[1] = 8.0 * w->data[1]; // f = w0^2 + 4 w1^2
        opt3.step(r);
    }
    auto& w = r.at("w");
    double loss = w->data[0] * w->data[0] + 4.0 * w->data[1] * w->data[1];
    CHECK(loss < 1e-4);
}

TEST_CASE("rng determinism and counter independence") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    Rng c(124);
    CHECK(c.next_u64() != Rng(123).next_u64());

    // forward/backward trajectories bitwise identical across runs
    auto run = [] {
        Rng rng(77);
        Tensor x = randn({3, 3}, rng);
        Tensor loss = sq_dist(softmax_lastdim(matmul(x, x)), make_tensor({3, 3}));
        backward(loss);
        return std::make_pair(loss->data[0], x->grad);
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("grad clip rescales to the target norm") {
    LayerParams p;
    p.add("w", make_tensor({2}, {0.0, 0.0}));
    auto& g = p.at("w")->ensure_grad();
    g[0] = 3.0;
    g[1] = 4.0;
    double norm = clip_grad_norm(p, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
}
