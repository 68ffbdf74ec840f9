#include <doctest.h>

#include "hfw/gradcheck.hpp"
#include "hfw/gradsuite.hpp"
#include "hfw/ops.hpp"

using namespace hfw;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and hand-computed cases") {
    TensorD eye = TensorD::from({2, 2}, {1, 0, 0, 1});
    TensorD a = TensorD::from({2, 2}, {1, 2, 3, 4});
    TensorD r = matmul(eye, a);
    for (size_t i = 0; i < 4; ++i) CHECK(r.values()[i] == doctest::Approx(a.values()[i]));

    TensorD row = TensorD::from({1, 2}, {1, 2});
    TensorD col = TensorD::from({2, 1}, {3, 4});
    CHECK(matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul batched broadcasting") {
    Rng rng(7);
    TensorD a = TensorD::normal({3, 2, 4, 5}, 0, 1, rng);
    TensorD b = TensorD::normal({5, 6}, 0, 1, rng);
    TensorD r = matmul(a, b);
    CHECK(r.shape() == Shape{3, 2, 4, 6});
    // spot-check one slice against a plain loop
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    const double* pr = r.values().data();
    const int64_t slice = 1 * 2 + 1;  // lead index (1,1)
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 6; ++j) {
            double acc = 0;
            for (int64_t k = 0; k < 5; ++k) acc += pa[slice * 20 + i * 5 + k] * pb[k * 6 + j];
            CHECK(pr[slice * 24 + i * 6 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("matmul shape errors name both shapes") {
    TensorD a = TensorD::zeros({2, 3});
    TensorD b = TensorD::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2, 3]"), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("[4, 2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(11);
    TensorD a = TensorD::normal({3, 4}, 0, 1, rng, true).set_name("a");
    TensorD b = TensorD::normal({4, 2}, 0, 1, rng, true).set_name("b");
    auto report = grad_check([&] { return sum(matmul(a, b)); }, {a, b}, 1e-4);
    CHECK(report.passed);
}

TEST_CASE("clamp saturation, identity, gradient mask") {
    TensorD x = TensorD::from({3}, {-2, 0.5, 3});
    TensorD y = clamp(x, -1.0, 1.0);
    CHECK(y.values()[0] == -1.0);
    CHECK(y.values()[1] == 0.5);
    CHECK(y.values()[2] == 1.0);

    TensorD inside = TensorD::from({3}, {-0.3, 0.0, 0.9});
    TensorD same = clamp(inside, -1.0, 1.0);
    for (size_t i = 0; i < 3; ++i) CHECK(same.values()[i] == inside.values()[i]);

    TensorD xg = TensorD::from({3}, {-2, 0.5, 3}, true);
    sum(clamp(xg, -1.0, 1.0)).backward();
    CHECK(xg.grad()[0] == 0.0);
    CHECK(xg.grad()[1] == 1.0);
    CHECK(xg.grad()[2] == 0.0);

    // pass-through subgradient exactly at the boundary
    TensorD xb = TensorD::from({2}, {-1.0, 1.0}, true);
    sum(clamp(xb, -1.0, 1.0)).backward();
    CHECK(xb.grad()[0] == 1.0);
    CHECK(xb.grad()[1] == 1.0);

    CHECK_THROWS_AS(clamp(x, 2.0, -2.0), ArgumentError);
}

TEST_CASE("layer_norm zero input and two-point row") {
    TensorD zeros = TensorD::zeros({2, 4});
    TensorD gamma = TensorD::ones({4});
    TensorD beta = TensorD::zeros({4});
    TensorD out = layer_norm(zeros, gamma, beta, 1e-5);
    for (double v : out.values()) CHECK(v == 0.0);

    TensorD x = TensorD::from({1, 2}, {1, 3});
    TensorD g2 = TensorD::ones({2});
    TensorD b2 = TensorD::zeros({2});
    TensorD y = layer_norm(x, g2, b2, 1e-12);
    CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm output statistics") {
    Rng rng(3);
    TensorD x = TensorD::normal({8, 16}, 1.5, 2.0, rng);
    TensorD out = layer_norm(x, TensorD::ones({16}), TensorD::zeros({16}), 1e-6);
    for (int64_t r = 0; r < 8; ++r) {
        double mean = 0, var = 0;
        for (int64_t j = 0; j < 16; ++j) mean += out.values()[r * 16 + j];
        mean /= 16;
        for (int64_t j = 0; j < 16; ++j) {
            const double d = out.values()[r * 16 + j] - mean;
            var += d * d;
        }
        var /= 16;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
    CHECK_THROWS_AS(layer_norm(x, TensorD::ones({5}), TensorD::zeros({5}), 1e-6), DimensionError);
}

TEST_CASE("elementwise kernel spot values") {
    CHECK(sigmoid(TensorD::scalar(0.0)).item() == doctest::Approx(0.5));
    TensorD sm = softmax_lastdim(TensorD::zeros({3}));
    for (double v : sm.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
    Rng rng(5);
    TensorD a = TensorD::normal({4}, 0, 1, rng);
    TensorD prod = hadamard(a, TensorD::ones({4}));
    for (size_t i = 0; i < 4; ++i) CHECK(prod.values()[i] == a.values()[i]);
    CHECK_THROWS_AS(add(TensorD::zeros({3}), TensorD::zeros({2})), DimensionError);
}

TEST_CASE("softmax rows are a distribution") {
    Rng rng(9);
    TensorD x = TensorD::normal({6, 7}, 0, 3, rng);
    TensorD y = softmax_lastdim(x);
    for (int64_t r = 0; r < 6; ++r) {
        double s = 0;
        for (int64_t j = 0; j < 7; ++j) {
            CHECK(y.values()[r * 7 + j] >= 0.0);
            s += y.values()[r * 7 + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("frobenius_normalize values and bound") {
    TensorD zero = TensorD::zeros({2, 2});
    TensorD z = frobenius_normalize(zero, 1e-6);
    for (double v : z.values()) CHECK(v == 0.0);

    TensorD m = TensorD::from({2, 2}, {3, 4, 0, 0});
    TensorD n = frobenius_normalize(m, 1e-6);
    CHECK(n.values()[0] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(n.values()[1] == doctest::Approx(0.8).epsilon(1e-6));

    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        TensorD r = TensorD::normal({3, 4, 4}, 0, std::pow(10.0, rng.uniform(-3, 3)), rng);
        TensorD out = frobenius_normalize(r, 1e-6);
        const auto out_norms = frobenius_norms(out);
        const auto in_norms = frobenius_norms(r);
        for (size_t s = 0; s < out_norms.size(); ++s) {
            CHECK(out_norms[s] < 1.0);
            CHECK(out_norms[s] == doctest::Approx(in_norms[s] / (in_norms[s] + 1e-6)).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(frobenius_normalize(m, 0.0), ArgumentError);
}

TEST_CASE("patchify shape arithmetic and round trip") {
    TensorD img = TensorD::from({1, 1, 4, 4},
                                {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
    TensorD tok = patchify(img, 2);
    CHECK(tok.shape() == Shape{1, 4, 4});
    // first patch is the top-left 2x2 block, row-major
    CHECK(tok.values()[0] == 0);
    CHECK(tok.values()[1] == 1);
    CHECK(tok.values()[2] == 4);
    CHECK(tok.values()[3] == 5);

    TensorD whole = patchify(img, 4);
    CHECK(whole.shape() == Shape{1, 1, 16});
    for (int i = 0; i < 16; ++i) CHECK(whole.values()[static_cast<size_t>(i)] == i);

    Rng rng(17);
    TensorD x = TensorD::normal({2, 3, 6, 9}, 0, 1, rng);
    TensorD back = unpatchify(patchify(x, 3), 3, 6, 9, 3);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(back.values()[static_cast<size_t>(i)] == x.values()[static_cast<size_t>(i)]);

    CHECK_THROWS_AS(patchify(TensorD::zeros({1, 1, 5, 4}), 2), DimensionError);
}

TEST_CASE("gap mean and gradient") {
    TensorD one = TensorD::from({1, 1, 2}, {3, 7});
    TensorD g1 = gap(one);
    CHECK(g1.values()[0] == 3);
    CHECK(g1.values()[1] == 7);

    TensorD two = TensorD::from({1, 2, 2}, {1, 0, 3, 0});
    TensorD g2 = gap(two);
    CHECK(g2.values()[0] == doctest::Approx(2.0));
    CHECK(g2.values()[1] == doctest::Approx(0.0));

    TensorD x = TensorD::from({1, 4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    sum(gap(x)).backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("cross_entropy uniform and confident cases") {
    TensorD uniform = TensorD::zeros({3, 5});
    CHECK(cross_entropy(uniform, {0, 3, 2}).item() == doctest::Approx(std::log(5.0)).epsilon(1e-9));

    TensorD confident = TensorD::from({1, 3}, {50.0, 0.0, 0.0});
    CHECK(cross_entropy(confident, {0}).item() < 1e-9);
    CHECK_THROWS_AS(cross_entropy(uniform, {0, 1}), DimensionError);
    CHECK_THROWS_AS(cross_entropy(uniform, {0, 1, 9}), ArgumentError);
}

TEST_CASE("grad_check on linear and sigmoid sums") {
    TensorD x = TensorD::from({4}, {0.3, -1.2, 0.7, 2.0}, true).set_name("x");
    auto lin = grad_check([&] { return sum(x); }, {x}, 1e-4);
    CHECK(lin.passed);
    CHECK(lin.max_rel_err < 1e-9);

    TensorD z = TensorD::zeros({3}, true).set_name("z");
    auto sig = grad_check([&] { return sum(sigmoid(z)); }, {z}, 1e-4);
    CHECK(sig.passed);
    z.zero_grad();
    sum(sigmoid(z)).backward();
    for (double g : z.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("every kernel passes grad_check on randomized shapes") {
    for (const auto& c : gradsuite::kernel_checks(5, 1e-4)) {
        INFO(c.op, " max rel err ", c.max_rel_err);
        CHECK(c.passed);
    }
}

TEST_CASE("backward accumulates into leaves exactly once") {
    TensorD x = TensorD::from({2}, {1.0, 2.0}, true);
    TensorD y = add(x, x);  // same node twice
    sum(y).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));

    // a second backward on a fresh graph adds again only after zero_grad
    x.zero_grad();
    sum(scale(x, 3.0)).backward();
    CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("permute, reshape, concat, slice, roll") {
    Rng rng(23);
    TensorD x = TensorD::normal({2, 3, 4}, 0, 1, rng);
    TensorD p = permute(x, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    CHECK(p.values()[0] == x.values()[0]);
    // p[i,j,k] = x[j,k,i]
    CHECK(p.values()[static_cast<size_t>(1 * 6 + 1 * 3 + 2)] ==
          x.values()[static_cast<size_t>(1 * 12 + 2 * 4 + 1)]);

    TensorD r = reshape(x, {6, 4});
    CHECK(r.shape() == Shape{6, 4});
    CHECK_THROWS_AS(reshape(x, {5, 5}), DimensionError);

    TensorD a = TensorD::from({1, 2, 2}, {1, 2, 3, 4});
    TensorD b = TensorD::from({1, 1, 2}, {9, 9});
    TensorD cat = concat_axis1(a, b);
    CHECK(cat.shape() == Shape{1, 3, 2});
    CHECK(cat.values()[4] == 9);

    TensorD s = slice_axis0(cat, 0, 1);
    CHECK(s.shape() == Shape{1, 3, 2});

    TensorD grid = TensorD::from({1, 2, 2, 1}, {1, 2, 3, 4});
    TensorD rolled = roll2d(grid, 1, 0);
    CHECK(rolled.values()[0] == 3);  // row order wrapped
    TensorD back = roll2d(rolled, -1, 0);
    for (size_t i = 0; i < 4; ++i) CHECK(back.values()[i] == grid.values()[i]);
}

TEST_SUITE_END();
