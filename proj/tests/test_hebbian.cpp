#include <doctest.h>

#include <cmath>

#include "hfw/gradsuite.hpp"
#include "hfw/hebbian.hpp"

#include "support/hfw_scalar_oracle.hpp"

using namespace hfw;

namespace {

namespace oracle = hfw_oracle;

std::vector<double> vals(const TensorD& t) { return {t.values().begin(), t.values().end()}; }

struct Fixture {
    HfwConfig cfg;
    ParamStore<double> store;
    HfwParams<double> p;

    Fixture(int64_t d, int64_t heads, uint64_t seed, double delta = 1.0) : store(seed) {
        cfg.d = d;
        cfg.heads = heads;
        cfg.delta = delta;
        p = HfwParams<double>::init(store, "hfw", cfg);
    }
};

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("hebbian");

TEST_CASE("effective_plasticity sigmoid constraints") {
    Fixture f(4, 2, 1);
    f.p.eta_logit.values()[0] = 0.0;
    f.p.lambda_logit.values()[0] = 0.0;
    auto [eta, lambda] = effective_plasticity(f.p, f.cfg);
    CHECK(eta.item() == doctest::Approx(0.5));
    CHECK(lambda.item() == doctest::Approx(0.5));

    f.cfg.eta_max = 0.25;
    auto [eta2, lambda2] = effective_plasticity(f.p, f.cfg);
    CHECK(eta2.item() == doctest::Approx(0.125));
    CHECK(lambda2.item() == doctest::Approx(0.5));

    // range property over extreme logits
    for (double logit : {-20.0, -5.0, 0.0, 5.0, 20.0}) {
        f.p.eta_logit.values()[0] = logit;
        f.p.lambda_logit.values()[0] = logit;
        f.cfg.eta_max = 1.0;
        auto [e, l] = effective_plasticity(f.p, f.cfg);
        CHECK(e.item() > 0.0);
        CHECK(e.item() < 1.0);
        CHECK(l.item() > 0.0);
        CHECK(l.item() < 1.0);
    }
}

TEST_CASE("converged plasticity values invert to the expected logits") {
    // eta ~ 0.019 and lambda ~ 0.880 correspond to logits ~ (-3.94, +1.99)
    const double eta_logit = std::log(0.019 / (1.0 - 0.019));
    const double lambda_logit = std::log(0.880 / (1.0 - 0.880));
    CHECK(std::abs(eta_logit - (-3.94)) < 1e-2);
    CHECK(std::abs(lambda_logit - 1.99) < 1e-2);

    Fixture f(4, 2, 2);
    f.p.eta_logit.values()[0] = eta_logit;
    f.p.lambda_logit.values()[0] = lambda_logit;
    auto [eta, lambda] = effective_plasticity(f.p, f.cfg);
    CHECK(eta.item() == doctest::Approx(0.019).epsilon(1e-9));
    CHECK(lambda.item() == doctest::Approx(0.880).epsilon(1e-9));
}

TEST_CASE("project_kvq linearity, identity, and head round trip") {
    Fixture f(4, 2, 3);
    TensorD zero = TensorD::zeros({2, 3, 4});
    auto kvq = project_kvq(zero, f.p, f.cfg);
    for (double v : kvq.k.values()) CHECK(v == 0.0);
    for (double v : kvq.v.values()) CHECK(v == 0.0);
    for (double v : kvq.q.values()) CHECK(v == 0.0);

    // identity projection with a single head returns the input
    Fixture id(3, 1, 4);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) id.p.w_k.values()[static_cast<size_t>(i * 3 + j)] = i == j ? 1.0 : 0.0;
    Rng rng(5);
    TensorD x = TensorD::normal({1, 2, 3}, 0, 1, rng);
    auto kvq_id = project_kvq(x, id.p, id.cfg);
    TensorD merged = merge_heads(kvq_id.k);
    CHECK(max_abs_diff(merged.values(), x.values()) == 0.0);

    // split then merge reconstructs exactly
    TensorD y = TensorD::normal({2, 3, 4}, 0, 1, rng);
    CHECK(max_abs_diff(merge_heads(split_heads(y, 2)).values(), y.values()) == 0.0);

    CHECK_THROWS_AS(project_kvq(TensorD::zeros({1, 2, 5}), f.p, f.cfg), DimensionError);
}

TEST_CASE("associate zero, scalar saturation, token-permutation invariance") {
    HfwConfig cfg;
    cfg.d = 2;
    cfg.heads = 2;
    TensorD zk = TensorD::zeros({1, 2, 3, 1});
    TensorD az = associate(zk, zk, cfg);
    CHECK(az.shape() == Shape{1, 2, 1, 1});
    for (double v : az.values()) CHECK(v == 0.0);

    // N=1, d_h=1: raw 2*3/sqrt(1) = 6 clamps to delta
    HfwConfig c1;
    c1.d = 1;
    c1.heads = 1;
    c1.delta = 1.0;
    TensorD k1 = TensorD::from({1, 1, 1, 1}, {2.0});
    TensorD v1 = TensorD::from({1, 1, 1, 1}, {3.0});
    CHECK(associate(k1, v1, c1).item() == doctest::Approx(1.0));

    // joint token permutation leaves A unchanged
    Rng rng(6);
    TensorD k = TensorD::normal({1, 2, 4, 3}, 0, 0.3, rng);
    TensorD v = TensorD::normal({1, 2, 4, 3}, 0, 0.3, rng);
    HfwConfig c2;
    c2.d = 6;
    c2.heads = 2;
    TensorD a1 = associate(k, v, c2);
    // reverse the token axis of both
    auto rev = [](const TensorD& t) {
        TensorD r = t.detach();
        const int64_t B = t.dim(0), H = t.dim(1), N = t.dim(2), dh = t.dim(3);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t p = 0; p < dh; ++p)
                        r.values()[static_cast<size_t>(((b * H + h) * N + n) * dh + p)] =
                            t.values()[static_cast<size_t>(((b * H + h) * N + (N - 1 - n)) * dh + p)];
        return r;
    };
    TensorD a2 = associate(rev(k), rev(v), c2);
    CHECK(max_abs_diff(a1.values(), a2.values()) < 1e-14);
}

TEST_CASE("memory_write fixed point, hand value, norm bound over random sequences") {
    HfwConfig cfg;
    cfg.d = 2;
    cfg.heads = 2;
    FastMemory<double> mem = FastMemory<double>::zeros(1, cfg);
    TensorD eta = TensorD::scalar(0.5), lambda = TensorD::scalar(0.5);
    FastMemory<double> still = memory_write(mem, TensorD::zeros({1, 2, 1, 1}), eta, lambda, cfg);
    for (double v : still.m.values()) CHECK(v == 0.0);

    // scalar case: raw 0.5, norm 0.5 -> 0.5/(0.5 + 1e-6)
    HfwConfig c1;
    c1.d = 1;
    c1.heads = 1;
    FastMemory<double> m1 = FastMemory<double>::zeros(1, c1);
    TensorD a1 = TensorD::from({1, 1, 1, 1}, {1.0});
    FastMemory<double> w1 = memory_write(m1, a1, eta, lambda, c1);
    CHECK(w1.m.item() == doctest::Approx(0.5 / (0.5 + 1e-6)).epsilon(1e-12));

    // ||M||_F < 1 after every one of 1000 random writes
    Rng rng(7);
    HfwConfig c2;
    c2.d = 6;
    c2.heads = 2;
    FastMemory<double> m = FastMemory<double>::zeros(2, c2);
    for (int step = 0; step < 1000; ++step) {
        TensorD a = TensorD::normal({2, 2, 3, 3}, 0, std::pow(10.0, rng.uniform(-2, 2)), rng);
        a = clamp(a, -c2.delta, c2.delta);
        TensorD e = TensorD::scalar(rng.uniform01());
        TensorD l = TensorD::scalar(rng.uniform01());
        m = memory_write(m, a, e, l, c2);
        for (double n : frobenius_norms(m.m)) CHECK(n < 1.0);
    }
}

TEST_CASE("retrieve empty, identity, and scalar-loop agreement") {
    HfwConfig cfg;
    cfg.d = 4;
    cfg.heads = 2;
    Rng rng(8);
    TensorD q = TensorD::normal({2, 2, 3, 2}, 0, 1, rng);
    FastMemory<double> zero = FastMemory<double>::zeros(2, cfg);
    TensorD r0 = retrieve(q, zero);
    for (double v : r0.values()) CHECK(v == 0.0);

    FastMemory<double> eye{TensorD::from({1, 1, 2, 2}, {1, 0, 0, 1})};
    TensorD q1 = TensorD::normal({1, 1, 3, 2}, 0, 1, rng);
    CHECK(max_abs_diff(retrieve(q1, eye).values(), q1.values()) == 0.0);

    FastMemory<double> m{TensorD::normal({2, 2, 2, 2}, 0, 1, rng)};
    TensorD r = retrieve(q, m);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t h = 0; h < 2; ++h)
            for (int64_t n = 0; n < 3; ++n)
                for (int64_t j = 0; j < 2; ++j) {
                    double acc = 0;
                    for (int64_t p = 0; p < 2; ++p)
                        acc += q.values()[static_cast<size_t>(((b * 2 + h) * 3 + n) * 2 + p)] *
                               m.m.values()[static_cast<size_t>(((b * 2 + h) * 2 + p) * 2 + j)];
                    CHECK(r.values()[static_cast<size_t>(((b * 2 + h) * 3 + n) * 2 + j)] ==
                          doctest::Approx(acc).epsilon(1e-10));
                }
}

TEST_CASE("gate_output zero retrieval, saturated gate, gradient flow") {
    Fixture f(4, 2, 9);
    Rng rng(10);
    TensorD x = TensorD::normal({1, 2, 4}, 0, 1, rng);
    TensorD zero_r = TensorD::zeros({1, 2, 4});
    TensorD g0 = gate_output(x, zero_r, f.p, f.cfg);
    for (double v : g0.values()) CHECK(v == 0.0);

    // saturate the gate: huge positive projection of an all-ones input
    TensorD ones = TensorD::ones({1, 2, 4});
    for (double& w : f.p.w_g.values()) w = 1e4;
    TensorD r = TensorD::normal({1, 2, 4}, 0, 1, rng);
    TensorD gated = gate_output(ones, r, f.p, f.cfg);
    TensorD ln = layer_norm(r, f.p.gamma, f.p.beta, kLayerNormEps);
    CHECK(max_abs_diff(gated.values(), ln.values()) < 1e-9);

    Fixture g(4, 2, 11);
    TensorD xx = TensorD::normal({1, 2, 4}, 0, 1, rng);
    TensorD rr = TensorD::normal({1, 2, 4}, 0, 1, rng);
    auto report = grad_check([&] { return sum(gate_output(xx, rr, g.p, g.cfg)); }, {g.p.w_g}, 1e-4);
    CHECK(report.passed);
    CHECK(report.leaves[0].max_rel_err <= 1e-4);
}

TEST_CASE("hfw_forward zero input, permutation equivariance") {
    Fixture f(4, 2, 12);
    TensorD zero = TensorD::zeros({2, 3, 4});
    auto res = hfw_forward(zero, f.p, f.cfg);
    for (double v : res.out.values()) CHECK(v == 0.0);

    Rng rng(13);
    TensorD x = TensorD::normal({2, 4, 4}, 0, 1, rng);
    auto base = hfw_forward(x, f.p, f.cfg);
    // cyclic token shift by 1
    TensorD shifted = TensorD::zeros({2, 4, 4});
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t j = 0; j < 4; ++j)
                shifted.values()[static_cast<size_t>((b * 4 + (n + 1) % 4) * 4 + j)] =
                    x.values()[static_cast<size_t>((b * 4 + n) * 4 + j)];
    auto sh = hfw_forward(shifted, f.p, f.cfg);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t j = 0; j < 4; ++j)
                CHECK(sh.out.values()[static_cast<size_t>((b * 4 + (n + 1) % 4) * 4 + j)] ==
                      doctest::Approx(base.out.values()[static_cast<size_t>((b * 4 + n) * 4 + j)])
                          .epsilon(1e-10));
}

TEST_CASE("hfw_forward matches the scalar-loop oracle") {
    Rng dims_rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t H = 1 + static_cast<int64_t>(dims_rng.bounded(3));
        const int64_t dh = 1 + static_cast<int64_t>(dims_rng.bounded(2));
        const int64_t d = H * dh;
        const int64_t B = 1 + static_cast<int64_t>(dims_rng.bounded(3));
        const int64_t N = 1 + static_cast<int64_t>(dims_rng.bounded(5));
        Fixture f(d, H, 100 + static_cast<uint64_t>(trial));
        Rng rng(200 + static_cast<uint64_t>(trial));
        TensorD x = TensorD::normal({B, N, d}, 0, 1, rng);
        auto res = hfw_forward(x, f.p, f.cfg);

        oracle::Dims c{B, N, d, H, f.cfg.eta_max, f.cfg.delta, f.cfg.eps};
        auto ref = oracle::hfw_scalar(vals(x), vals(f.p.w_k), vals(f.p.w_v), vals(f.p.w_q), vals(f.p.w_g),
                                      f.p.eta_logit.item(), f.p.lambda_logit.item(), vals(f.p.gamma),
                                      vals(f.p.beta), {}, c);
        CHECK(max_abs_diff(res.out.values(), ref.out) < 1e-10);
        CHECK(max_abs_diff(res.mem.m.values(), ref.mem) < 1e-10);
    }
}

TEST_CASE("per-episode scope threads memory across forwards") {
    Fixture f(4, 2, 21);
    f.cfg.memory_scope = MemoryScope::PerEpisode;
    Rng rng(22);
    TensorD x1 = TensorD::normal({1, 3, 4}, 0, 1, rng);
    TensorD x2 = TensorD::normal({1, 3, 4}, 0, 1, rng);

    FastMemory<double> mem = FastMemory<double>::zeros(1, f.cfg);
    auto r1 = hfw_forward(x1, f.p, f.cfg, mem);
    auto r2 = hfw_forward(x2, f.p, f.cfg, r1.mem);

    // the oracle threads the same memory
    oracle::Dims c{1, 3, 4, 2, f.cfg.eta_max, f.cfg.delta, f.cfg.eps};
    auto ref1 = oracle::hfw_scalar(vals(x1), vals(f.p.w_k), vals(f.p.w_v), vals(f.p.w_q), vals(f.p.w_g),
                                   f.p.eta_logit.item(), f.p.lambda_logit.item(), vals(f.p.gamma), vals(f.p.beta),
                                   {}, c);
    auto ref2 = oracle::hfw_scalar(vals(x2), vals(f.p.w_k), vals(f.p.w_v), vals(f.p.w_q), vals(f.p.w_g),
                                   f.p.eta_logit.item(), f.p.lambda_logit.item(), vals(f.p.gamma), vals(f.p.beta),
                                   ref1.mem, c);
    CHECK(max_abs_diff(r2.out.values(), ref2.out) < 1e-10);
    CHECK(max_abs_diff(r2.mem.m.values(), ref2.mem) < 1e-10);

    // second forward differs from a fresh-memory forward (memory matters)
    auto fresh = hfw_forward(x2, f.p, f.cfg, FastMemory<double>::zeros(1, f.cfg));
    CHECK(max_abs_diff(fresh.out.values(), r2.out.values()) > 1e-8);

    // stale memory shape is a state error
    FastMemory<double> bad{TensorD::zeros({3, 2, 2, 2})};
    CHECK_THROWS_AS(hfw_forward(x2, f.p, f.cfg, bad), StateError);
}

TEST_CASE("hfw_forward is deterministic") {
    Fixture f(4, 2, 31);
    Rng rng(32);
    TensorD x = TensorD::normal({2, 3, 4}, 0, 1, rng);
    auto a = hfw_forward(x, f.p, f.cfg);
    auto b = hfw_forward(x, f.p, f.cfg);
    CHECK(max_abs_diff(a.out.values(), b.out.values()) == 0.0);
}

TEST_CASE("memory_lifetime") {
    CHECK(memory_lifetime(0.880) == doctest::Approx(8.3333333).epsilon(1e-6));
    CHECK(std::abs(memory_lifetime(0.880) - 8.33) < 0.01);
    CHECK(memory_lifetime(0.5) == doctest::Approx(2.0));
    CHECK(memory_lifetime(0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(memory_lifetime(1.0), ArgumentError);
    CHECK_THROWS_AS(memory_lifetime(1.5), ArgumentError);
}

TEST_CASE("full module gradients pass the finite-difference check") {
    auto c = gradsuite::hfw_composition_check(41, 1e-4);
    INFO("max rel err ", c.max_rel_err);
    CHECK(c.passed);
}

TEST_SUITE_END();
