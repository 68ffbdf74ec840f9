#pragma once

// Plain scalar-loop reference of the fast-weight module: projections, clamped
// co-activation, decayed normalized write, retrieval, gated LayerNorm output.
// Test-only; shares no code with the vectorized implementation it checks.

#include <cmath>
#include <vector>

#include "hfw/hebbian.hpp"

namespace hfw_oracle {

struct Dims {
    int64_t B, N, d, H;
    double eta_max, delta, eps;
};

struct Out {
    std::vector<double> out;  // B*N*d
    std::vector<double> mem;  // B*H*dh*dh
};

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Out hfw_scalar(const std::vector<double>& x, const std::vector<double>& wk, const std::vector<double>& wv,
                      const std::vector<double>& wq, const std::vector<double>& wg, double eta_logit,
                      double lambda_logit, const std::vector<double>& gamma, const std::vector<double>& beta,
                      const std::vector<double>& mem_in, const Dims& c) {
    const int64_t dh = c.d / c.H;
    auto proj = [&](const std::vector<double>& w) {
        std::vector<double> r(static_cast<size_t>(c.B * c.N * c.d), 0.0);
        for (int64_t b = 0; b < c.B; ++b)
            for (int64_t n = 0; n < c.N; ++n)
                for (int64_t j = 0; j < c.d; ++j) {
                    double acc = 0;
                    for (int64_t i = 0; i < c.d; ++i)
                        acc += x[static_cast<size_t>((b * c.N + n) * c.d + i)] *
                               w[static_cast<size_t>(i * c.d + j)];
                    r[static_cast<size_t>((b * c.N + n) * c.d + j)] = acc;
                }
        return r;
    };
    const std::vector<double> k = proj(wk), v = proj(wv), q = proj(wq);
    auto head_at = [&](const std::vector<double>& t, int64_t b, int64_t h, int64_t n, int64_t p) {
        return t[static_cast<size_t>((b * c.N + n) * c.d + h * dh + p)];
    };

    // A = clamp(K^T V / sqrt(N))
    std::vector<double> a(static_cast<size_t>(c.B * c.H * dh * dh), 0.0);
    for (int64_t b = 0; b < c.B; ++b)
        for (int64_t h = 0; h < c.H; ++h)
            for (int64_t p = 0; p < dh; ++p)
                for (int64_t r = 0; r < dh; ++r) {
                    double acc = 0;
                    for (int64_t n = 0; n < c.N; ++n) acc += head_at(k, b, h, n, p) * head_at(v, b, h, n, r);
                    acc /= std::sqrt(static_cast<double>(c.N));
                    acc = std::min(std::max(acc, -c.delta), c.delta);
                    a[static_cast<size_t>(((b * c.H + h) * dh + p) * dh + r)] = acc;
                }

    const double eta = sig(eta_logit) * c.eta_max;
    const double lambda = sig(lambda_logit);

    // M = (lambda M + eta A) / (||.||_F + eps) per (b, h)
    std::vector<double> mem(static_cast<size_t>(c.B * c.H * dh * dh), 0.0);
    for (int64_t b = 0; b < c.B; ++b)
        for (int64_t h = 0; h < c.H; ++h) {
            double sq = 0;
            for (int64_t p = 0; p < dh; ++p)
                for (int64_t r = 0; r < dh; ++r) {
                    const size_t idx = static_cast<size_t>(((b * c.H + h) * dh + p) * dh + r);
                    const double raw = lambda * (mem_in.empty() ? 0.0 : mem_in[idx]) + eta * a[idx];
                    mem[idx] = raw;
                    sq += raw * raw;
                }
            const double inv = 1.0 / (std::sqrt(sq) + c.eps);
            for (int64_t p = 0; p < dh; ++p)
                for (int64_t r = 0; r < dh; ++r)
                    mem[static_cast<size_t>(((b * c.H + h) * dh + p) * dh + r)] *= inv;
        }

    // r_hat = Q M, heads merged
    std::vector<double> rm(static_cast<size_t>(c.B * c.N * c.d), 0.0);
    for (int64_t b = 0; b < c.B; ++b)
        for (int64_t h = 0; h < c.H; ++h)
            for (int64_t n = 0; n < c.N; ++n)
                for (int64_t r = 0; r < dh; ++r) {
                    double acc = 0;
                    for (int64_t p = 0; p < dh; ++p)
                        acc += head_at(q, b, h, n, p) *
                               mem[static_cast<size_t>(((b * c.H + h) * dh + p) * dh + r)];
                    rm[static_cast<size_t>((b * c.N + n) * c.d + h * dh + r)] = acc;
                }

    // out = LayerNorm(sigmoid(x W_g) * r_hat)
    const std::vector<double> g = proj(wg);
    Out res;
    res.out.assign(static_cast<size_t>(c.B * c.N * c.d), 0.0);
    for (int64_t b = 0; b < c.B; ++b)
        for (int64_t n = 0; n < c.N; ++n) {
            std::vector<double> row(static_cast<size_t>(c.d));
            for (int64_t j = 0; j < c.d; ++j)
                row[static_cast<size_t>(j)] = sig(g[static_cast<size_t>((b * c.N + n) * c.d + j)]) *
                                              rm[static_cast<size_t>((b * c.N + n) * c.d + j)];
            double mu = 0;
            for (double vv : row) mu += vv;
            mu /= static_cast<double>(c.d);
            double var = 0;
            for (double vv : row) var += (vv - mu) * (vv - mu);
            var /= static_cast<double>(c.d);
            const double rstd = 1.0 / std::sqrt(var + hfw::kLayerNormEps);
            for (int64_t j = 0; j < c.d; ++j)
                res.out[static_cast<size_t>((b * c.N + n) * c.d + j)] =
                    (row[static_cast<size_t>(j)] - mu) * rstd * gamma[static_cast<size_t>(j)] +
                    beta[static_cast<size_t>(j)];
        }
    res.mem = std::move(mem);
    return res;
}

}  // namespace hfw_oracle
