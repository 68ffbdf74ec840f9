#pragma once

// Finite-difference verification of recorded gradients. float64 only; the
// central scheme with step 1e-5 resolves everything the kernels produce.

#include <functional>
#include <string>
#include <vector>

#include "hfw/ops.hpp"
#include "hfw/tensor.hpp"

namespace hfw {

struct LeafReport {
    std::string name;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

struct GradCheckReport {
    std::vector<LeafReport> leaves;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool passed = false;

    std::string summary() const {
        std::string s;
        for (const auto& l : leaves) {
            s += "  " + (l.name.empty() ? std::string("<leaf>") : l.name) + ": max rel err " +
                 std::to_string(l.max_rel_err) + "\n";
        }
        s += passed ? "PASS" : "FAIL";
        s += " (max " + std::to_string(max_rel_err) + ", tol " + std::to_string(tol) + ")";
        return s;
    }
};

namespace detail {
// Relative error with a floor at the smallest gradient scale that matters:
// below it, the central-difference probe's own cancellation noise
// (~|f| * eps / 2h ~ 1e-11) dominates. A 1e-5 floor still flags any absolute
// deviation above 1e-9 at tol 1e-4.
inline double rel_err(double a, double b) {
    const double denom = std::max({1e-5, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}
}  // namespace detail

// Central finite differences (step h) against the recorded reverse pass.
// `f` must be a deterministic scalar function of the leaves.
inline GradCheckReport grad_check(const std::function<TensorD()>& f, std::vector<TensorD> leaves, double tol,
                                  double h = 1e-5) {
    GradCheckReport report;
    report.tol = tol;

    for (auto& leaf : leaves) leaf.zero_grad();
    TensorD y = f();
    if (y.numel() != 1) throw DimensionError("grad_check: f must produce a scalar");
    if (!std::isfinite(y.item())) throw NumericalError("grad_check: f is non-finite at the base point");
    y.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) {
        std::vector<double> g(static_cast<size_t>(leaf.numel()), 0.0);
        if (leaf.has_grad()) {
            auto gs = leaf.grad();
            std::copy(gs.begin(), gs.end(), g.begin());
        }
        for (double v : g)
            if (!std::isfinite(v))
                throw NumericalError("grad_check: non-finite analytic gradient in leaf '" + leaf.name() + "'");
        analytic.push_back(std::move(g));
    }

    NoGradGuard ng;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        LeafReport lr;
        lr.name = leaf.name();
        auto vals = leaf.values();
        for (int64_t i = 0; i < leaf.numel(); ++i) {
            const double v = vals[static_cast<size_t>(i)];
            vals[static_cast<size_t>(i)] = v + h;
            const double yp = f().item();
            vals[static_cast<size_t>(i)] = v - h;
            const double ym = f().item();
            vals[static_cast<size_t>(i)] = v;
            if (!std::isfinite(yp) || !std::isfinite(ym))
                throw NumericalError("grad_check: non-finite value while perturbing leaf '" + leaf.name() + "'");
            const double fd = (yp - ym) / (2.0 * h);
            const double an = analytic[li][static_cast<size_t>(i)];
            const double e = detail::rel_err(an, fd);
            if (e > lr.max_rel_err) {
                lr.max_rel_err = e;
                lr.worst_index = i;
                lr.analytic_at_worst = an;
                lr.numeric_at_worst = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, lr.max_rel_err);
        report.leaves.push_back(std::move(lr));
    }
    report.passed = report.max_rel_err <= tol;
    return report;
}

}  // namespace hfw
