#pragma once

// Optimization loop: AdamW with decoupled decay, epoch-level warmup + cosine
// schedule, global-norm gradient clipping, early stopping on validation
// accuracy, and per-epoch metric rows.

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <thread>

#include "hfw/data.hpp"
#include "hfw/fewshot.hpp"
#include "hfw/train_types.hpp"

namespace hfw {

inline double lr_at(int64_t epoch, const ScheduleConfig& cfg, double lr_base) {
    cfg.validate();
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.total_epochs) + ")");
    if (epoch < cfg.warmup_epochs)
        return lr_base * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    const double t = static_cast<double>(epoch - cfg.warmup_epochs) /
                     static_cast<double>(cfg.total_epochs - cfg.warmup_epochs);
    return lr_base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

template <typename T>
struct OptimizerState {
    OptimConfig cfg;
    int64_t step = 0;
    std::vector<std::vector<T>> m, v;  // first/second moments, parameter order

    OptimizerState(const ParamStore<T>& params, OptimConfig c) : cfg(c) {
        cfg.validate();
        m.reserve(params.items().size());
        v.reserve(params.items().size());
        for (const auto& [name, t] : params.items()) {
            m.emplace_back(static_cast<size_t>(t.numel()), T(0));
            v.emplace_back(static_cast<size_t>(t.numel()), T(0));
        }
    }
};

// Bias-corrected Adam plus decoupled decay theta -= lr * wd * theta.
// Decay applies to matrices only (rank >= 2), not norms/logits/biases.
template <typename T>
void adamw_step(ParamStore<T>& params, OptimizerState<T>& st, double lr) {
    if (st.m.size() != params.items().size())
        throw StateError("adamw_step: optimizer state does not match parameter store");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
    const T b1 = static_cast<T>(st.cfg.beta1), b2 = static_cast<T>(st.cfg.beta2);
    for (size_t pi = 0; pi < params.items().size(); ++pi) {
        auto& [name, t] = params.items()[pi];
        if (!t.has_grad()) t.zero_grad();
        auto g = t.grad();
        auto w = t.values();
        const double wd = t.rank() >= 2 ? st.cfg.weight_decay : 0.0;
        T* mp = st.m[pi].data();
        T* vp = st.v[pi].data();
        for (int64_t j = 0; j < t.numel(); ++j) {
            const T gj = g[static_cast<size_t>(j)];
            if (!std::isfinite(static_cast<double>(gj)))
                throw NumericalError("adamw_step: non-finite gradient in tensor '" + name + "'");
            mp[j] = b1 * mp[j] + (T(1) - b1) * gj;
            vp[j] = b2 * vp[j] + (T(1) - b2) * gj * gj;
            const double mhat = static_cast<double>(mp[j]) / bc1;
            const double vhat = static_cast<double>(vp[j]) / bc2;
            const double upd = lr * (mhat / (std::sqrt(vhat) + st.cfg.eps_opt) +
                                     wd * static_cast<double>(w[static_cast<size_t>(j)]));
            w[static_cast<size_t>(j)] = static_cast<T>(static_cast<double>(w[static_cast<size_t>(j)]) - upd);
        }
    }
}

// Global L2-norm clip across all gradients; returns the pre-clip norm.
template <typename T>
double clip_grads(ParamStore<T>& params, double threshold) {
    if (threshold <= 0) throw ArgumentError("clip_grads: threshold must be positive");
    double ss = 0.0;
    for (auto& [name, t] : params.items()) {
        if (!t.has_grad()) continue;
        for (T g : t.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(ss);
    if (norm > threshold) {
        const T s = static_cast<T>(threshold / norm);
        for (auto& [name, t] : params.items()) {
            if (!t.has_grad()) continue;
            for (T& g : t.grad_mut()) g *= s;
        }
    }
    return norm;
}

template <typename T>
struct TrainCallbacks {
    std::function<void(const Model<T>&, const MetricsRow&)> on_best;
    std::function<void(const Episode&)> on_train_episode;
    std::ostream* log = nullptr;
};

struct TrainResult {
    std::vector<MetricsRow> history;
    int64_t best_epoch = -1;
    double best_val_acc = 0.0;
    int64_t epochs_run = 0;
    bool early_stopped = false;
};

namespace detail {

struct MetricSums {
    std::vector<double> acc, loss;
    double precision = 0, recall = 0, f1 = 0;

    void add(const EpisodeMetrics& m) {
        acc.push_back(m.accuracy);
        loss.push_back(m.loss);
        precision += m.precision_macro;
        recall += m.recall_macro;
        f1 += m.f1_macro;
    }

    void fill_row(MetricsRow& row) const {
        const auto agg = aggregate(acc);
        row.episodes = static_cast<int64_t>(acc.size());
        row.acc_mean = agg.mean;
        row.acc_ci95 = agg.ci95;
        row.ci_defined = agg.ci_defined;
        const double n = std::max<double>(1.0, static_cast<double>(acc.size()));
        row.precision_macro = precision / n;
        row.recall_macro = recall / n;
        row.f1_macro = f1 / n;
        row.loss_mean = aggregate(loss).mean;
    }
};

}  // namespace detail

// Evaluate `episodes` episodes drawn from `pool` under fixed per-episode
// streams; forward-only. Episodes are independent, so worker threads only
// change wall time, never metrics.
template <typename T>
MetricsRow evaluate_split(const Model<T>& model, const CharacterDataset& ds, const std::vector<int64_t>& pool,
                          const EpisodeConfig& ecfg, int64_t episodes, const PreprocessConfig& pcfg, uint64_t seed,
                          const std::string& split_name, int64_t threads = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int64_t> sizes = ds.class_sizes();
    std::vector<EpisodeMetrics> results(static_cast<size_t>(episodes));
    auto worker = [&](int64_t begin, int64_t end) {
        NoGradGuard ng;
        for (int64_t e = begin; e < end; ++e) {
            Rng srng(derive_seed(seed, "sample", static_cast<uint64_t>(e)));
            Episode ep = sample_episode(pool, sizes, ecfg, srng);
            Tensor<T> support = make_batch<T>(ds, ep.support, pcfg, false, 0);
            Tensor<T> query = make_batch<T>(ds, ep.query, pcfg, false, 0);
            auto out = run_episode(model, support, ep.support_labels, query, ep.query_labels, ecfg.n_way,
                                   ecfg.k_shot);
            results[static_cast<size_t>(e)] = out.metrics;
        }
    };
    if (threads <= 1 || episodes < 2) {
        worker(0, episodes);
    } else {
        const int64_t n = std::min<int64_t>(threads, episodes);
        std::vector<std::thread> pool_threads;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t begin = episodes * i / n, end = episodes * (i + 1) / n;
            pool_threads.emplace_back(worker, begin, end);
        }
        for (auto& th : pool_threads) th.join();
    }
    detail::MetricSums sums;
    for (const auto& m : results) sums.add(m);
    MetricsRow row;
    row.split = split_name;
    sums.fill_row(row);
    row.eta_values = model.eta_values();
    row.lambda_values = model.lambda_values();
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

// Episodic training per the protocol: per epoch, `train_episodes` episodes of
// forward / loss / clip / step (fast memory reset per episode is inherent to
// the scoped forward), then validation; the best-validation model is handed
// to `on_best`, and training stops `patience` epochs after the last
// improvement.
template <typename T>
TrainResult train_loop(Model<T>& model, const CharacterDataset& ds, const ClassSplit& split,
                       const EpisodeConfig& ecfg, const PreprocessConfig& pcfg, const OptimConfig& ocfg,
                       const ScheduleConfig& scfg, int64_t patience, uint64_t seed, const std::string& run_id,
                       const TrainCallbacks<T>& cb = {}) {
    ecfg.validate();
    scfg.validate();
    pcfg.validate();
    if (patience < 1) throw ConfigError("train_loop: patience must be >= 1");
    const std::vector<int64_t> sizes = ds.class_sizes();
    OptimizerState<T> optim(model.params(), ocfg);
    TrainResult result;
    int64_t since_best = 0;
    for (int64_t epoch = 0; epoch < scfg.total_epochs; ++epoch) {
        const double lr = lr_at(epoch, scfg, ocfg.lr_base);
        const auto t0 = std::chrono::steady_clock::now();
        detail::MetricSums sums;
        for (int64_t e = 0; e < ecfg.train_episodes; ++e) {
            Rng srng(derive_seed(seed, "train_sample", static_cast<uint64_t>(epoch), static_cast<uint64_t>(e)));
            Episode ep = sample_episode(split.train, sizes, ecfg, srng);
            if (cb.on_train_episode) cb.on_train_episode(ep);
            const uint64_t aug_s = derive_seed(seed, "aug_support", static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(e));
            const uint64_t aug_q = derive_seed(seed, "aug_query", static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(e));
            Tensor<T> support = make_batch<T>(ds, ep.support, pcfg, true, aug_s);
            Tensor<T> query = make_batch<T>(ds, ep.query, pcfg, true, aug_q);
            model.params().zero_grads();
            auto out = run_episode(model, support, ep.support_labels, query, ep.query_labels, ecfg.n_way,
                                   ecfg.k_shot);
            if (!std::isfinite(out.metrics.loss)) {
                std::string diag = "non-finite loss at epoch " + std::to_string(epoch) + ", episode " +
                                   std::to_string(e);
                const auto etas = model.eta_values();
                const auto lambdas = model.lambda_values();
                if (!etas.empty()) {
                    diag += " (eta=";
                    for (double v : etas) diag += std::to_string(v) + " ";
                    diag += ", lambda=";
                    for (double v : lambdas) diag += std::to_string(v) + " ";
                    diag += ")";
                }
                throw NumericalError(diag);
            }
            out.loss.backward();
            clip_grads(model.params(), ocfg.clip_norm);
            adamw_step(model.params(), optim, lr);
            sums.add(out.metrics);
        }
        MetricsRow train_row;
        train_row.run_id = run_id;
        train_row.epoch = epoch;
        train_row.split = "train";
        sums.fill_row(train_row);
        train_row.lr = lr;
        train_row.eta_values = model.eta_values();
        train_row.lambda_values = model.lambda_values();
        train_row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(train_row);

        MetricsRow val_row = evaluate_split(model, ds, split.val, ecfg, ecfg.val_episodes, pcfg,
                                            derive_seed(seed, "val"), "val");
        val_row.run_id = run_id;
        val_row.epoch = epoch;
        val_row.lr = lr;
        result.history.push_back(val_row);
        result.epochs_run = epoch + 1;

        if (cb.log) {
            (*cb.log) << "epoch " << epoch << ": train acc " << train_row.acc_mean << " loss "
                      << train_row.loss_mean << " | val acc " << val_row.acc_mean << " (lr " << lr << ")\n";
            cb.log->flush();
        }

        if (val_row.acc_mean > result.best_val_acc || result.best_epoch < 0) {
            result.best_val_acc = val_row.acc_mean;
            result.best_epoch = epoch;
            since_best = 0;
            if (cb.on_best) cb.on_best(model, val_row);
        } else if (++since_best >= patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

}  // namespace hfw
