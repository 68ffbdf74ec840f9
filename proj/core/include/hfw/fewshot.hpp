#pragma once

// Episodic N-way K-shot machinery: class splits, episode sampling, prototype
// classification, loss, and per-episode metrics.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hfw/backbones.hpp"
#include "hfw/ops.hpp"
#include "hfw/rng.hpp"

namespace hfw {

struct SplitRatios {
    double train = 0.8, val = 0.1, test = 0.1;
};

struct ClassSplit {
    std::vector<int64_t> train, val, test;
    uint64_t seed = 0;
};

// Deterministic shuffle then partition: train and test take floor(ratio * n),
// val takes the remainder.
inline ClassSplit split_classes(std::vector<int64_t> class_ids, const SplitRatios& r, uint64_t seed) {
    if (class_ids.size() < 3) throw ArgumentError("split_classes: need at least 3 classes");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
        throw ArgumentError("split_classes: ratios must sum to 1");
    if (r.train < 0 || r.val < 0 || r.test < 0) throw ArgumentError("split_classes: negative ratio");
    Rng rng(derive_seed(seed, "class_split"));
    rng.shuffle(class_ids);
    const int64_t n = static_cast<int64_t>(class_ids.size());
    const int64_t n_train = static_cast<int64_t>(std::floor(r.train * static_cast<double>(n)));
    const int64_t n_test = static_cast<int64_t>(std::floor(r.test * static_cast<double>(n)));
    const int64_t n_val = n - n_train - n_test;
    ClassSplit out;
    out.seed = seed;
    out.train.assign(class_ids.begin(), class_ids.begin() + n_train);
    out.val.assign(class_ids.begin() + n_train, class_ids.begin() + n_train + n_val);
    out.test.assign(class_ids.begin() + n_train + n_val, class_ids.end());
    return out;
}

struct EpisodeConfig {
    int64_t n_way = 5;
    int64_t k_shot = 1;
    int64_t n_query = 15;
    int64_t train_episodes = 600;
    int64_t val_episodes = 200;
    int64_t test_episodes = 400;

    void validate() const {
        if (n_way < 2 || k_shot < 1 || n_query < 1)
            throw ConfigError("episodes: need n_way >= 2, k_shot >= 1, n_query >= 1");
        if (train_episodes < 1 || val_episodes < 1 || test_episodes < 1)
            throw ConfigError("episodes: episode counts must be >= 1");
    }
};

struct Episode {
    struct Item {
        int64_t class_id;     // global class id
        int64_t image_index;  // index within that class
    };
    std::vector<Item> support, query;              // class-major order
    std::vector<int64_t> support_labels, query_labels;  // episode-local, in [0, n_way)
    std::vector<int64_t> class_map;                // episode label -> global class id
};

// n_way distinct classes from the partition; per class, k_shot + n_query
// distinct images, disjoint between support and query.
inline Episode sample_episode(const std::vector<int64_t>& class_pool, const std::vector<int64_t>& class_sizes,
                              const EpisodeConfig& cfg, Rng& rng) {
    cfg.validate();
    if (static_cast<int64_t>(class_pool.size()) < cfg.n_way)
        throw ArgumentError("sample_episode: partition holds " + std::to_string(class_pool.size()) +
                            " classes, need " + std::to_string(cfg.n_way));
    Episode ep;
    std::vector<int64_t> picks = rng.sample_without_replacement(static_cast<int64_t>(class_pool.size()), cfg.n_way);
    for (int64_t label = 0; label < cfg.n_way; ++label) {
        const int64_t cid = class_pool[static_cast<size_t>(picks[static_cast<size_t>(label)])];
        const int64_t have = class_sizes[static_cast<size_t>(cid)];
        const int64_t need = cfg.k_shot + cfg.n_query;
        if (have < need)
            throw DataError("sample_episode: class " + std::to_string(cid) + " holds " + std::to_string(have) +
                            " images, need " + std::to_string(need));
        ep.class_map.push_back(cid);
        std::vector<int64_t> idx = rng.sample_without_replacement(have, need);
        for (int64_t i = 0; i < cfg.k_shot; ++i) {
            ep.support.push_back({cid, idx[static_cast<size_t>(i)]});
            ep.support_labels.push_back(label);
        }
        for (int64_t i = cfg.k_shot; i < need; ++i) {
            ep.query.push_back({cid, idx[static_cast<size_t>(i)]});
            ep.query_labels.push_back(label);
        }
    }
    return ep;
}

// Per-class mean of support embeddings: [N*K, d] -> [N, d]. Differentiable
// through the embeddings (constant averaging matrix).
template <typename T>
Tensor<T> prototypes(const Tensor<T>& support_emb, const std::vector<int64_t>& labels, int64_t n_way,
                     int64_t k_shot) {
    if (support_emb.rank() != 2 || support_emb.dim(0) != n_way * k_shot)
        throw DimensionError("prototypes: expected [" + std::to_string(n_way * k_shot) + ", d], got " +
                             shape_str(support_emb.shape()));
    if (static_cast<int64_t>(labels.size()) != n_way * k_shot)
        throw ArgumentError("prototypes: label count mismatch");
    std::vector<int64_t> counts(static_cast<size_t>(n_way), 0);
    for (int64_t l : labels) {
        if (l < 0 || l >= n_way) throw ArgumentError("prototypes: label " + std::to_string(l) + " out of range");
        ++counts[static_cast<size_t>(l)];
    }
    for (int64_t c = 0; c < n_way; ++c)
        if (counts[static_cast<size_t>(c)] != k_shot)
            throw ArgumentError("prototypes: class " + std::to_string(c) + " has " +
                                std::to_string(counts[static_cast<size_t>(c)]) + " supports, expected " +
                                std::to_string(k_shot));
    std::vector<T> avg(static_cast<size_t>(n_way * n_way * k_shot), T(0));
    for (size_t i = 0; i < labels.size(); ++i)
        avg[static_cast<size_t>(labels[i]) * labels.size() + i] = T(1) / static_cast<T>(k_shot);
    Tensor<T> m = Tensor<T>::from({n_way, n_way * k_shot}, std::move(avg));
    return matmul(m, support_emb);
}

template <typename T>
struct Classification {
    Tensor<T> logits;            // [M, N] = negative squared Euclidean distance
    std::vector<int64_t> preds;  // argmax per row, ties to the lowest index
};

template <typename T>
Classification<T> classify_queries(const Tensor<T>& query_emb, const Tensor<T>& protos) {
    if (query_emb.rank() != 2 || protos.rank() != 2 || query_emb.dim(1) != protos.dim(1))
        throw DimensionError("classify_queries: widths differ: " + shape_str(query_emb.shape()) + " vs " +
                             shape_str(protos.shape()));
    const int64_t m = query_emb.dim(0), n = protos.dim(0);
    Tensor<T> cross = scale(matmul(query_emb, transpose_last2(protos)), T(2));          // [M, N]
    Tensor<T> qsq = sum_lastdim(hadamard(query_emb, query_emb));                        // [M, 1]
    Tensor<T> psq = reshape(sum_lastdim(hadamard(protos, protos)), {1, n});             // [1, N]
    Classification<T> out;
    out.logits = sub(sub(cross, qsq), psq);
    out.preds.resize(static_cast<size_t>(m));
    const T* pl = out.logits.values().data();
    for (int64_t i = 0; i < m; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < n; ++j)
            if (pl[i * n + j] > pl[i * n + best]) best = j;
        out.preds[static_cast<size_t>(i)] = best;
    }
    return out;
}

template <typename T>
Tensor<T> episode_loss(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
    return cross_entropy(logits, labels);
}

struct EpisodeMetrics {
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double loss = 0.0;
};

// Macro-averaged over the episode classes; undefined per-class ratios count as 0.
inline EpisodeMetrics episode_metrics(const std::vector<int64_t>& preds, const std::vector<int64_t>& labels,
                                      int64_t n_way) {
    if (preds.size() != labels.size()) throw ArgumentError("episode_metrics: length mismatch");
    std::vector<int64_t> tp(static_cast<size_t>(n_way), 0), fp(static_cast<size_t>(n_way), 0),
        fn(static_cast<size_t>(n_way), 0);
    int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const int64_t p = preds[i], l = labels[i];
        if (p == l) {
            ++correct;
            ++tp[static_cast<size_t>(p)];
        } else {
            ++fp[static_cast<size_t>(p)];
            ++fn[static_cast<size_t>(l)];
        }
    }
    EpisodeMetrics m;
    m.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
    for (int64_t c = 0; c < n_way; ++c) {
        const double tpc = static_cast<double>(tp[static_cast<size_t>(c)]);
        const double prec = (tpc + fp[static_cast<size_t>(c)]) > 0 ? tpc / (tpc + fp[static_cast<size_t>(c)]) : 0.0;
        const double rec = (tpc + fn[static_cast<size_t>(c)]) > 0 ? tpc / (tpc + fn[static_cast<size_t>(c)]) : 0.0;
        const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        m.precision_macro += prec;
        m.recall_macro += rec;
        m.f1_macro += f1;
    }
    m.precision_macro /= static_cast<double>(n_way);
    m.recall_macro /= static_cast<double>(n_way);
    m.f1_macro /= static_cast<double>(n_way);
    return m;
}

struct Aggregate {
    double mean = 0.0;
    double ci95 = 0.0;
    bool ci_defined = false;
};

// 1.96 * sd / sqrt(E) over episodes; undefined below two samples.
inline Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - a.mean) * (x - a.mean);
        const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        a.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
        a.ci_defined = true;
    }
    return a;
}

template <typename T>
struct EpisodeOutcome {
    Tensor<T> loss;  // scalar with recorded graph
    std::vector<int64_t> preds;
    EpisodeMetrics metrics;
};

// Embedding -> prototypes -> nearest-prototype classification -> loss.
template <typename T>
EpisodeOutcome<T> run_episode(const Model<T>& model, const Tensor<T>& support_images,
                              const std::vector<int64_t>& support_labels, const Tensor<T>& query_images,
                              const std::vector<int64_t>& query_labels, int64_t n_way, int64_t k_shot) {
    auto [s_emb, q_emb] = model.embed_episode(support_images, query_images);
    Tensor<T> protos = prototypes(s_emb, support_labels, n_way, k_shot);
    Classification<T> cls = classify_queries(q_emb, protos);
    EpisodeOutcome<T> out;
    out.loss = episode_loss(cls.logits, query_labels);
    out.preds = cls.preds;
    out.metrics = episode_metrics(cls.preds, query_labels, n_way);
    out.metrics.loss = static_cast<double>(out.loss.item());
    return out;
}

}  // namespace hfw
