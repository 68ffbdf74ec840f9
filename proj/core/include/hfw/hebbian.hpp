#pragma once

// Hebbian fast-weight module: a transient per-head associative memory written
// from clamped key/value co-activations, decayed and Frobenius-normalized,
// read back through the queries and released through a sigmoid gate. The
// projections and the plasticity/decay logits are the only learned state; the
// memory itself never outlives its scope and is never serialized.

#include <optional>
#include <utility>

#include "hfw/ops.hpp"
#include "hfw/params.hpp"

namespace hfw {

inline constexpr double kLayerNormEps = 1e-5;

enum class MemoryScope { PerForward, PerEpisode };

inline const char* memory_scope_name(MemoryScope s) {
    return s == MemoryScope::PerForward ? "per_forward" : "per_episode";
}

struct HfwConfig {
    int64_t d = 0;      // model width
    int64_t heads = 0;  // head count; head_dim = d / heads
    double eta_max = 1.0;
    double delta = 1.0;
    double eps = 1e-6;
    MemoryScope memory_scope = MemoryScope::PerForward;
    double gate_scale = 1.0;  // 0 silences the module (ablation)

    void validate() const {
        if (d <= 0 || heads <= 0 || d % heads != 0)
            throw ConfigError("hfw: width " + std::to_string(d) + " must be divisible by heads " +
                              std::to_string(heads));
        if (eta_max <= 0.0 || delta <= 0.0 || eps <= 0.0)
            throw ConfigError("hfw: eta_max, delta and eps must be strictly positive");
    }

    int64_t head_dim() const { return d / heads; }
};

template <typename T>
struct HfwParams {
    Tensor<T> w_k, w_v, w_q, w_g;          // [d, d], bias-free
    Tensor<T> eta_logit, lambda_logit;     // scalars
    Tensor<T> gamma, beta;                 // output LayerNorm affine

    static HfwParams init(ParamStore<T>& store, const std::string& prefix, const HfwConfig& cfg) {
        cfg.validate();
        HfwParams p;
        p.w_k = store.uniform_fanin(prefix + ".w_k", {cfg.d, cfg.d}, cfg.d);
        p.w_v = store.uniform_fanin(prefix + ".w_v", {cfg.d, cfg.d}, cfg.d);
        p.w_q = store.uniform_fanin(prefix + ".w_q", {cfg.d, cfg.d}, cfg.d);
        p.w_g = store.uniform_fanin(prefix + ".w_g", {cfg.d, cfg.d}, cfg.d);
        // small initial plasticity, long persistence
        p.eta_logit = store.constant(prefix + ".eta_logit", {}, T(-3.0));
        p.lambda_logit = store.constant(prefix + ".lambda_logit", {}, T(2.0));
        p.gamma = store.ones(prefix + ".gamma", {cfg.d});
        p.beta = store.zeros(prefix + ".beta", {cfg.d});
        return p;
    }

    int64_t count() const {
        return w_k.numel() + w_v.numel() + w_q.numel() + w_g.numel() + eta_logit.numel() + lambda_logit.numel() +
               gamma.numel() + beta.numel();
    }
};

// Transient associative memory, one d_h x d_h matrix per (batch, head).
// Zero at scope start; never checkpointed.
template <typename T>
struct FastMemory {
    Tensor<T> m;  // [B, H, d_h, d_h]

    bool defined() const { return m.defined(); }

    static FastMemory zeros(int64_t batch, const HfwConfig& cfg) {
        return FastMemory{Tensor<T>::zeros({batch, cfg.heads, cfg.head_dim(), cfg.head_dim()})};
    }
};

// eta = sigmoid(eta_logit) * eta_max in (0, eta_max); lambda = sigmoid(lambda_logit) in (0, 1).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> effective_plasticity(const HfwParams<T>& p, const HfwConfig& cfg) {
    return {scale(sigmoid(p.eta_logit), static_cast<T>(cfg.eta_max)), sigmoid(p.lambda_logit)};
}

// [B, N, d] -> [B, H, N, d_h]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, int64_t heads) {
    const int64_t B = x.dim(0), N = x.dim(1), d = x.dim(2);
    return permute(reshape(x, {B, N, heads, d / heads}), {0, 2, 1, 3});
}

// [B, H, N, d_h] -> [B, N, d]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
    const int64_t B = x.dim(0), H = x.dim(1), N = x.dim(2), dh = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {B, N, H * dh});
}

template <typename T>
struct KvqHeads {
    Tensor<T> k, v, q;  // each [B, H, N, d_h]
};

template <typename T>
KvqHeads<T> project_kvq(const Tensor<T>& x, const HfwParams<T>& p, const HfwConfig& cfg) {
    if (x.rank() != 3 || x.dim(2) != cfg.d)
        throw DimensionError("project_kvq: expected [B, N, " + std::to_string(cfg.d) + "], got " +
                             shape_str(x.shape()));
    return {split_heads(matmul(x, p.w_k), cfg.heads), split_heads(matmul(x, p.w_v), cfg.heads),
            split_heads(matmul(x, p.w_q), cfg.heads)};
}

// A = clamp(K^T V / sqrt(N), -delta, +delta), summing over the token axis.
template <typename T>
Tensor<T> associate(const Tensor<T>& k, const Tensor<T>& v, const HfwConfig& cfg) {
    if (k.rank() != 4 || k.shape() != v.shape())
        throw DimensionError("associate: key/value shapes differ: " + shape_str(k.shape()) + " vs " +
                             shape_str(v.shape()));
    const int64_t N = k.dim(2);
    if (N < 1) throw DimensionError("associate: empty token axis");
    Tensor<T> raw = scale(matmul(transpose_last2(k), v), static_cast<T>(1.0 / std::sqrt(static_cast<double>(N))));
    return clamp(raw, static_cast<T>(-cfg.delta), static_cast<T>(cfg.delta));
}

// M <- (lambda * M + eta * A) / (||.||_F + eps), per (batch, head) slice.
// The memory batch axis may be 1 to share one memory across the batch.
template <typename T>
FastMemory<T> memory_write(const FastMemory<T>& mem, const Tensor<T>& a, const Tensor<T>& eta,
                           const Tensor<T>& lambda, const HfwConfig& cfg) {
    Tensor<T> raw = add(hadamard(lambda, mem.m), hadamard(eta, a));
    return FastMemory<T>{frobenius_normalize(raw, static_cast<T>(cfg.eps))};
}

// r_hat = Q M per (batch, head)
template <typename T>
Tensor<T> retrieve(const Tensor<T>& q, const FastMemory<T>& mem) {
    return matmul(q, mem.m);
}

// out = LayerNorm(sigmoid(x W_g) * r_hat)
template <typename T>
Tensor<T> gate_output(const Tensor<T>& x, const Tensor<T>& r_merged, const HfwParams<T>& p, const HfwConfig& cfg) {
    if (x.shape() != r_merged.shape())
        throw DimensionError("gate_output: shapes differ: " + shape_str(x.shape()) + " vs " +
                             shape_str(r_merged.shape()));
    Tensor<T> gate = sigmoid(matmul(x, p.w_g));
    if (cfg.gate_scale != 1.0) gate = scale(gate, static_cast<T>(cfg.gate_scale));
    return layer_norm(hadamard(gate, r_merged), p.gamma, p.beta, static_cast<T>(kLayerNormEps));
}

template <typename T>
struct HfwResult {
    Tensor<T> out;
    FastMemory<T> mem;
};

// Full module pass: project, associate, write, retrieve, gate. Under
// per_forward scope the memory is zeroed on entry; under per_episode the
// incoming memory is threaded and the caller decides whether to commit the
// returned one (query writes are discarded at the protocol level).
template <typename T>
HfwResult<T> hfw_forward(const Tensor<T>& x, const HfwParams<T>& p, const HfwConfig& cfg,
                         const FastMemory<T>& mem = FastMemory<T>{}) {
    cfg.validate();
    if (x.rank() != 3 || x.dim(2) != cfg.d)
        throw DimensionError("hfw_forward: expected [B, N, " + std::to_string(cfg.d) + "], got " +
                             shape_str(x.shape()));
    const int64_t B = x.dim(0);
    FastMemory<T> m_in;
    if (cfg.memory_scope == MemoryScope::PerForward || !mem.defined()) {
        m_in = FastMemory<T>::zeros(B, cfg);
    } else {
        const Shape& ms = mem.m.shape();
        if (ms.size() != 4 || (ms[0] != 1 && ms[0] != B) || ms[1] != cfg.heads || ms[2] != cfg.head_dim() ||
            ms[3] != cfg.head_dim())
            throw StateError("hfw_forward: stale memory of shape " + shape_str(ms) + " for batch " +
                             std::to_string(B) + ", heads " + std::to_string(cfg.heads));
        m_in = mem;
    }
    KvqHeads<T> kvq = project_kvq(x, p, cfg);
    Tensor<T> a = associate(kvq.k, kvq.v, cfg);
    auto [eta, lambda] = effective_plasticity(p, cfg);
    FastMemory<T> m_new = memory_write(m_in, a, eta, lambda, cfg);
    Tensor<T> r = merge_heads(retrieve(kvq.q, m_new));
    return {gate_output(x, r, p, cfg), m_new};
}

// Mean memory lifetime 1 / (1 - lambda).
inline double memory_lifetime(double lambda) {
    if (lambda >= 1.0) throw ArgumentError("memory_lifetime: lambda must be below 1, got " + std::to_string(lambda));
    return 1.0 / (1.0 - lambda);
}

}  // namespace hfw
