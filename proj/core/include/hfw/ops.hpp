#pragma once

// Differentiable kernels over Tensor<T>. Broadcasting aligns trailing axes;
// every kernel that participates in training has a recorded backward.

#include <cmath>
#include <cstring>
#include <span>

#include "hfw/tensor.hpp"

namespace hfw {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t ra = a.size(), rb = b.size();
    size_t r = std::max(ra, rb);
    if (r > static_cast<size_t>(kMaxRank))
        throw DimensionError(std::string(op) + ": rank above " + std::to_string(kMaxRank));
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = (i < r - ra) ? 1 : a[i - (r - ra)];
        int64_t db = (i < r - rb) ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1)
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

using StrideArr = std::array<int64_t, kMaxRank>;

// Row-major strides of `s` aligned to the trailing axes of `out`,
// with stride 0 on broadcast axes.
inline StrideArr bcast_strides(const Shape& s, const Shape& out) {
    StrideArr st{};
    size_t r = out.size(), rs = s.size();
    int64_t acc = 1;
    for (size_t i = rs; i-- > 0;) {
        st[i + (r - rs)] = (s[i] == 1 && out[i + (r - rs)] != 1) ? 0 : acc;
        acc *= s[i];
    }
    return st;
}

// Visit every element of `oshape` (contiguous output offset `oo`) together
// with offsets into two broadcast operands.
template <class F>
void bcast_for_each(const Shape& oshape, const StrideArr& sa, const StrideArr& sb, F&& f) {
    int r = static_cast<int>(oshape.size());
    if (r == 0) {
        f(int64_t(0), int64_t(0), int64_t(0));
        return;
    }
    int64_t n = shape_numel(oshape);
    if (n == 0) return;
    int64_t inner = oshape[static_cast<size_t>(r - 1)];
    int64_t outer = n / inner;
    StrideArr idx{};
    int64_t off_a = 0, off_b = 0, oo = 0;
    const int64_t la = sa[static_cast<size_t>(r - 1)], lb = sb[static_cast<size_t>(r - 1)];
    for (int64_t o = 0; o < outer; ++o) {
        int64_t pa = off_a, pb = off_b;
        for (int64_t i = 0; i < inner; ++i) {
            f(oo++, pa, pb);
            pa += la;
            pb += lb;
        }
        for (int ax = r - 2; ax >= 0; --ax) {
            size_t u = static_cast<size_t>(ax);
            ++idx[u];
            off_a += sa[u];
            off_b += sb[u];
            if (idx[u] < oshape[u]) break;
            off_a -= sa[u] * oshape[u];
            off_b -= sb[u] * oshape[u];
            idx[u] = 0;
        }
    }
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        const T* arow = A + i * K;
        T* crow = C + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = arow[k];
            const T* brow = B + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        const T* arow = A + i * N;
        T* crow = C + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const T* brow = B + k * N;
            T acc = T(0);
            for (int64_t j = 0; j < N; ++j) acc += arow[j] * brow[j];
            crow[k] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        const T* arow = A + i * K;
        const T* brow = B + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = arow[k];
            T* crow = C + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T, class Fwd, class BwdA, class BwdB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    Shape os = broadcast_shape(a.shape(), b.shape(), name);
    StrideArr sa = bcast_strides(a.shape(), os);
    StrideArr sb = bcast_strides(b.shape(), os);
    const bool rec = track(a, b);
    Tensor<T> out = make_result<T>(os, rec);
    {
        const T* pa = a.values().data();
        const T* pb = b.values().data();
        T* po = out.values().data();
        bcast_for_each(os, sa, sb, [&](int64_t oo, int64_t ia, int64_t ib) { po[oo] = fwd(pa[ia], pb[ib]); });
    }
    if (rec) {
        auto an = a.node(), bn = b.node();
        attach(out, {an, bn}, [an, bn, os, sa, sb, bwd_a, bwd_b](TensorNode<T>& o) {
            const T* go = o.grad.data();
            const T* pa = an->value.data();
            const T* pb = bn->value.data();
            if (an->requires_grad) {
                T* ga = an->grad.data();
                bcast_for_each(os, sa, sb,
                               [&](int64_t oo, int64_t ia, int64_t ib) { ga[ia] += bwd_a(go[oo], pa[ia], pb[ib]); });
            }
            if (bn->requires_grad) {
                T* gb = bn->grad.data();
                bcast_for_each(os, sa, sb,
                               [&](int64_t oo, int64_t ia, int64_t ib) { gb[ib] += bwd_b(go[oo], pa[ia], pb[ib]); });
            }
        });
    }
    return out;
}

template <typename T, class Fwd, class Bwd>
Tensor<T> unary_op(const Tensor<T>& a, Fwd fwd, Bwd bwd_from_in_out) {
    const bool rec = track(a);
    Tensor<T> out = make_result<T>(a.shape(), rec);
    const T* pa = a.values().data();
    T* po = out.values().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (rec) {
        auto an = a.node();
        attach(out, {an}, [an, bwd_from_in_out](TensorNode<T>& o) {
            const T* go = o.grad.data();
            const T* pv = an->value.data();
            const T* ov = o.value.data();
            T* ga = an->grad.data();
            const int64_t m = static_cast<int64_t>(an->value.size());
            for (int64_t i = 0; i < m; ++i) ga[i] += bwd_from_in_out(go[i], pv[i], ov[i]);
        });
    }
    return out;
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "hadamard", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
        [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    return detail::unary_op(
        a, [c](T x) { return c * x; }, [c](T g, T, T) { return c * g; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    if (lo > hi)
        throw ArgumentError("clamp: lo " + std::to_string(lo) + " exceeds hi " + std::to_string(hi));
    // Subgradient at the exact boundary is 1 (pass-through).
    return detail::unary_op(
        a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](T g, T x, T) { return (x >= lo && x <= hi) ? g : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary_op(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T g, T, T y) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    return detail::unary_op(
        a,
        [](T x) {
            static constexpr double inv_sqrt2 = 0.7071067811865475244;
            return static_cast<T>(0.5 * double(x) * (1.0 + std::erf(double(x) * inv_sqrt2)));
        },
        [](T g, T x, T) {
            static constexpr double inv_sqrt2 = 0.7071067811865475244;
            static constexpr double inv_sqrt_2pi = 0.3989422804014326779;
            double xd = double(x);
            double cdf = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * xd * xd);
            return static_cast<T>(double(g) * (cdf + xd * pdf));
        });
}

// ---- matmul ----

// Batched matrix product [*, M, K] x [*, K, N] -> [*, M, N]; leading axes broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const int64_t M = a.dim(-2), K = a.dim(-1);
    const int64_t K2 = b.dim(-2), N = b.dim(-1);
    if (K != K2)
        throw DimensionError("matmul: inner extents differ for shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    Shape lead = detail::broadcast_shape(lead_a, lead_b, "matmul");
    detail::StrideArr sa = detail::bcast_strides(lead_a, lead);
    detail::StrideArr sb = detail::bcast_strides(lead_b, lead);

    Shape os = lead;
    os.push_back(M);
    os.push_back(N);
    const bool rec = detail::track(a, b);
    Tensor<T> out = detail::make_result<T>(os, rec);
    {
        const T* pa = a.values().data();
        const T* pb = b.values().data();
        T* po = out.values().data();
        const int64_t asz = M * K, bsz = K * N, osz = M * N;
        detail::bcast_for_each(lead, sa, sb, [&](int64_t oo, int64_t ia, int64_t ib) {
            detail::gemm_nn(M, K, N, pa + ia * asz, pb + ib * bsz, po + oo * osz);
        });
    }
    if (rec) {
        auto an = a.node(), bn = b.node();
        detail::attach(out, {an, bn}, [an, bn, lead, sa, sb, M, K, N](TensorNode<T>& o) {
            const T* go = o.grad.data();
            const int64_t asz = M * K, bsz = K * N, osz = M * N;
            const T* pa = an->value.data();
            const T* pb = bn->value.data();
            T* ga = an->requires_grad ? an->grad.data() : nullptr;
            T* gb = bn->requires_grad ? bn->grad.data() : nullptr;
            detail::bcast_for_each(lead, sa, sb, [&](int64_t oo, int64_t ia, int64_t ib) {
                if (ga) detail::gemm_nt(M, N, K, go + oo * osz, pb + ib * bsz, ga + ia * asz);
                if (gb) detail::gemm_tn(M, K, N, pa + ia * asz, go + oo * osz, gb + ib * bsz);
            });
        });
    }
    return out;
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(std::move(shape), rec);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an](TensorNode<T>& o) {
            T* ga = an->grad.data();
            const T* go = o.grad.data();
            for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    const int r = a.rank();
    if (static_cast<int>(axes.size()) != r) throw DimensionError("permute: axes count mismatch");
    std::vector<bool> seen(static_cast<size_t>(r), false);
    Shape os(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        int ax = axes[static_cast<size_t>(i)];
        if (ax < 0 || ax >= r || seen[static_cast<size_t>(ax)]) throw DimensionError("permute: invalid axes");
        seen[static_cast<size_t>(ax)] = true;
        os[static_cast<size_t>(i)] = a.shape()[static_cast<size_t>(ax)];
    }
    // stride of out axis i = input stride of axes[i]
    detail::StrideArr in_strides{};
    {
        int64_t acc = 1;
        for (int i = r; i-- > 0;) {
            in_strides[static_cast<size_t>(i)] = acc;
            acc *= a.shape()[static_cast<size_t>(i)];
        }
    }
    detail::StrideArr gather{};
    for (int i = 0; i < r; ++i) gather[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];

    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(os, rec);
    {
        const T* pa = a.values().data();
        T* po = out.values().data();
        detail::StrideArr zero{};
        detail::bcast_for_each(os, gather, zero, [&](int64_t oo, int64_t ia, int64_t) { po[oo] = pa[ia]; });
    }
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an, os, gather](TensorNode<T>& o) {
            T* ga = an->grad.data();
            const T* go = o.grad.data();
            detail::StrideArr zero{};
            detail::bcast_for_each(os, gather, zero, [&](int64_t oo, int64_t ia, int64_t) { ga[ia] += go[oo]; });
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    std::vector<int> axes(static_cast<size_t>(a.rank()));
    for (int i = 0; i < a.rank(); ++i) axes[static_cast<size_t>(i)] = i;
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(a, axes);
}

template <typename T>
Tensor<T> concat_axis1(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || a.rank() < 2)
        throw DimensionError("concat_axis1: ranks differ or below 2");
    for (int i = 0; i < a.rank(); ++i)
        if (i != 1 && a.shape()[static_cast<size_t>(i)] != b.shape()[static_cast<size_t>(i)])
            throw DimensionError("concat_axis1: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                 " differ outside axis 1");
    Shape os = a.shape();
    os[1] += b.shape()[1];
    const int64_t outer = a.shape()[0];
    const int64_t inner_a = a.numel() / outer, inner_b = b.numel() / outer;
    const bool rec = detail::track(a, b);
    Tensor<T> out = detail::make_result<T>(os, rec);
    {
        const T* pa = a.values().data();
        const T* pb = b.values().data();
        T* po = out.values().data();
        for (int64_t i = 0; i < outer; ++i) {
            std::memcpy(po + i * (inner_a + inner_b), pa + i * inner_a, sizeof(T) * static_cast<size_t>(inner_a));
            std::memcpy(po + i * (inner_a + inner_b) + inner_a, pb + i * inner_b,
                        sizeof(T) * static_cast<size_t>(inner_b));
        }
    }
    if (rec) {
        auto an = a.node(), bn = b.node();
        detail::attach(out, {an, bn}, [an, bn, outer, inner_a, inner_b](TensorNode<T>& o) {
            const T* go = o.grad.data();
            for (int64_t i = 0; i < outer; ++i) {
                const T* row = go + i * (inner_a + inner_b);
                if (an->requires_grad) {
                    T* ga = an->grad.data() + i * inner_a;
                    for (int64_t j = 0; j < inner_a; ++j) ga[j] += row[j];
                }
                if (bn->requires_grad) {
                    T* gb = bn->grad.data() + i * inner_b;
                    for (int64_t j = 0; j < inner_b; ++j) gb[j] += row[inner_a + j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_axis0(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_axis0: no inputs");
    Shape os = parts[0].shape();
    if (os.empty()) throw DimensionError("concat_axis0: rank 0 input");
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank()) throw DimensionError("concat_axis0: rank mismatch");
        for (int i = 1; i < p.rank(); ++i)
            if (p.shape()[static_cast<size_t>(i)] != os[static_cast<size_t>(i)])
                throw DimensionError("concat_axis0: shapes " + shape_str(os) + " and " + shape_str(p.shape()) +
                                     " differ beyond axis 0");
        total += p.shape()[0];
    }
    os[0] = total;
    bool rec = false;
    if (grad_enabled())
        for (const auto& p : parts) rec = rec || p.requires_grad();
    Tensor<T> out = detail::make_result<T>(os, rec);
    {
        T* po = out.values().data();
        for (const auto& p : parts) {
            std::copy(p.values().begin(), p.values().end(), po);
            po += p.numel();
        }
    }
    if (rec) {
        std::vector<std::shared_ptr<TensorNode<T>>> parents;
        std::vector<int64_t> sizes;
        for (const auto& p : parts) {
            parents.push_back(p.node());
            sizes.push_back(p.numel());
        }
        detail::attach(out, std::move(parents), [sizes](TensorNode<T>& o) {
            const T* go = o.grad.data();
            for (size_t pi = 0; pi < o.parents.size(); ++pi) {
                auto& par = o.parents[pi];
                if (par->requires_grad) {
                    T* gp = par->grad.data();
                    for (int64_t j = 0; j < sizes[pi]; ++j) gp[j] += go[j];
                }
                go += sizes[pi];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> slice_axis0(const Tensor<T>& a, int64_t start, int64_t len) {
    if (a.rank() < 1 || start < 0 || len < 0 || start + len > a.shape()[0])
        throw DimensionError("slice_axis0: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") out of bounds for " + shape_str(a.shape()));
    Shape os = a.shape();
    os[0] = len;
    const int64_t inner = a.shape()[0] == 0 ? 0 : a.numel() / a.shape()[0];
    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(os, rec);
    std::copy(a.values().begin() + start * inner, a.values().begin() + (start + len) * inner, out.values().begin());
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an, start, inner](TensorNode<T>& o) {
            T* ga = an->grad.data() + start * inner;
            const T* go = o.grad.data();
            for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(Shape{}, rec);
    T acc = T(0);
    for (T v : a.values()) acc += v;
    out.values()[0] = acc;
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an](TensorNode<T>& o) {
            const T g = o.grad[0];
            for (T& gv : an->grad) gv += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Sum over the last axis, keeping it as extent 1.
template <typename T>
Tensor<T> sum_lastdim(const Tensor<T>& a) {
    if (a.rank() < 1) throw DimensionError("sum_lastdim: rank 0 input");
    Shape os = a.shape();
    const int64_t n = os.back();
    os.back() = 1;
    const int64_t rows = a.numel() / std::max<int64_t>(n, 1);
    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(os, rec);
    {
        const T* pa = a.values().data();
        T* po = out.values().data();
        for (int64_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (int64_t j = 0; j < n; ++j) acc += pa[r * n + j];
            po[r] = acc;
        }
    }
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an, rows, n](TensorNode<T>& o) {
            T* ga = an->grad.data();
            const T* go = o.grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < n; ++j) ga[r * n + j] += go[r];
        });
    }
    return out;
}

// Mean over the token axis of [B, N, d] -> [B, d].
template <typename T>
Tensor<T> gap(const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("gap: expected [B, N, d], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), N = x.dim(1), d = x.dim(2);
    if (N < 1) throw DimensionError("gap: token axis is empty");
    const bool rec = detail::track(x);
    Tensor<T> out = detail::make_result<T>(Shape{B, d}, rec);
    {
        const T* px = x.values().data();
        T* po = out.values().data();
        const T inv = T(1) / static_cast<T>(N);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < N; ++t)
                for (int64_t j = 0; j < d; ++j) po[b * d + j] += px[(b * N + t) * d + j] * inv;
    }
    if (rec) {
        auto xn = x.node();
        detail::attach(out, {xn}, [xn, B, N, d](TensorNode<T>& o) {
            T* gx = xn->grad.data();
            const T* go = o.grad.data();
            const T inv = T(1) / static_cast<T>(N);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < N; ++t)
                    for (int64_t j = 0; j < d; ++j) gx[(b * N + t) * d + j] += go[b * d + j] * inv;
        });
    }
    return out;
}

// ---- normalization ----

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
    if (a.rank() < 1) throw DimensionError("softmax_lastdim: rank 0 input");
    const int64_t n = a.shape().back();
    const int64_t rows = a.numel() / n;
    const bool rec = detail::track(a);
    Tensor<T> out = detail::make_result<T>(a.shape(), rec);
    {
        const T* pa = a.values().data();
        T* po = out.values().data();
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = pa + r * n;
            T* orow = po + r * n;
            T mx = row[0];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            T z = T(0);
            for (int64_t j = 0; j < n; ++j) {
                orow[j] = std::exp(row[j] - mx);
                z += orow[j];
            }
            const T inv = T(1) / z;
            for (int64_t j = 0; j < n; ++j) orow[j] *= inv;
        }
    }
    if (rec) {
        auto an = a.node();
        detail::attach(out, {an}, [an, rows, n](TensorNode<T>& o) {
            T* ga = an->grad.data();
            const T* go = o.grad.data();
            const T* y = o.value.data();
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = go + r * n;
                const T* yr = y + r * n;
                T dot = T(0);
                for (int64_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                T* gar = ga + r * n;
                for (int64_t j = 0; j < n; ++j) gar[j] += (gr[j] - dot) * yr[j];
            }
        });
    }
    return out;
}

// Per-token normalization over the last axis, then optional affine.
// gamma/beta may be undefined tensors for the affine-free form.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() < 1) throw DimensionError("layer_norm: rank 0 input");
    const int64_t n = x.shape().back();
    const int64_t rows = x.numel() / n;
    const bool affine = gamma.defined();
    if (affine) {
        if (gamma.rank() != 1 || gamma.dim(0) != n || !beta.defined() || beta.rank() != 1 || beta.dim(0) != n)
            throw DimensionError("layer_norm: affine extents must equal the last axis " + std::to_string(n));
    }
    bool rec = grad_enabled() && (x.requires_grad() || (affine && (gamma.requires_grad() || beta.requires_grad())));
    Tensor<T> out = detail::make_result<T>(x.shape(), rec);
    auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    auto xhat = std::make_shared<std::vector<T>>(x.values().begin(), x.values().end());
    {
        T* ph = xhat->data();
        T* po = out.values().data();
        const T* pg = affine ? gamma.values().data() : nullptr;
        const T* pb = affine ? beta.values().data() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
            T* row = ph + r * n;
            T mu = T(0);
            for (int64_t j = 0; j < n; ++j) mu += row[j];
            mu /= static_cast<T>(n);
            T var = T(0);
            for (int64_t j = 0; j < n; ++j) {
                row[j] -= mu;
                var += row[j] * row[j];
            }
            var /= static_cast<T>(n);
            const T rs = T(1) / std::sqrt(var + eps);
            (*rstd)[static_cast<size_t>(r)] = rs;
            T* orow = po + r * n;
            for (int64_t j = 0; j < n; ++j) {
                row[j] *= rs;
                orow[j] = affine ? row[j] * pg[j] + pb[j] : row[j];
            }
        }
    }
    if (rec) {
        auto xn = x.node();
        std::vector<std::shared_ptr<TensorNode<T>>> parents{xn};
        std::shared_ptr<TensorNode<T>> gn, bn;
        if (affine) {
            gn = gamma.node();
            bn = beta.node();
            parents.push_back(gn);
            parents.push_back(bn);
        }
        detail::attach(out, std::move(parents), [xn, gn, bn, rstd, xhat, rows, n, affine](TensorNode<T>& o) {
            const T* go = o.grad.data();
            const T* ph = xhat->data();
            const T* pg = affine ? gn->value.data() : nullptr;
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = go + r * n;
                const T* hr = ph + r * n;
                if (affine) {
                    if (gn->requires_grad) {
                        T* gg = gn->grad.data();
                        for (int64_t j = 0; j < n; ++j) gg[j] += gr[j] * hr[j];
                    }
                    if (bn->requires_grad) {
                        T* gb = bn->grad.data();
                        for (int64_t j = 0; j < n; ++j) gb[j] += gr[j];
                    }
                }
                if (xn->requires_grad) {
                    // dL/dx = rstd * (g - mean(g) - xhat * mean(g*xhat)), g = go*gamma
                    T mean_g = T(0), mean_gh = T(0);
                    for (int64_t j = 0; j < n; ++j) {
                        const T g = affine ? gr[j] * pg[j] : gr[j];
                        mean_g += g;
                        mean_gh += g * hr[j];
                    }
                    mean_g /= static_cast<T>(n);
                    mean_gh /= static_cast<T>(n);
                    const T rs = (*rstd)[static_cast<size_t>(r)];
                    T* gx = xn->grad.data() + r * n;
                    for (int64_t j = 0; j < n; ++j) {
                        const T g = affine ? gr[j] * pg[j] : gr[j];
                        gx[j] += rs * (g - mean_g - hr[j] * mean_gh);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps) {
    return layer_norm(x, Tensor<T>(), Tensor<T>(), eps);
}

// Divide each trailing-2D slice by (its Frobenius norm + eps).
template <typename T>
Tensor<T> frobenius_normalize(const Tensor<T>& m, T eps) {
    if (eps <= T(0)) throw ArgumentError("frobenius_normalize: eps must be positive");
    if (m.rank() < 2) throw DimensionError("frobenius_normalize: rank >= 2 required, got " + shape_str(m.shape()));
    const int64_t sz = m.dim(-1) * m.dim(-2);
    const int64_t slices = m.numel() / sz;
    const bool rec = detail::track(m);
    Tensor<T> out = detail::make_result<T>(m.shape(), rec);
    auto norms = std::make_shared<std::vector<T>>(static_cast<size_t>(slices));
    {
        const T* pm = m.values().data();
        T* po = out.values().data();
        for (int64_t s = 0; s < slices; ++s) {
            const T* ms = pm + s * sz;
            T sq = T(0);
            for (int64_t i = 0; i < sz; ++i) sq += ms[i] * ms[i];
            const T nrm = std::sqrt(sq);
            (*norms)[static_cast<size_t>(s)] = nrm;
            const T inv = T(1) / (nrm + eps);
            T* os = po + s * sz;
            for (int64_t i = 0; i < sz; ++i) os[i] = ms[i] * inv;
        }
    }
    if (rec) {
        auto mn = m.node();
        detail::attach(out, {mn}, [mn, norms, slices, sz, eps](TensorNode<T>& o) {
            const T* go = o.grad.data();
            const T* pm = mn->value.data();
            T* gm = mn->grad.data();
            for (int64_t s = 0; s < slices; ++s) {
                const T* gs = go + s * sz;
                const T* ms = pm + s * sz;
                T* gms = gm + s * sz;
                const T nrm = (*norms)[static_cast<size_t>(s)];
                const T a = T(1) / (nrm + eps);
                T dot = T(0);
                for (int64_t i = 0; i < sz; ++i) dot += gs[i] * ms[i];
                const T c = nrm > T(0) ? dot / (nrm * (nrm + eps) * (nrm + eps)) : T(0);
                for (int64_t i = 0; i < sz; ++i) gms[i] += a * gs[i] - c * ms[i];
            }
        });
    }
    return out;
}

// ---- image / token layout ----

// [B, C, H, W] -> [B, (H/p)*(W/p), C*p*p]; patches scan row-major, each token
// flattens as (channel, patch-row, patch-col).
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int64_t p) {
    if (images.rank() != 4)
        throw DimensionError("patchify: expected [B, C, H, W], got " + shape_str(images.shape()));
    if (p < 1) throw ArgumentError("patchify: patch extent must be >= 1");
    const int64_t B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
    if (H % p != 0 || W % p != 0)
        throw DimensionError("patchify: extents " + std::to_string(H) + "x" + std::to_string(W) +
                             " not divisible by patch " + std::to_string(p));
    const int64_t gh = H / p, gw = W / p, tokens = gh * gw, tok_len = C * p * p;
    const bool rec = detail::track(images);
    Tensor<T> out = detail::make_result<T>(Shape{B, tokens, tok_len}, rec);
    const T* pi = images.values().data();
    T* po = out.values().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t gy = 0; gy < gh; ++gy)
            for (int64_t gx = 0; gx < gw; ++gx) {
                T* tok = po + ((b * tokens) + gy * gw + gx) * tok_len;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t py = 0; py < p; ++py)
                        for (int64_t px = 0; px < p; ++px)
                            tok[(c * p + py) * p + px] = pi[((b * C + c) * H + gy * p + py) * W + gx * p + px];
            }
    if (rec) {
        auto in = images.node();
        detail::attach(out, {in}, [in, B, C, H, W, p, gh, gw, tokens, tok_len](TensorNode<T>& o) {
            T* gi = in->grad.data();
            const T* go = o.grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t gy = 0; gy < gh; ++gy)
                    for (int64_t gx = 0; gx < gw; ++gx) {
                        const T* tok = go + ((b * tokens) + gy * gw + gx) * tok_len;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t py = 0; py < p; ++py)
                                for (int64_t px = 0; px < p; ++px)
                                    gi[((b * C + c) * H + gy * p + py) * W + gx * p + px] +=
                                        tok[(c * p + py) * p + px];
                    }
        });
    }
    return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int64_t C, int64_t H, int64_t W, int64_t p) {
    if (tokens.rank() != 3)
        throw DimensionError("unpatchify: expected [B, N, L], got " + shape_str(tokens.shape()));
    if (p < 1 || H % p != 0 || W % p != 0) throw DimensionError("unpatchify: extents not divisible by patch");
    const int64_t B = tokens.dim(0), gh = H / p, gw = W / p;
    if (tokens.dim(1) != gh * gw || tokens.dim(2) != C * p * p)
        throw DimensionError("unpatchify: token layout " + shape_str(tokens.shape()) + " does not match " +
                             std::to_string(C) + "x" + std::to_string(H) + "x" + std::to_string(W) + "/p" +
                             std::to_string(p));
    const int64_t tok_len = C * p * p, ntok = gh * gw;
    const bool rec = detail::track(tokens);
    Tensor<T> out = detail::make_result<T>(Shape{B, C, H, W}, rec);
    const T* pt = tokens.values().data();
    T* po = out.values().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t gy = 0; gy < gh; ++gy)
            for (int64_t gx = 0; gx < gw; ++gx) {
                const T* tok = pt + ((b * ntok) + gy * gw + gx) * tok_len;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t py = 0; py < p; ++py)
                        for (int64_t px = 0; px < p; ++px)
                            po[((b * C + c) * H + gy * p + py) * W + gx * p + px] = tok[(c * p + py) * p + px];
            }
    if (rec) {
        auto tn = tokens.node();
        detail::attach(out, {tn}, [tn, B, C, H, W, p, gh, gw, ntok, tok_len](TensorNode<T>& o) {
            T* gt = tn->grad.data();
            const T* go = o.grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t gy = 0; gy < gh; ++gy)
                    for (int64_t gx = 0; gx < gw; ++gx) {
                        T* tok = gt + ((b * ntok) + gy * gw + gx) * tok_len;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t py = 0; py < p; ++py)
                                for (int64_t px = 0; px < p; ++px)
                                    tok[(c * p + py) * p + px] +=
                                        go[((b * C + c) * H + gy * p + py) * W + gx * p + px];
                    }
        });
    }
    return out;
}

// Cyclic shift over the spatial axes of [B, h, w, C].
template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, int64_t sy, int64_t sx) {
    if (x.rank() != 4) throw DimensionError("roll2d: expected [B, h, w, C], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), h = x.dim(1), w = x.dim(2), C = x.dim(3);
    auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
    const bool rec = detail::track(x);
    Tensor<T> out = detail::make_result<T>(x.shape(), rec);
    const T* px = x.values().data();
    T* po = out.values().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t y = 0; y < h; ++y) {
            const int64_t ty = wrap(y + sy, h);
            for (int64_t xcol = 0; xcol < w; ++xcol) {
                const int64_t tx = wrap(xcol + sx, w);
                std::memcpy(po + ((b * h + ty) * w + tx) * C, px + ((b * h + y) * w + xcol) * C,
                            sizeof(T) * static_cast<size_t>(C));
            }
        }
    if (rec) {
        auto xn = x.node();
        detail::attach(out, {xn}, [xn, B, h, w, C, sy, sx, wrap](TensorNode<T>& o) {
            T* gx = xn->grad.data();
            const T* go = o.grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t ty = wrap(y + sy, h);
                    for (int64_t xcol = 0; xcol < w; ++xcol) {
                        const int64_t tx = wrap(xcol + sx, w);
                        const T* src = go + ((b * h + ty) * w + tx) * C;
                        T* dst = gx + ((b * h + y) * w + xcol) * C;
                        for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
                    }
                }
        });
    }
    return out;
}

// Symmetric spatial padding of [B, C, H, W]; fill is per-channel.
template <typename T>
Tensor<T> pad_images(const Tensor<T>& x, int64_t top, int64_t bottom, int64_t left, int64_t right,
                     const std::vector<T>& fill) {
    if (x.rank() != 4) throw DimensionError("pad_images: expected [B, C, H, W], got " + shape_str(x.shape()));
    if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ArgumentError("pad_images: negative pad");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (!fill.empty() && static_cast<int64_t>(fill.size()) != C)
        throw DimensionError("pad_images: fill must have one value per channel");
    const int64_t Ho = H + top + bottom, Wo = W + left + right;
    const bool rec = detail::track(x);
    Tensor<T> out = detail::make_result<T>(Shape{B, C, Ho, Wo}, rec);
    T* po = out.values().data();
    const T* px = x.values().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T f = fill.empty() ? T(0) : fill[static_cast<size_t>(c)];
            T* plane = po + (b * C + c) * Ho * Wo;
            for (int64_t i = 0; i < Ho * Wo; ++i) plane[i] = f;
            for (int64_t y = 0; y < H; ++y)
                std::memcpy(plane + (y + top) * Wo + left, px + ((b * C + c) * H + y) * W,
                            sizeof(T) * static_cast<size_t>(W));
        }
    if (rec) {
        auto xn = x.node();
        detail::attach(out, {xn}, [xn, B, C, H, W, Ho, Wo, top, left](TensorNode<T>& o) {
            T* gx = xn->grad.data();
            const T* go = o.grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t y = 0; y < H; ++y) {
                        const T* src = go + ((b * C + c) * Ho + y + top) * Wo + left;
                        T* dst = gx + ((b * C + c) * H + y) * W;
                        for (int64_t xx = 0; xx < W; ++xx) dst[xx] += src[xx];
                    }
        });
    }
    return out;
}

// ---- loss ----

// Mean softmax cross-entropy over rows of [M, N] against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: expected [M, N], got " + shape_str(logits.shape()));
    const int64_t M = logits.dim(0), N = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != M)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(M) +
                             " rows");
    for (int64_t l : labels)
        if (l < 0 || l >= N) throw ArgumentError("cross_entropy: label " + std::to_string(l) + " out of range");
    const bool rec = detail::track(logits);
    Tensor<T> out = detail::make_result<T>(Shape{}, rec);
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(M * N));
    {
        const T* pl = logits.values().data();
        T* pp = probs->data();
        T loss = T(0);
        for (int64_t i = 0; i < M; ++i) {
            const T* row = pl + i * N;
            T mx = row[0];
            for (int64_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
            T z = T(0);
            for (int64_t j = 0; j < N; ++j) {
                pp[i * N + j] = std::exp(row[j] - mx);
                z += pp[i * N + j];
            }
            const T inv = T(1) / z;
            for (int64_t j = 0; j < N; ++j) pp[i * N + j] *= inv;
            loss += std::log(z) + mx - row[labels[static_cast<size_t>(i)]];
        }
        out.values()[0] = loss / static_cast<T>(M);
    }
    if (rec) {
        auto ln = logits.node();
        detail::attach(out, {ln}, [ln, probs, labels, M, N](TensorNode<T>& o) {
            const T g = o.grad[0] / static_cast<T>(M);
            T* gl = ln->grad.data();
            const T* pp = probs->data();
            for (int64_t i = 0; i < M; ++i)
                for (int64_t j = 0; j < N; ++j)
                    gl[i * N + j] += g * (pp[i * N + j] - (j == labels[static_cast<size_t>(i)] ? T(1) : T(0)));
        });
    }
    return out;
}

// Frobenius norm of each trailing-2D slice (plain values, no graph).
template <typename T>
std::vector<T> frobenius_norms(const Tensor<T>& m) {
    if (m.rank() < 2) throw DimensionError("frobenius_norms: rank >= 2 required");
    const int64_t sz = m.dim(-1) * m.dim(-2);
    const int64_t slices = m.numel() / sz;
    std::vector<T> out(static_cast<size_t>(slices));
    const T* pm = m.values().data();
    for (int64_t s = 0; s < slices; ++s) {
        T sq = T(0);
        for (int64_t i = 0; i < sz; ++i) sq += pm[s * sz + i] * pm[s * sz + i];
        out[static_cast<size_t>(s)] = std::sqrt(sq);
    }
    return out;
}

}  // namespace hfw
