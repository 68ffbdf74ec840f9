#pragma once

// Two backbone families share one block vocabulary:
//   flat  — patch tokens through a stack of pre-norm transformer blocks, with
//           an optional fast-weight module beside every block:
//           x_{l+1} = Block_l(x_l) + HFW_l(Norm(x_l))
//   hier  — four-ish stages of window attention with patch merging between
//           stages, and a single optional fast-weight module applied to the
//           flattened, normalized final-stage map before pooling:
//           z = GAP(x_flat + HFW(x_flat))

#include <optional>
#include <string>
#include <vector>

#include "hfw/hebbian.hpp"
#include "hfw/ops.hpp"
#include "hfw/params.hpp"

namespace hfw {

enum class EmbedMode { Gap, Cls };
enum class ModelKind { Flat, Hier };

struct FlatBackboneConfig {
    int64_t depth = 12;
    int64_t d = 384;
    int64_t heads = 6;
    int64_t mlp_ratio = 4;
    int64_t patch = 16;
    int64_t image = 96;  // post-pad input extent
    int64_t channels = 3;
    EmbedMode embed_mode = EmbedMode::Gap;
    bool pad_input = true;
    std::vector<double> pad_fill;       // per-channel; empty = zeros
    std::optional<HfwConfig> hfw;       // per-block module when set

    int64_t tokens() const { return (image / patch) * (image / patch); }

    void validate() const {
        if (depth < 1) throw ConfigError("flat backbone: depth must be >= 1");
        if (d <= 0 || heads <= 0 || d % heads != 0)
            throw ConfigError("flat backbone: width " + std::to_string(d) + " not divisible by heads " +
                              std::to_string(heads));
        if (patch < 1 || image < patch || image % patch != 0)
            throw ConfigError("flat backbone: image " + std::to_string(image) + " not divisible by patch " +
                              std::to_string(patch));
        if (mlp_ratio < 1 || channels < 1) throw ConfigError("flat backbone: bad mlp_ratio/channels");
    }
};

struct HierBackboneConfig {
    std::vector<int64_t> stage_depths{2, 2, 6, 2};
    std::vector<int64_t> stage_dims{96, 192, 384, 768};
    std::vector<int64_t> stage_heads{3, 6, 12, 24};
    int64_t window = 6;
    int64_t patch = 4;
    int64_t image = 96;
    int64_t channels = 3;
    int64_t mlp_ratio = 4;
    bool shift = true;  // cyclic shift on alternate blocks
    bool pad_input = true;
    std::vector<double> pad_fill;
    std::optional<HfwConfig> hfw;  // single final-stage module when set

    size_t stages() const { return stage_depths.size(); }

    int64_t grid_at(size_t stage) const { return (image / patch) >> stage; }

    int64_t effective_window(size_t stage) const { return std::min<int64_t>(window, grid_at(stage)); }

    void validate() const {
        if (stage_depths.empty() || stage_depths.size() != stage_dims.size() ||
            stage_depths.size() != stage_heads.size())
            throw ConfigError("hier backbone: stage lists must be non-empty and of equal length");
        for (size_t s = 0; s + 1 < stage_dims.size(); ++s)
            if (stage_dims[s + 1] != 2 * stage_dims[s])
                throw ConfigError("hier backbone: stage dims must double per stage");
        for (size_t s = 0; s < stage_dims.size(); ++s)
            if (stage_dims[s] <= 0 || stage_heads[s] <= 0 || stage_dims[s] % stage_heads[s] != 0)
                throw ConfigError("hier backbone: stage dim not divisible by heads at stage " + std::to_string(s));
        if (patch < 1 || image < patch || image % patch != 0)
            throw ConfigError("hier backbone: image " + std::to_string(image) + " not divisible by patch " +
                              std::to_string(patch));
        if (window < 1 || mlp_ratio < 1 || channels < 1) throw ConfigError("hier backbone: bad window/mlp/channels");
        int64_t g = image / patch;
        for (size_t s = 0; s < stages(); ++s) {
            if (g < 1) throw ConfigError("hier backbone: spatial grid vanishes at stage " + std::to_string(s));
            const int64_t weff = std::min<int64_t>(window, g);
            if (g % weff != 0)
                throw ConfigError("hier backbone: grid " + std::to_string(g) + " not divisible by window " +
                                  std::to_string(weff) + " at stage " + std::to_string(s));
            if (s + 1 < stages()) {
                if (g % 2 != 0)
                    throw ConfigError("hier backbone: grid " + std::to_string(g) +
                                      " not even before merge at stage " + std::to_string(s));
                g /= 2;
            }
        }
    }
};

template <typename T>
struct LayerNormP {
    Tensor<T> gamma, beta;
};

template <typename T>
struct AttnParams {
    Tensor<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

template <typename T>
struct MlpParams {
    Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct BlockParams {
    LayerNormP<T> ln1, ln2;
    AttnParams<T> attn;
    MlpParams<T> mlp;
    std::optional<HfwParams<T>> hfw;
};

template <typename T>
struct PatchMergeParams {
    LayerNormP<T> ln;  // over 4C
    Tensor<T> w;       // [4C, 2C], bias-free
};

// ---- building blocks ----

template <typename T>
Tensor<T> apply_ln(const Tensor<T>& x, const LayerNormP<T>& ln) {
    return layer_norm(x, ln.gamma, ln.beta, static_cast<T>(kLayerNormEps));
}

template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const MlpParams<T>& mp) {
    return add(matmul(gelu(add(matmul(x, mp.w1), mp.b1)), mp.w2), mp.b2);
}

// Attention weights of one self-attention pass (softmax rows), for inspection.
template <typename T>
Tensor<T> mhsa_attention(const Tensor<T>& x, const AttnParams<T>& ap, int64_t heads) {
    const int64_t dh = x.dim(2) / heads;
    Tensor<T> q = split_heads(add(matmul(x, ap.w_q), ap.b_q), heads);
    Tensor<T> k = split_heads(add(matmul(x, ap.w_k), ap.b_k), heads);
    return softmax_lastdim(scale(matmul(q, transpose_last2(k)), static_cast<T>(1.0 / std::sqrt(double(dh)))));
}

template <typename T>
Tensor<T> mhsa(const Tensor<T>& x, const AttnParams<T>& ap, int64_t heads) {
    Tensor<T> attn = mhsa_attention(x, ap, heads);
    Tensor<T> v = split_heads(add(matmul(x, ap.w_v), ap.b_v), heads);
    return add(matmul(merge_heads(matmul(attn, v)), ap.w_o), ap.b_o);
}

// Pre-norm transformer block on [B, N, d].
template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& bp, int64_t heads) {
    if (x.rank() != 3 || x.dim(2) != bp.ln1.gamma.dim(0))
        throw DimensionError("block_forward: width mismatch for input " + shape_str(x.shape()));
    Tensor<T> h = add(x, mhsa(apply_ln(x, bp.ln1), bp.attn, heads));
    return add(h, mlp_forward(apply_ln(h, bp.ln2), bp.mlp));
}

// Self-attention inside non-overlapping window x window tiles of [B, h, w, C].
// When shifted, a cyclic shift of window/2 is applied before tiling and
// inverted afterwards; no cross-window mask is used.
template <typename T>
Tensor<T> window_attention(const Tensor<T>& x, const AttnParams<T>& ap, int64_t heads, int64_t window,
                           bool shifted) {
    if (x.rank() != 4) throw DimensionError("window_attention: expected [B, h, w, C], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), h = x.dim(1), w = x.dim(2), C = x.dim(3);
    if (window < 1 || h % window != 0 || w % window != 0)
        throw DimensionError("window_attention: grid " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by window " + std::to_string(window));
    const int64_t s = window / 2;
    Tensor<T> t = shifted ? roll2d(x, -s, -s) : x;
    const int64_t nh = h / window, nw = w / window;
    t = reshape(t, {B, nh, window, nw, window, C});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    t = reshape(t, {B * nh * nw, window * window, C});
    t = mhsa(t, ap, heads);
    t = reshape(t, {B, nh, nw, window, window, C});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    t = reshape(t, {B, h, w, C});
    return shifted ? roll2d(t, s, s) : t;
}

template <typename T>
Tensor<T> window_block_forward(const Tensor<T>& x, const BlockParams<T>& bp, int64_t heads, int64_t window,
                               bool shifted) {
    Tensor<T> h = add(x, window_attention(apply_ln(x, bp.ln1), bp.attn, heads, window, shifted));
    return add(h, mlp_forward(apply_ln(h, bp.ln2), bp.mlp));
}

// Concatenate each 2x2 spatial neighborhood, LayerNorm, project 4C -> 2C.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const PatchMergeParams<T>& pm) {
    if (x.rank() != 4) throw DimensionError("patch_merge: expected [B, h, w, C], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), h = x.dim(1), w = x.dim(2), C = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("patch_merge: odd extents " + std::to_string(h) + "x" + std::to_string(w));
    Tensor<T> t = reshape(x, {B, h / 2, 2, w / 2, 2, C});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    t = reshape(t, {B, h / 2, w / 2, 4 * C});
    return matmul(apply_ln(t, pm.ln), pm.w);
}

// ---- model ----

template <typename T>
class Model;

// Per-module fast memory threaded across forwards within one episode.
template <typename T>
struct MemoryBank {
    std::vector<FastMemory<T>> mods;
};

template <typename T>
struct FlatParts {
    Tensor<T> embed_w, embed_b;
    Tensor<T> pos;
    Tensor<T> cls;  // defined only in cls mode
    std::vector<BlockParams<T>> blocks;
    LayerNormP<T> final_ln;
};

template <typename T>
struct HierParts {
    Tensor<T> embed_w, embed_b;
    LayerNormP<T> embed_ln;
    std::vector<std::vector<BlockParams<T>>> stages;
    std::vector<PatchMergeParams<T>> merges;
    LayerNormP<T> final_ln;
    std::optional<HfwParams<T>> hfw;
};

template <typename T>
class Model {
  public:
    static Model flat(FlatBackboneConfig cfg, uint64_t seed) {
        cfg.validate();
        Model m(ModelKind::Flat, seed);
        m.flat_cfg_ = cfg;
        if (cfg.hfw) m.hfw_cfg_ = m.resolve_hfw(*cfg.hfw, cfg.d, cfg.heads);
        auto& st = m.store_;
        auto& fp = m.flat_;
        const int64_t pd = cfg.channels * cfg.patch * cfg.patch;
        fp.embed_w = st.uniform_fanin("embed.w", {pd, cfg.d}, pd);
        fp.embed_b = st.zeros("embed.b", {cfg.d});
        const bool cls = cfg.embed_mode == EmbedMode::Cls;
        fp.pos = st.normal("pos", {cfg.tokens() + (cls ? 1 : 0), cfg.d}, 0.02);
        if (cls) fp.cls = st.normal("cls", {1, 1, cfg.d}, 0.02);
        for (int64_t l = 0; l < cfg.depth; ++l) {
            BlockParams<T> bp = m.make_block("block" + std::to_string(l), cfg.d, cfg.mlp_ratio);
            if (m.hfw_cfg_) bp.hfw = HfwParams<T>::init(st, "block" + std::to_string(l) + ".hfw", *m.hfw_cfg_);
            fp.blocks.push_back(std::move(bp));
        }
        fp.final_ln = m.make_ln("final_ln", cfg.d);
        return m;
    }

    static Model hier(HierBackboneConfig cfg, uint64_t seed) {
        cfg.validate();
        Model m(ModelKind::Hier, seed);
        m.hier_cfg_ = cfg;
        if (cfg.hfw) m.hfw_cfg_ = m.resolve_hfw(*cfg.hfw, cfg.stage_dims.back(), cfg.stage_heads.back());
        auto& st = m.store_;
        auto& hp = m.hier_;
        const int64_t pd = cfg.channels * cfg.patch * cfg.patch;
        hp.embed_w = st.uniform_fanin("embed.w", {pd, cfg.stage_dims[0]}, pd);
        hp.embed_b = st.zeros("embed.b", {cfg.stage_dims[0]});
        hp.embed_ln = m.make_ln("embed_ln", cfg.stage_dims[0]);
        for (size_t s = 0; s < cfg.stages(); ++s) {
            std::vector<BlockParams<T>> blocks;
            for (int64_t i = 0; i < cfg.stage_depths[s]; ++i)
                blocks.push_back(m.make_block("stage" + std::to_string(s) + ".block" + std::to_string(i),
                                              cfg.stage_dims[s], cfg.mlp_ratio));
            hp.stages.push_back(std::move(blocks));
            if (s + 1 < cfg.stages()) {
                PatchMergeParams<T> pm;
                const int64_t c4 = 4 * cfg.stage_dims[s];
                pm.ln = m.make_ln("merge" + std::to_string(s) + ".ln", c4);
                pm.w = st.uniform_fanin("merge" + std::to_string(s) + ".w", {c4, 2 * cfg.stage_dims[s]}, c4);
                hp.merges.push_back(std::move(pm));
            }
        }
        hp.final_ln = m.make_ln("final_ln", cfg.stage_dims.back());
        if (m.hfw_cfg_) hp.hfw = HfwParams<T>::init(st, "hfw", *m.hfw_cfg_);
        return m;
    }

    ModelKind kind() const { return kind_; }
    uint64_t seed() const { return store_.seed(); }

    const FlatBackboneConfig& flat_config() const {
        if (kind_ != ModelKind::Flat) throw StateError("not a flat model");
        return flat_cfg_;
    }
    const HierBackboneConfig& hier_config() const {
        if (kind_ != ModelKind::Hier) throw StateError("not a hier model");
        return hier_cfg_;
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }

    bool has_hfw() const { return hfw_cfg_.has_value(); }
    const HfwConfig& hfw_config() const {
        if (!hfw_cfg_) throw StateError("model has no fast-weight module");
        return *hfw_cfg_;
    }
    HfwConfig& hfw_config_mut() {
        if (!hfw_cfg_) throw StateError("model has no fast-weight module");
        return *hfw_cfg_;
    }

    int64_t hfw_module_count() const {
        if (!hfw_cfg_) return 0;
        return kind_ == ModelKind::Flat ? flat_cfg_.depth : 1;
    }

    MemoryScope memory_scope() const { return hfw_cfg_ ? hfw_cfg_->memory_scope : MemoryScope::PerForward; }

    int64_t embed_dim() const { return kind_ == ModelKind::Flat ? flat_cfg_.d : hier_cfg_.stage_dims.back(); }

    int64_t count_parameters() const { return store_.total_params(); }

    MemoryBank<T> make_bank(int64_t batch) const {
        MemoryBank<T> bank;
        for (int64_t i = 0; i < hfw_module_count(); ++i) bank.mods.push_back(FastMemory<T>::zeros(batch, *hfw_cfg_));
        return bank;
    }

    // Image batch [B, C, H, W] -> embedding [B, embed_dim]. `bank` threads the
    // per-module fast memory across calls; updates are stored back only when
    // `commit` is true.
    Tensor<T> forward(const Tensor<T>& images, MemoryBank<T>* bank = nullptr, bool commit = true) const {
        return kind_ == ModelKind::Flat ? flat_forward(images, bank, commit) : hier_forward(images, bank, commit);
    }

    // Episode embedding under the configured memory scope. per_forward embeds
    // each image against a fresh memory; per_episode threads memory through
    // the support items in order, then lets queries read (not write) it.
    std::pair<Tensor<T>, Tensor<T>> embed_episode(const Tensor<T>& support, const Tensor<T>& query) const {
        if (!has_hfw() || hfw_cfg_->memory_scope == MemoryScope::PerForward)
            return {forward(support), forward(query)};
        MemoryBank<T> bank = make_bank(1);
        std::vector<Tensor<T>> rows;
        const int64_t s_count = support.dim(0);
        rows.reserve(static_cast<size_t>(s_count));
        for (int64_t i = 0; i < s_count; ++i) rows.push_back(forward(slice_axis0(support, i, 1), &bank, true));
        Tensor<T> s_emb = concat_axis0(rows);
        Tensor<T> q_emb = forward(query, &bank, false);
        return {s_emb, q_emb};
    }

    std::vector<double> eta_values() const {
        std::vector<double> out;
        for_each_hfw([&](const HfwParams<T>& p) {
            out.push_back(1.0 / (1.0 + std::exp(-double(p.eta_logit.item()))) * hfw_cfg_->eta_max);
        });
        return out;
    }

    std::vector<double> lambda_values() const {
        std::vector<double> out;
        for_each_hfw([&](const HfwParams<T>& p) { out.push_back(1.0 / (1.0 + std::exp(-double(p.lambda_logit.item())))); });
        return out;
    }

    template <class F>
    void for_each_hfw(F&& f) const {
        if (!hfw_cfg_) return;
        if (kind_ == ModelKind::Flat) {
            for (const auto& b : flat_.blocks)
                if (b.hfw) f(*b.hfw);
        } else if (hier_.hfw) {
            f(*hier_.hfw);
        }
    }

    const FlatParts<T>& flat_parts() const { return flat_; }
    const HierParts<T>& hier_parts() const { return hier_; }

  private:
    Model(ModelKind kind, uint64_t seed) : kind_(kind), store_(seed) {}

    HfwConfig resolve_hfw(HfwConfig hc, int64_t width, int64_t heads) const {
        if (hc.d == 0) hc.d = width;
        if (hc.heads == 0) hc.heads = heads;
        if (hc.d != width)
            throw ConfigError("hfw width " + std::to_string(hc.d) + " must match backbone width " +
                              std::to_string(width));
        hc.validate();
        return hc;
    }

    LayerNormP<T> make_ln(const std::string& prefix, int64_t d) {
        return {store_.ones(prefix + ".gamma", {d}), store_.zeros(prefix + ".beta", {d})};
    }

    BlockParams<T> make_block(const std::string& prefix, int64_t d, int64_t mlp_ratio) {
        BlockParams<T> bp;
        bp.ln1 = make_ln(prefix + ".ln1", d);
        bp.ln2 = make_ln(prefix + ".ln2", d);
        auto& a = bp.attn;
        a.w_q = store_.uniform_fanin(prefix + ".attn.w_q", {d, d}, d);
        a.b_q = store_.zeros(prefix + ".attn.b_q", {d});
        a.w_k = store_.uniform_fanin(prefix + ".attn.w_k", {d, d}, d);
        a.b_k = store_.zeros(prefix + ".attn.b_k", {d});
        a.w_v = store_.uniform_fanin(prefix + ".attn.w_v", {d, d}, d);
        a.b_v = store_.zeros(prefix + ".attn.b_v", {d});
        a.w_o = store_.uniform_fanin(prefix + ".attn.w_o", {d, d}, d);
        a.b_o = store_.zeros(prefix + ".attn.b_o", {d});
        const int64_t hd = d * mlp_ratio;
        bp.mlp.w1 = store_.uniform_fanin(prefix + ".mlp.w1", {d, hd}, d);
        bp.mlp.b1 = store_.zeros(prefix + ".mlp.b1", {hd});
        bp.mlp.w2 = store_.uniform_fanin(prefix + ".mlp.w2", {hd, d}, hd);
        bp.mlp.b2 = store_.zeros(prefix + ".mlp.b2", {d});
        return bp;
    }

    Tensor<T> prepare_input(const Tensor<T>& images, int64_t target, bool pad_enabled,
                            const std::vector<double>& fill) const {
        if (images.rank() != 4)
            throw DimensionError("forward: expected [B, C, H, W], got " + shape_str(images.shape()));
        const int64_t H = images.dim(2), W = images.dim(3);
        if (H == target && W == target) return images;
        if (!pad_enabled)
            throw DimensionError("forward: input " + std::to_string(H) + "x" + std::to_string(W) +
                                 " does not match configured extent " + std::to_string(target) +
                                 " and padding is disabled");
        if (H > target || W > target)
            throw DimensionError("forward: input " + std::to_string(H) + "x" + std::to_string(W) +
                                 " exceeds configured extent " + std::to_string(target));
        std::vector<T> f(fill.begin(), fill.end());
        const int64_t top = (target - H) / 2, left = (target - W) / 2;
        return pad_images(images, top, target - H - top, left, target - W - left, f);
    }

    Tensor<T> flat_forward(const Tensor<T>& images, MemoryBank<T>* bank, bool commit) const {
        const auto& cfg = flat_cfg_;
        Tensor<T> x = prepare_input(images, cfg.image, cfg.pad_input, cfg.pad_fill);
        Tensor<T> h = add(matmul(patchify(x, cfg.patch), flat_.embed_w), flat_.embed_b);
        if (cfg.embed_mode == EmbedMode::Cls) {
            Tensor<T> cls_row = add(Tensor<T>::zeros({h.dim(0), 1, cfg.d}), flat_.cls);
            h = concat_axis1(cls_row, h);
        }
        h = add(h, flat_.pos);
        size_t mod = 0;
        for (int64_t l = 0; l < cfg.depth; ++l) {
            const auto& bp = flat_.blocks[static_cast<size_t>(l)];
            if (bp.hfw) {
                // affine-free pre-module norm, separate from the block's own norms
                Tensor<T> normed = layer_norm(h, static_cast<T>(kLayerNormEps));
                FastMemory<T> m_in = bank ? bank->mods[mod] : FastMemory<T>{};
                HfwResult<T> r = hfw_forward(normed, *bp.hfw, *hfw_cfg_, m_in);
                if (bank && commit) bank->mods[mod] = r.mem;
                ++mod;
                h = add(block_forward(h, bp, cfg.heads), r.out);
            } else {
                h = block_forward(h, bp, cfg.heads);
            }
        }
        h = apply_ln(h, flat_.final_ln);
        if (cfg.embed_mode == EmbedMode::Cls) {
            Tensor<T> first = slice_axis0(permute(h, {1, 0, 2}), 0, 1);
            return reshape(first, {h.dim(0), cfg.d});
        }
        return gap(h);
    }

    Tensor<T> hier_forward(const Tensor<T>& images, MemoryBank<T>* bank, bool commit) const {
        const auto& cfg = hier_cfg_;
        Tensor<T> x = prepare_input(images, cfg.image, cfg.pad_input, cfg.pad_fill);
        Tensor<T> h = apply_ln(add(matmul(patchify(x, cfg.patch), hier_.embed_w), hier_.embed_b), hier_.embed_ln);
        int64_t g = cfg.image / cfg.patch;
        const int64_t B = h.dim(0);
        Tensor<T> map = reshape(h, {B, g, g, cfg.stage_dims[0]});
        for (size_t s = 0; s < cfg.stages(); ++s) {
            const int64_t weff = std::min<int64_t>(cfg.window, g);
            for (int64_t i = 0; i < cfg.stage_depths[s]; ++i) {
                const bool shifted = cfg.shift && (i % 2 == 1) && weff < g;
                map = window_block_forward(map, hier_.stages[s][static_cast<size_t>(i)], cfg.stage_heads[s], weff,
                                           shifted);
            }
            if (s + 1 < cfg.stages()) {
                map = patch_merge(map, hier_.merges[s]);
                g /= 2;
            }
        }
        Tensor<T> flat_tokens = apply_ln(reshape(map, {B, g * g, cfg.stage_dims.back()}), hier_.final_ln);
        if (hier_.hfw) {
            FastMemory<T> m_in = bank ? bank->mods[0] : FastMemory<T>{};
            HfwResult<T> r = hfw_forward(flat_tokens, *hier_.hfw, *hfw_cfg_, m_in);
            if (bank && commit) bank->mods[0] = r.mem;
            return gap(add(flat_tokens, r.out));
        }
        return gap(flat_tokens);
    }

    ModelKind kind_;
    ParamStore<T> store_;
    FlatBackboneConfig flat_cfg_;
    HierBackboneConfig hier_cfg_;
    std::optional<HfwConfig> hfw_cfg_;
    FlatParts<T> flat_;
    HierParts<T> hier_;
};

// ---- presets ----

struct ModelPreset {
    std::string name;
    ModelKind kind;
    FlatBackboneConfig flat;
    HierBackboneConfig hier;
};

inline ModelPreset model_preset(const std::string& name) {
    ModelPreset p;
    p.name = name;
    auto hebbian = [](const std::string& n) {
        return n.size() > 8 && n.substr(n.size() - 8) == "_hebbian";
    };
    const std::string base = hebbian(name) ? name.substr(0, name.size() - 8) : name;
    if (base == "vit_s16" || base == "deit_s16") {
        p.kind = ModelKind::Flat;
        p.flat.depth = 12;
        p.flat.d = 384;
        p.flat.heads = 6;
        p.flat.mlp_ratio = 4;
        p.flat.patch = 16;
        p.flat.image = 96;  // 84 inputs pad up to 96
        if (hebbian(name)) p.flat.hfw = HfwConfig{};
    } else if (base == "swin_tiny") {
        p.kind = ModelKind::Hier;
        p.hier = HierBackboneConfig{};  // [2,2,6,2] / [96,192,384,768], window 6, patch 4, image 96
        if (hebbian(name)) p.hier.hfw = HfwConfig{};
    } else if (base == "desk_flat") {
        p.kind = ModelKind::Flat;
        p.flat.depth = 2;
        p.flat.d = 64;
        p.flat.heads = 4;
        p.flat.mlp_ratio = 4;
        p.flat.patch = 8;
        p.flat.image = 32;  // 28 inputs pad up to 32
        if (hebbian(name)) p.flat.hfw = HfwConfig{};
    } else if (base == "desk_hier") {
        p.kind = ModelKind::Hier;
        p.hier.stage_depths = {1, 1};
        p.hier.stage_dims = {32, 64};
        p.hier.stage_heads = {2, 4};
        p.hier.window = 4;
        p.hier.patch = 4;
        p.hier.image = 32;
        if (hebbian(name)) p.hier.hfw = HfwConfig{};
    } else {
        throw ConfigError("unknown model preset '" + name + "'");
    }
    return p;
}

inline std::vector<std::string> model_preset_names() {
    return {"vit_s16",         "deit_s16",         "swin_tiny",         "desk_flat",         "desk_hier",
            "vit_s16_hebbian", "deit_s16_hebbian", "swin_tiny_hebbian", "desk_flat_hebbian", "desk_hier_hebbian"};
}

template <typename T>
Model<T> model_from_preset(const ModelPreset& p, uint64_t seed) {
    return p.kind == ModelKind::Flat ? Model<T>::flat(p.flat, seed) : Model<T>::hier(p.hier, seed);
}

}  // namespace hfw
