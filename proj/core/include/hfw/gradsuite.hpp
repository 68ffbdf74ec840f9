#pragma once

// Reusable float64 gradient verification: one check per differentiable
// kernel, plus module- and episode-level compositions. Backs the gradcheck
// command and the acceptance suite.

#include <string>
#include <vector>

#include "hfw/fewshot.hpp"
#include "hfw/gradcheck.hpp"
#include "hfw/hebbian.hpp"

namespace hfw {

struct OpCheck {
    std::string op;
    double max_rel_err = 0.0;
    bool passed = false;
};

namespace gradsuite {

inline TensorD rand_leaf(Shape shape, Rng& rng, const std::string& name, double scale = 1.0) {
    TensorD t = TensorD::normal(std::move(shape), 0.0, scale, rng, true);
    t.set_name(name);
    return t;
}

// keep clamp inputs away from the kink at +/-delta
inline TensorD rand_leaf_clear_of(Shape shape, Rng& rng, const std::string& name, double delta,
                                  double margin = 1e-3) {
    TensorD t = rand_leaf(std::move(shape), rng, name);
    for (double& v : t.values()) {
        if (std::abs(std::abs(v) - delta) < margin) v += (v >= 0 ? 2 : -2) * margin;
    }
    return t;
}

inline OpCheck check(const std::string& op, const std::function<TensorD()>& f, std::vector<TensorD> leaves,
                     double tol) {
    GradCheckReport r = grad_check(f, std::move(leaves), tol);
    return {op, r.max_rel_err, r.passed};
}

inline std::vector<OpCheck> kernel_checks(int n_seeds, double tol) {
    std::vector<OpCheck> out;
    auto worst = [&](OpCheck& acc, const OpCheck& c) {
        if (c.max_rel_err > acc.max_rel_err) acc.max_rel_err = c.max_rel_err;
        acc.passed = acc.passed && c.passed;
    };
    auto run = [&](const std::string& op, auto&& make) {
        OpCheck acc{op, 0.0, true};
        for (int s = 0; s < n_seeds; ++s) {
            Rng rng(derive_seed(900 + static_cast<uint64_t>(s), op));
            worst(acc, make(rng));
        }
        out.push_back(acc);
    };

    run("matmul", [&](Rng& rng) {
        TensorD a = rand_leaf({2, 3, 4}, rng, "a");
        TensorD b = rand_leaf({4, 5}, rng, "b");
        return check("matmul", [&] { return sum(matmul(a, b)); }, {a, b}, tol);
    });
    run("add", [&](Rng& rng) {
        TensorD a = rand_leaf({3, 4}, rng, "a");
        TensorD b = rand_leaf({4}, rng, "b");
        return check("add", [&] { return sum(hadamard(add(a, b), add(a, b))); }, {a, b}, tol);
    });
    run("hadamard", [&](Rng& rng) {
        TensorD a = rand_leaf({2, 3}, rng, "a");
        TensorD b = rand_leaf({3}, rng, "b");
        return check("hadamard", [&] { return sum(hadamard(a, b)); }, {a, b}, tol);
    });
    run("scale", [&](Rng& rng) {
        TensorD a = rand_leaf({5}, rng, "a");
        return check("scale", [&] { return sum(scale(a, 1.7)); }, {a}, tol);
    });
    run("sigmoid", [&](Rng& rng) {
        TensorD a = rand_leaf({6}, rng, "a");
        return check("sigmoid", [&] { return sum(sigmoid(a)); }, {a}, tol);
    });
    run("gelu", [&](Rng& rng) {
        TensorD a = rand_leaf({6}, rng, "a");
        return check("gelu", [&] { return sum(gelu(a)); }, {a}, tol);
    });
    run("clamp", [&](Rng& rng) {
        TensorD a = rand_leaf_clear_of({8}, rng, "a", 1.0);
        TensorD w = rand_leaf({8}, rng, "w").set_requires_grad(false);
        return check("clamp", [&] { return sum(hadamard(clamp(a, -1.0, 1.0), w)); }, {a}, tol);
    });
    run("softmax", [&](Rng& rng) {
        TensorD a = rand_leaf({3, 5}, rng, "a");
        TensorD w = rand_leaf({3, 5}, rng, "w").set_requires_grad(false);
        return check("softmax", [&] { return sum(hadamard(softmax_lastdim(a), w)); }, {a}, tol);
    });
    run("layer_norm", [&](Rng& rng) {
        TensorD x = rand_leaf({3, 6}, rng, "x");
        TensorD g = rand_leaf({6}, rng, "gamma");
        TensorD b = rand_leaf({6}, rng, "beta");
        TensorD w = rand_leaf({3, 6}, rng, "w").set_requires_grad(false);
        return check("layer_norm", [&] { return sum(hadamard(layer_norm(x, g, b, 1e-5), w)); }, {x, g, b}, tol);
    });
    run("frobenius_normalize", [&](Rng& rng) {
        TensorD m = rand_leaf({2, 3, 3}, rng, "m");
        TensorD w = rand_leaf({2, 3, 3}, rng, "w").set_requires_grad(false);
        return check("frobenius_normalize", [&] { return sum(hadamard(frobenius_normalize(m, 1e-6), w)); }, {m},
                     tol);
    });
    run("patchify", [&](Rng& rng) {
        TensorD x = rand_leaf({1, 2, 4, 4}, rng, "x");
        TensorD w = rand_leaf({1, 4, 8}, rng, "w").set_requires_grad(false);
        return check("patchify", [&] { return sum(hadamard(patchify(x, 2), w)); }, {x}, tol);
    });
    run("gap", [&](Rng& rng) {
        TensorD x = rand_leaf({2, 3, 4}, rng, "x");
        TensorD w = rand_leaf({2, 4}, rng, "w").set_requires_grad(false);
        return check("gap", [&] { return sum(hadamard(gap(x), w)); }, {x}, tol);
    });
    run("cross_entropy", [&](Rng& rng) {
        TensorD logits = rand_leaf({4, 3}, rng, "logits");
        const std::vector<int64_t> labels{0, 2, 1, 2};
        return check("cross_entropy", [&] { return cross_entropy(logits, labels); }, {logits}, tol);
    });
    run("unpatchify", [&](Rng& rng) {
        TensorD t = rand_leaf({1, 4, 8}, rng, "t");
        TensorD w = rand_leaf({1, 2, 4, 4}, rng, "w").set_requires_grad(false);
        return check("unpatchify", [&] { return sum(hadamard(unpatchify(t, 2, 4, 4, 2), w)); }, {t}, tol);
    });
    run("sum_lastdim", [&](Rng& rng) {
        TensorD a = rand_leaf({3, 5}, rng, "a");
        TensorD w = rand_leaf({3, 1}, rng, "w").set_requires_grad(false);
        return check("sum_lastdim", [&] { return sum(hadamard(sum_lastdim(a), w)); }, {a}, tol);
    });
    run("concat_axis1", [&](Rng& rng) {
        TensorD a = rand_leaf({2, 2, 3}, rng, "a");
        TensorD b = rand_leaf({2, 1, 3}, rng, "b");
        TensorD w = rand_leaf({2, 3, 3}, rng, "w").set_requires_grad(false);
        return check("concat_axis1", [&] { return sum(hadamard(concat_axis1(a, b), w)); }, {a, b}, tol);
    });
    run("concat_axis0", [&](Rng& rng) {
        TensorD a = rand_leaf({1, 3}, rng, "a");
        TensorD b = rand_leaf({2, 3}, rng, "b");
        TensorD w = rand_leaf({3, 3}, rng, "w").set_requires_grad(false);
        return check("concat_axis0", [&] { return sum(hadamard(concat_axis0<double>({a, b}), w)); }, {a, b}, tol);
    });
    run("slice_axis0", [&](Rng& rng) {
        TensorD a = rand_leaf({4, 3}, rng, "a");
        TensorD w = rand_leaf({2, 3}, rng, "w").set_requires_grad(false);
        return check("slice_axis0", [&] { return sum(hadamard(slice_axis0(a, 1, 2), w)); }, {a}, tol);
    });
    run("roll2d", [&](Rng& rng) {
        TensorD x = rand_leaf({1, 4, 4, 2}, rng, "x");
        TensorD w = rand_leaf({1, 4, 4, 2}, rng, "w").set_requires_grad(false);
        return check("roll2d", [&] { return sum(hadamard(roll2d(x, 1, -2), w)); }, {x}, tol);
    });
    run("pad_images", [&](Rng& rng) {
        TensorD x = rand_leaf({1, 2, 3, 3}, rng, "x");
        TensorD w = rand_leaf({1, 2, 5, 5}, rng, "w").set_requires_grad(false);
        return check("pad_images",
                     [&] { return sum(hadamard(pad_images(x, 1, 1, 1, 1, std::vector<double>{0.3, -0.2}), w)); },
                     {x}, tol);
    });
    return out;
}

inline HfwConfig tiny_hfw_config() {
    HfwConfig c;
    c.d = 8;
    c.heads = 2;
    c.delta = 3.0;  // co-activations stay clear of the clamp kink
    return c;
}

// project -> associate -> write -> retrieve -> gate, end to end, with a
// threaded nonzero memory so the decay path carries gradient too. Checked at
// eta ~ 0.5: a sizeable write keeps the normalization well-conditioned for
// the finite-difference probe.
inline OpCheck hfw_composition_check(uint64_t seed, double tol) {
    HfwConfig cfg = tiny_hfw_config();
    cfg.memory_scope = MemoryScope::PerEpisode;
    ParamStore<double> store(seed);
    HfwParams<double> p = HfwParams<double>::init(store, "hfw", cfg);
    p.eta_logit.values()[0] = 0.0;
    Rng rng(derive_seed(seed, "hfw_comp"));
    TensorD x = rand_leaf({2, 3, cfg.d}, rng, "x");
    FastMemory<double> mem{
        frobenius_normalize(TensorD::normal({2, cfg.heads, cfg.head_dim(), cfg.head_dim()}, 0, 1, rng), 1e-6)
            .detach()};
    std::vector<TensorD> leaves{x, p.w_k, p.w_v, p.w_q, p.w_g, p.eta_logit, p.lambda_logit, p.gamma, p.beta};
    TensorD w = rand_leaf({2, 3, cfg.d}, rng, "w").set_requires_grad(false);
    return check("hfw_forward", [&] { return sum(hadamard(hfw_forward(x, p, cfg, mem).out, w)); }, leaves, tol);
}

inline OpCheck block_composition_check(uint64_t seed, double tol) {
    const int64_t d = 8, heads = 2;
    FlatBackboneConfig bc;
    bc.depth = 1;
    bc.d = d;
    bc.heads = heads;
    bc.mlp_ratio = 2;
    bc.patch = 4;
    bc.image = 8;
    bc.channels = 1;
    Model<double> model = Model<double>::flat(bc, seed);
    Rng rng(derive_seed(seed, "block_comp"));
    TensorD x = rand_leaf({2, 3, d}, rng, "x");
    TensorD w = rand_leaf({2, 3, d}, rng, "w").set_requires_grad(false);
    std::vector<TensorD> leaves{x};
    for (auto& [name, t] : model.params().items())
        if (name.rfind("block0.", 0) == 0) leaves.push_back(t);
    const auto& bp = model.flat_parts().blocks[0];
    return check("block_forward", [&] { return sum(hadamard(block_forward(x, bp, heads), w)); }, leaves, tol);
}

// episode embedding -> prototypes -> nearest-prototype loss on a toy
// 2-way 1-shot episode, through every parameter of a micro model
inline OpCheck episode_composition_check(uint64_t seed, double tol, bool hebbian = true,
                                         MemoryScope scope = MemoryScope::PerForward) {
    FlatBackboneConfig bc;
    bc.depth = 1;
    bc.d = 8;
    bc.heads = 2;
    bc.mlp_ratio = 2;
    bc.patch = 4;
    bc.image = 8;
    bc.channels = 1;
    if (hebbian) {
        HfwConfig hc = tiny_hfw_config();
        hc.memory_scope = scope;
        bc.hfw = hc;
    }
    Model<double> model = Model<double>::flat(bc, seed);
    Rng rng(derive_seed(seed, "episode_comp"));
    TensorD support = TensorD::normal({2, 1, 8, 8}, 0.0, 1.0, rng);
    TensorD query = TensorD::normal({4, 1, 8, 8}, 0.0, 1.0, rng);
    const std::vector<int64_t> s_labels{0, 1}, q_labels{0, 0, 1, 1};
    std::vector<TensorD> leaves;
    for (auto& [name, t] : model.params().items()) leaves.push_back(t);
    auto f = [&] {
        auto [s_emb, q_emb] = model.embed_episode(support, query);
        TensorD protos = prototypes(s_emb, s_labels, 2, 1);
        auto cls = classify_queries(q_emb, protos);
        return episode_loss(cls.logits, q_labels);
    };
    return check(hebbian ? "episode_protonet_hebbian" : "episode_protonet", f, leaves, tol);
}

// window attention, patch merging, final-stage module, pooling, and the
// episode loss through every parameter of a micro hierarchical model
inline OpCheck hier_episode_composition_check(uint64_t seed, double tol, bool hebbian = true) {
    HierBackboneConfig bc;
    bc.stage_depths = {1, 1};
    bc.stage_dims = {4, 8};
    bc.stage_heads = {1, 2};
    bc.window = 2;
    bc.patch = 4;
    bc.image = 16;
    bc.channels = 1;
    bc.mlp_ratio = 2;
    if (hebbian) {
        HfwConfig hc = tiny_hfw_config();
        hc.d = 8;
        hc.heads = 2;
        bc.hfw = hc;
    }
    Model<double> model = Model<double>::hier(bc, seed);
    Rng rng(derive_seed(seed, "hier_episode_comp"));
    TensorD support = TensorD::normal({2, 1, 16, 16}, 0.0, 1.0, rng);
    TensorD query = TensorD::normal({4, 1, 16, 16}, 0.0, 1.0, rng);
    const std::vector<int64_t> s_labels{0, 1}, q_labels{0, 0, 1, 1};
    std::vector<TensorD> leaves;
    for (auto& [name, t] : model.params().items()) leaves.push_back(t);
    auto f = [&] {
        auto [s_emb, q_emb] = model.embed_episode(support, query);
        TensorD protos = prototypes(s_emb, s_labels, 2, 1);
        auto cls = classify_queries(q_emb, protos);
        return episode_loss(cls.logits, q_labels);
    };
    return check(hebbian ? "hier_episode_protonet_hebbian" : "hier_episode_protonet", f, leaves, tol);
}

}  // namespace gradsuite
}  // namespace hfw
