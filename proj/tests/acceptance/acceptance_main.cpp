// Acceptance suite: desk-verifiable quantitative checks over the whole
// artifact. Each criterion prints one [PASS]/[FAIL] line; the process exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "hfw/checkpoint.hpp"
#include "hfw/commands.hpp"
#include "hfw/config.hpp"
#include "hfw/gradsuite.hpp"
#include "hfw/train.hpp"

#include "../support/hfw_scalar_oracle.hpp"

using namespace hfw;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define REQUIRE_THAT(cond, msg)                                                          \
    do {                                                                                 \
        if (!(cond)) throw CheckFailure(std::string(msg) + " [" #cond "]");              \
    } while (0)

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::vector<double> vals(const TensorD& t) { return {t.values().begin(), t.values().end()}; }

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

// ---- C1: vectorized module vs the scalar-loop reference ----
void c1_hfw_oracle(std::ostream& out) {
    const double t0 = now_seconds();
    double worst = 0;
    Rng dims_rng(4242);
    for (int trial = 0; trial < 60; ++trial) {
        const int64_t H = 1 + static_cast<int64_t>(dims_rng.bounded(3));
        const int64_t dh = 1 + static_cast<int64_t>(dims_rng.bounded(2));
        const int64_t d = H * dh;
        const int64_t B = 1 + static_cast<int64_t>(dims_rng.bounded(3));
        const int64_t N = 1 + static_cast<int64_t>(dims_rng.bounded(5));
        HfwConfig cfg;
        cfg.d = d;
        cfg.heads = H;
        ParamStore<double> store(5000 + static_cast<uint64_t>(trial));
        HfwParams<double> p = HfwParams<double>::init(store, "hfw", cfg);
        Rng rng(6000 + static_cast<uint64_t>(trial));
        TensorD x = TensorD::normal({B, N, d}, 0, 1, rng);
        auto res = hfw_forward(x, p, cfg);
        hfw_oracle::Dims dims{B, N, d, H, cfg.eta_max, cfg.delta, cfg.eps};
        auto ref = hfw_oracle::hfw_scalar(vals(x), vals(p.w_k), vals(p.w_v), vals(p.w_q), vals(p.w_g),
                                          p.eta_logit.item(), p.lambda_logit.item(), vals(p.gamma), vals(p.beta),
                                          {}, dims);
        worst = std::max(worst, max_abs_diff<double>(res.out.values(), ref.out));
        worst = std::max(worst, max_abs_diff<double>(res.mem.m.values(), ref.mem));
    }
    const double dt = now_seconds() - t0;
    out << "60 instances, max abs diff " << worst << ", " << dt << " s";
    REQUIRE_THAT(worst <= 1e-10, "oracle disagreement above 1e-10");
    REQUIRE_THAT(dt < 10.0, "oracle sweep exceeded 10 s");
}

// ---- C2: gradient suite over every kernel plus the episode composition ----
void c2_gradients(std::ostream& out) {
    const double t0 = now_seconds();
    constexpr double tol = 1e-4;
    double worst = 0;
    for (const auto& c : gradsuite::kernel_checks(20, tol)) {
        worst = std::max(worst, c.max_rel_err);
        REQUIRE_THAT(c.passed, "kernel gradient check failed: " + c.op);
    }
    for (int seed = 0; seed < 20; ++seed) {
        auto c = gradsuite::episode_composition_check(9000 + static_cast<uint64_t>(seed), tol, true);
        worst = std::max(worst, c.max_rel_err);
        REQUIRE_THAT(c.passed, "episode composition gradient check failed");
    }
    // memory threaded across the episode's support items
    auto ec = gradsuite::episode_composition_check(9100, tol, true, MemoryScope::PerEpisode);
    worst = std::max(worst, ec.max_rel_err);
    REQUIRE_THAT(ec.passed, "per-episode composition gradient check failed");
    // hierarchical family: window attention, merging, final-stage module
    auto hec = gradsuite::hier_episode_composition_check(9200, tol, true);
    worst = std::max(worst, hec.max_rel_err);
    REQUIRE_THAT(hec.passed, "hierarchical composition gradient check failed");
    auto hc = gradsuite::hfw_composition_check(77, tol);
    worst = std::max(worst, hc.max_rel_err);
    REQUIRE_THAT(hc.passed, "module composition gradient check failed");
    const double dt = now_seconds() - t0;
    out << "20 seeds per kernel + 20 composition seeds, max rel err " << worst << ", " << dt << " s";
    REQUIRE_THAT(dt < 120.0, "gradient suite exceeded 2 min");
}

// ---- C3: memory invariants ----
void c3_memory_invariants(std::ostream& out) {
    HfwConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    Rng rng(31);
    FastMemory<double> mem = FastMemory<double>::zeros(2, cfg);
    ParamStore<double> store(32);
    HfwParams<double> p = HfwParams<double>::init(store, "hfw", cfg);
    for (int step = 0; step < 1000; ++step) {
        TensorD x = TensorD::normal({2, 3, 8}, 0, std::pow(10.0, rng.uniform(-1.5, 1.5)), rng);
        auto kvq = project_kvq(x, p, cfg);
        TensorD a = associate(kvq.k, kvq.v, cfg);
        for (double v : a.values())
            REQUIRE_THAT(v >= -cfg.delta && v <= cfg.delta, "co-activation left [-delta, delta]");
        TensorD eta = TensorD::scalar(rng.uniform01());
        TensorD lambda = TensorD::scalar(rng.uniform01());
        mem = memory_write(mem, a, eta, lambda, cfg);
        for (double n : frobenius_norms(mem.m)) REQUIRE_THAT(n < 1.0, "post-write Frobenius norm reached 1");
    }
    for (double logit : {-20.0, -7.3, 0.0, 7.3, 20.0}) {
        p.eta_logit.values()[0] = logit;
        p.lambda_logit.values()[0] = logit;
        auto [e, l] = effective_plasticity(p, cfg);
        REQUIRE_THAT(e.item() > 0.0 && e.item() < cfg.eta_max, "eta left (0, eta_max)");
        REQUIRE_THAT(l.item() > 0.0 && l.item() < 1.0, "lambda left (0, 1)");
    }
    p.eta_logit.values()[0] = -3.0;
    p.lambda_logit.values()[0] = 2.0;

    // token-permutation equivariance
    Rng prng(33);
    TensorD x = TensorD::normal({2, 5, 8}, 0, 1, prng);
    auto base = hfw_forward(x, p, cfg);
    std::vector<int64_t> perm{3, 0, 4, 1, 2};
    TensorD xp = TensorD::zeros({2, 5, 8});
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t n = 0; n < 5; ++n)
            for (int64_t j = 0; j < 8; ++j)
                xp.values()[static_cast<size_t>((b * 5 + perm[static_cast<size_t>(n)]) * 8 + j)] =
                    x.values()[static_cast<size_t>((b * 5 + n) * 8 + j)];
    auto permuted = hfw_forward(xp, p, cfg);
    double worst = 0;
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t n = 0; n < 5; ++n)
            for (int64_t j = 0; j < 8; ++j)
                worst = std::max(
                    worst,
                    std::abs(permuted.out.values()[static_cast<size_t>(
                                 (b * 5 + perm[static_cast<size_t>(n)]) * 8 + j)] -
                             base.out.values()[static_cast<size_t>((b * 5 + n) * 8 + j)]));
    out << "1000 writes bounded, plasticity ranges hold, permutation equivariance " << worst;
    REQUIRE_THAT(worst <= 1e-10, "permutation equivariance above 1e-10");
}

// ---- C4: memory lifetime ----
void c4_lifetime(std::ostream& out) {
    const double lt = memory_lifetime(0.880);
    out << "memory_lifetime(0.880) = " << lt;
    REQUIRE_THAT(std::abs(lt - 8.33) <= 0.01, "lifetime outside 8.33 +/- 0.01");
}

// ---- C5: checkpoint contract ----
void c5_checkpoint(std::ostream& out) {
    const fs::path dir = fs::temp_directory_path() / "hfw_acceptance_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    FlatBackboneConfig cfg;
    cfg.depth = 2;
    cfg.d = 32;
    cfg.heads = 4;
    cfg.patch = 8;
    cfg.image = 16;
    cfg.hfw = HfwConfig{};
    Model<float> model = Model<float>::flat(cfg, 77);

    Rng rng(78);
    TensorF imgs = TensorF::normal({3, 3, 16, 16}, 0, 1, rng);
    NoGradGuard ng;
    TensorF before = model.forward(imgs);

    const std::string p0 = (dir / "a.hfwckpt").string();
    save_model(p0, model, {});
    Model<float> loaded = load_model<float>(p0);
    TensorF after = loaded.forward(imgs);
    for (int64_t i = 0; i < before.numel(); ++i)
        REQUIRE_THAT(before.values()[static_cast<size_t>(i)] == after.values()[static_cast<size_t>(i)],
                     "round-trip forward not bit-identical");

    // different episode history, identical parameters -> identical tensor bytes
    for (int e = 0; e < 7; ++e) model.forward(TensorF::normal({4, 3, 16, 16}, 0, 1, rng));
    const std::string p1 = (dir / "b.hfwckpt").string();
    CheckpointMeta other_meta;
    other_meta.epoch = 9;
    save_model(p1, model, other_meta);
    REQUIRE_THAT(checkpoint_tensor_section(p0) == checkpoint_tensor_section(p1),
                 "tensor section depends on episode history");

    // corruption is rejected
    {
        std::fstream f(p0, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(0, std::ios::end);
        const std::streamoff n = f.tellg();
        f.seekg(n - 9);
        char b;
        f.read(&b, 1);
        b = static_cast<char>(b ^ 0x40);
        f.seekp(n - 9);
        f.write(&b, 1);
    }
    bool rejected = false;
    try {
        read_checkpoint_file(p0);
    } catch (const FormatError&) {
        rejected = true;
    }
    REQUIRE_THAT(rejected, "corrupted checkpoint accepted");
    fs::remove_all(dir);
    out << "round trip bit-identical, history-independent, corruption rejected";
}

// ---- C6: class split counts ----
void c6_splits(std::ostream& out) {
    std::vector<int64_t> ids(1623);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int64_t>(i);
    ClassSplit s = split_classes(ids, {}, 42);
    out << "1623 -> " << s.train.size() << "/" << s.val.size() << "/" << s.test.size();
    REQUIRE_THAT(s.train.size() == 1298 && s.val.size() == 163 && s.test.size() == 162,
                 "split sizes differ from (1298, 163, 162)");
    for (uint64_t seed = 0; seed < 100; ++seed) {
        ClassSplit t = split_classes(ids, {}, seed);
        std::vector<bool> seen(1623, false);
        for (const auto* part : {&t.train, &t.val, &t.test})
            for (int64_t id : *part) {
                REQUIRE_THAT(!seen[static_cast<size_t>(id)], "split partitions overlap");
                seen[static_cast<size_t>(id)] = true;
            }
        for (bool b : seen) REQUIRE_THAT(b, "split partitions miss a class");
    }
}

// ---- C7: parameter counts ----
void c7_param_counts(std::ostream& out) {
    Model<float> vit = model_from_preset<float>(model_preset("vit_s16"), 42);
    Model<float> swin = model_from_preset<float>(model_preset("swin_tiny"), 42);
    const double vit_err = std::abs(double(vit.count_parameters()) - 21.7e6) / 21.7e6;
    const double swin_err = std::abs(double(swin.count_parameters()) - 27.5e6) / 27.5e6;
    out << "vit_s16 " << vit.count_parameters() << " (" << vit_err * 100 << "% off 21.7M), swin_tiny "
        << swin.count_parameters() << " (" << swin_err * 100 << "% off 27.5M)";
    REQUIRE_THAT(vit_err < 0.05, "vit_s16 parameter count off by 5%+");
    REQUIRE_THAT(swin_err < 0.05, "swin_tiny parameter count off by 5%+");

    // desk presets against the closed-form audit
    ModelPreset desk = model_preset("desk_flat_hebbian");
    Model<float> dm = model_from_preset<float>(desk, 42);
    const auto& c = desk.flat;
    const int64_t pd = c.channels * c.patch * c.patch;
    int64_t want = pd * c.d + c.d + c.tokens() * c.d + c.depth * (12 * c.d * c.d + 13 * c.d) + 2 * c.d +
                   c.depth * (4 * c.d * c.d + 2 * c.d + 2);
    REQUIRE_THAT(dm.count_parameters() == want, "desk_flat_hebbian count differs from the closed form");

    ModelPreset dh = model_preset("desk_hier");
    Model<float> hm = model_from_preset<float>(dh, 42);
    const auto& h = dh.hier;
    int64_t hw = h.channels * h.patch * h.patch * h.stage_dims[0] + h.stage_dims[0] + 2 * h.stage_dims[0];
    for (size_t s = 0; s < h.stages(); ++s) {
        hw += h.stage_depths[s] * (12 * h.stage_dims[s] * h.stage_dims[s] + 13 * h.stage_dims[s]);
        if (s + 1 < h.stages()) hw += 8 * h.stage_dims[s] + 8 * h.stage_dims[s] * h.stage_dims[s];
    }
    hw += 2 * h.stage_dims.back();
    REQUIRE_THAT(hm.count_parameters() == hw, "desk_hier count differs from the closed form");
}

// ---- C8: smoke training ----
struct SmokeResult {
    double best_val;
    std::vector<double> etas;
};

SmokeResult smoke_train(bool hebbian, std::ostream& log) {
    CharacterDataset ds = synth_glyphs(40, 20, 28, 7);
    ClassSplit split = split_classes(ds.class_ids(), {0.5, 0.25, 0.25}, 42);
    EpisodeConfig ecfg;
    ecfg.n_way = 5;
    ecfg.k_shot = 1;
    ecfg.n_query = 15;
    ecfg.train_episodes = 50;
    ecfg.val_episodes = 20;
    PreprocessConfig pcfg;
    pcfg.target = 28;
    pcfg.crop_pad = 2;
    pcfg.hflip_p = 0.0;
    pcfg.rotation_deg = 0.0;
    OptimConfig ocfg;
    ScheduleConfig scfg;
    scfg.warmup_epochs = 2;
    scfg.total_epochs = 10;
    FlatBackboneConfig mc;
    mc.depth = 2;
    mc.d = 64;
    mc.heads = 4;
    mc.patch = 8;
    mc.image = 32;
    mc.pad_fill = pcfg.normalized_background();
    if (hebbian) mc.hfw = HfwConfig{};
    Model<float> model = Model<float>::flat(mc, 42);
    TrainResult r = train_loop(model, ds, split, ecfg, pcfg, ocfg, scfg, 15, 42,
                               hebbian ? "smoke_hebbian" : "smoke_baseline", {});
    log << (hebbian ? "hebbian" : "baseline") << " best val " << r.best_val_acc << "; ";
    return {r.best_val_acc, model.eta_values()};
}

void c8_smoke_training(std::ostream& out) {
    const double t0 = now_seconds();
    SmokeResult base = smoke_train(false, out);
    SmokeResult heb = smoke_train(true, out);
    const double dt = now_seconds() - t0;
    out << dt << " s";
    REQUIRE_THAT(base.best_val >= 0.90, "baseline below 90% validation accuracy");
    REQUIRE_THAT(heb.best_val >= 0.90, "hebbian variant below 90% validation accuracy");
    REQUIRE_THAT(std::abs(base.best_val - heb.best_val) <= 0.05, "variants differ by over 5 points");
    const double eta_init = 1.0 / (1.0 + std::exp(3.0));
    bool moved = false;
    for (double e : heb.etas) moved = moved || std::abs(e - eta_init) > 1e-6;
    REQUIRE_THAT(moved, "learned eta never left its initialization");
    REQUIRE_THAT(dt <= 900.0, "smoke training exceeded 15 minutes");
}

// ---- C9: gate-ablation equivalence ----
void c9_gate_ablation(std::ostream& out) {
    Rng rng(91);
    double worst = 0;
    {
        FlatBackboneConfig base;
        base.depth = 2;
        base.d = 32;
        base.heads = 4;
        base.patch = 8;
        base.image = 16;
        FlatBackboneConfig heb = base;
        HfwConfig hc;
        hc.gate_scale = 0.0;
        heb.hfw = hc;
        Model<float> a = Model<float>::flat(base, 42);
        Model<float> b = Model<float>::flat(heb, 42);
        TensorF imgs = TensorF::normal({4, 3, 16, 16}, 0, 1, rng);
        NoGradGuard ng;
        worst = std::max(worst, max_abs_diff<float>(a.forward(imgs).values(), b.forward(imgs).values()));
    }
    {
        HierBackboneConfig base;
        base.stage_depths = {1, 1};
        base.stage_dims = {16, 32};
        base.stage_heads = {2, 4};
        base.window = 4;
        base.patch = 4;
        base.image = 32;
        HierBackboneConfig heb = base;
        HfwConfig hc;
        hc.gate_scale = 0.0;
        heb.hfw = hc;
        Model<float> a = Model<float>::hier(base, 42);
        Model<float> b = Model<float>::hier(heb, 42);
        TensorF imgs = TensorF::normal({4, 3, 32, 32}, 0, 1, rng);
        NoGradGuard ng;
        worst = std::max(worst, max_abs_diff<float>(a.forward(imgs).values(), b.forward(imgs).values()));
    }
    out << "both families, max abs diff " << worst;
    REQUIRE_THAT(worst <= 1e-6, "hard-zero gate does not match the disabled module");
}

// ---- C10: protocol conformance ----
void c10_protocol(std::ostream& out) {
    const fs::path dir = fs::temp_directory_path() / "hfw_acceptance_protocol";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // one stub epoch at the full episode protocol: 600 train episodes of
    // (support 5K, query 75), then the four-row k-shot ablation
    CharacterDataset ds = synth_glyphs(40, 25, 16, 7);
    ClassSplit split = split_classes(ds.class_ids(), {0.5, 0.25, 0.25}, 42);
    EpisodeConfig ecfg;  // 5-way, 15 queries, 600/200/400
    ecfg.k_shot = 1;
    PreprocessConfig pcfg;
    pcfg.target = 16;
    pcfg.crop_pad = 1;
    pcfg.hflip_p = 0.0;
    pcfg.rotation_deg = 0.0;
    OptimConfig ocfg;
    ScheduleConfig scfg;
    scfg.warmup_epochs = 0;
    scfg.total_epochs = 1;
    FlatBackboneConfig mc;
    mc.depth = 1;
    mc.d = 16;
    mc.heads = 2;
    mc.mlp_ratio = 2;
    mc.patch = 8;
    mc.image = 16;
    mc.hfw = HfwConfig{};
    Model<float> model = Model<float>::flat(mc, 42);

    int64_t episodes_seen = 0;
    TrainCallbacks<float> cb;
    cb.on_train_episode = [&](const Episode& ep) {
        ++episodes_seen;
        REQUIRE_THAT(static_cast<int64_t>(ep.support.size()) == 5 * ecfg.k_shot, "support is not 5xK");
        REQUIRE_THAT(ep.query.size() == 75, "query set is not 75");
        REQUIRE_THAT(ep.class_map.size() == 5, "episode is not 5-way");
    };
    TrainResult r = train_loop(model, ds, split, ecfg, pcfg, ocfg, scfg, 15, 42, "protocol", cb);
    REQUIRE_THAT(episodes_seen == 600, "epoch did not run 600 train episodes");
    REQUIRE_THAT(r.history.at(1).episodes == 200, "validation did not run 200 episodes");

    const std::string ckpt = (dir / "best.hfwckpt").string();
    CheckpointMeta meta;
    meta.epoch = 0;
    save_model(ckpt, model, meta);

    // ablation writes one row per K in {1, 3, 5, 10}
    std::ostringstream cfg_json;
    cfg_json << R"({"schema_version": 1, "seed": 42, "out_dir": ")" << (dir / "run").string() << R"(",
      "model": {"preset": "desk_flat_hebbian", "overrides": {"depth": 1, "d": 16, "heads": 2, "mlp_ratio": 2, "patch": 8, "image": 16}},
      "episodes": {"n_way": 5, "k_shot": 1, "n_query": 15, "train": 600, "val": 200, "test": 400},
      "split": {"train": 0.5, "val": 0.25, "test": 0.25},
      "data": {"source": "synth", "root": ")" << dir.string() << R"(", "classes": 40, "per_class": 25, "extent": 16, "synth_seed": 7},
      "preprocess": {"target": 16, "crop_pad": 1, "hflip_p": 0.0, "rotation_deg": 0.0},
      "schedule": {"warmup_epochs": 0, "total_epochs": 1}})";
    const fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << cfg_json.str();
    CommandOptions opt;
    opt.config_path = cfg_path.string();
    opt.episodes = 5;  // rows, not statistics, are under test here
    std::ostringstream log;
    const int code = cmd_ablate(ckpt, {1, 3, 5, 10}, opt, log);
    REQUIRE_THAT(code == 0, "ablation command failed");
    std::ifstream csv(dir / "run" / "ablation.csv");
    std::string line;
    std::getline(csv, line);
    std::vector<std::string> rows;
    while (std::getline(csv, line))
        if (!line.empty()) rows.push_back(line);
    REQUIRE_THAT(rows.size() == 4, "ablation did not emit 4 rows");
    const char* want_k[4] = {"1,", "3,", "5,", "10,"};
    for (size_t i = 0; i < 4; ++i)
        REQUIRE_THAT(rows[i].rfind(want_k[i], 0) == 0, "ablation rows are not K in {1,3,5,10}");
    fs::remove_all(dir);
    out << "600 episodes of (support 5xK, query 75), 200 val episodes, 4 ablation rows";
}

struct Criterion {
    const char* name;
    std::function<void(std::ostream&)> run;
};

}  // namespace

// Runs every criterion by default; name fragments as arguments select a
// subset (e.g. `hfw_acceptance C1 C3`).
int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {"C1 hfw-oracle-equivalence", c1_hfw_oracle},
        {"C2 gradient-suite", c2_gradients},
        {"C3 memory-invariants", c3_memory_invariants},
        {"C4 memory-lifetime", c4_lifetime},
        {"C5 checkpoint-contract", c5_checkpoint},
        {"C6 split-counts", c6_splits},
        {"C7 parameter-counts", c7_param_counts},
        {"C8 smoke-training", c8_smoke_training},
        {"C9 gate-ablation-equivalence", c9_gate_ablation},
        {"C10 protocol-conformance", c10_protocol},
    };
    auto selected = [&](const char* name) {
        if (argc < 2) return true;
        for (int i = 1; i < argc; ++i)
            if (std::string(name).find(argv[i]) != std::string::npos) return true;
        return false;
    };
    int failures = 0;
    int ran = 0;
    for (const auto& c : criteria) {
        if (!selected(c.name)) continue;
        std::ostringstream detail;
        const double t0 = now_seconds();
        bool ok = true;
        std::string why;
        try {
            c.run(detail);
        } catch (const std::exception& e) {
            ok = false;
            why = e.what();
        }
        const double dt = now_seconds() - t0;
        std::printf("[%s] %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", c.name, dt,
                    detail.str().empty() && why.empty() ? "" : ": ",
                    ok ? detail.str().c_str() : why.c_str());
        std::fflush(stdout);
        failures += ok ? 0 : 1;
        ++ran;
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
