#include "hfw/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "hfw/checkpoint.hpp"
#include "hfw/config.hpp"
#include "hfw/gradsuite.hpp"
#include "hfw/train.hpp"

namespace fs = std::filesystem;

namespace hfw {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string join_values(const std::vector<double>& vs) {
    std::string s;
    for (size_t i = 0; i < vs.size(); ++i) {
        if (i) s += ';';
        s += fmt(vs[i]);
    }
    return s;
}

ExperimentConfig resolve_config(const CommandOptions& opt) {
    ExperimentConfig cfg;
    if (!opt.config_path.empty()) {
        cfg = load_experiment_config(opt.config_path);
    } else {
        // coherent defaults for the reduced synthetic setup
        cfg.preprocess.target = cfg.data.synth_extent;
        cfg.preprocess.crop_pad = 2;
        cfg.preprocess.hflip_p = 0.0;
        cfg.preprocess.rotation_deg = 0.0;
    }
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.threads) cfg.threads = *opt.threads;
    if (opt.deterministic) cfg.deterministic = *opt.deterministic;
    if (opt.synth) {
        cfg.data.source = "synth";
        if (opt.synth_classes) cfg.data.synth_classes = *opt.synth_classes;
    }
    if (!opt.data_root.empty()) {
        cfg.data.root = opt.data_root;
    } else if (cfg.data.root.empty()) {
        if (const char* env = std::getenv("HFW_DATA_ROOT")) cfg.data.root = env;
    }
    // pad fill defaults to the normalized background of the preprocess stage
    auto& fill = cfg.model_kind == ModelKind::Flat ? cfg.flat.pad_fill : cfg.hier.pad_fill;
    if (fill.empty()) fill = cfg.preprocess.normalized_background();
    cfg.validate();
    return cfg;
}

int64_t effective_threads(const ExperimentConfig& cfg) { return cfg.deterministic ? 1 : cfg.threads; }

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "run_id,epoch,split,episodes,acc_mean,acc_ci95,precision_macro,recall_macro,f1_macro,loss_mean,lr,"
           "eta_values,lambda_values,wall_seconds\n";
    for (const auto& r : rows) {
        out << r.run_id << ',' << r.epoch << ',' << r.split << ',' << r.episodes << ',' << fmt(r.acc_mean) << ','
            << (r.ci_defined ? fmt(r.acc_ci95) : "") << ',' << fmt(r.precision_macro) << ',' << fmt(r.recall_macro)
            << ',' << fmt(r.f1_macro) << ',' << fmt(r.loss_mean) << ',' << fmt(r.lr) << ",\""
            << join_values(r.eta_values) << "\",\"" << join_values(r.lambda_values) << "\"," << fmt(r.wall_seconds)
            << '\n';
    }
}

nlohmann::json row_to_json(const MetricsRow& r) {
    nlohmann::json j{{"run_id", r.run_id},
                     {"epoch", r.epoch},
                     {"split", r.split},
                     {"episodes", r.episodes},
                     {"acc_mean", r.acc_mean},
                     {"precision_macro", r.precision_macro},
                     {"recall_macro", r.recall_macro},
                     {"f1_macro", r.f1_macro},
                     {"loss_mean", r.loss_mean},
                     {"lr", r.lr},
                     {"eta_values", r.eta_values},
                     {"lambda_values", r.lambda_values},
                     {"wall_seconds", r.wall_seconds}};
    if (r.ci_defined)
        j["acc_ci95"] = r.acc_ci95;
    else
        j["acc_ci95"] = nullptr;
    return j;
}

void print_eta_lambda(const Model<float>& model, std::ostream& out) {
    if (!model.has_hfw()) return;
    const auto etas = model.eta_values();
    const auto lambdas = model.lambda_values();
    out << "learned eta: [" << join_values(etas) << "]\n";
    out << "learned lambda: [" << join_values(lambdas) << "]\n";
    std::vector<double> lifetimes;
    for (double l : lambdas) lifetimes.push_back(memory_lifetime(l));
    out << "memory lifetime 1/(1-lambda): [" << join_values(lifetimes) << "]\n";
}

struct LoadedData {
    CharacterDataset ds;
    ClassSplit split;
};

LoadedData load_split_dataset(const ExperimentConfig& cfg) {
    LoadedData d;
    d.ds = load_dataset(cfg.data);
    d.split = split_classes(d.ds.class_ids(), cfg.split, cfg.seed);
    return d;
}

MetricsRow eval_test(const Model<float>& model, const ExperimentConfig& cfg, const LoadedData& data,
                     int64_t episodes, int64_t k_shot) {
    EpisodeConfig ec = cfg.episodes;
    ec.k_shot = k_shot;
    return evaluate_split(model, data.ds, data.split.test, ec, episodes, cfg.preprocess,
                          derive_seed(cfg.seed, "test"), "test", effective_threads(cfg));
}

}  // namespace

int cmd_prepare_data(const CommandOptions& opt, std::ostream& out) {
    ExperimentConfig cfg = resolve_config(opt);
    const auto [cache, rebuilt] = ensure_pack_cache(cfg.data);
    CharacterDataset ds = read_pack(cache);
    out << (rebuilt ? "built cache: " : "cache up to date: ") << cache << "\n";
    out << ds.classes.size() << " classes / " << ds.total_images() << " images\n";
    for (const auto& w : ds.warnings) out << "warning: " << w << "\n";
    ClassSplit split = split_classes(ds.class_ids(), cfg.split, cfg.seed);
    out << "split " << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
        << " (train/val/test, seed " << cfg.seed << ")\n";
    return 0;
}

int cmd_train(const CommandOptions& opt, std::ostream& out) {
    ExperimentConfig cfg = resolve_config(opt);
    LoadedData data = load_split_dataset(cfg);
    fs::create_directories(cfg.out_dir);

    const std::string run_id = cfg.resolved_run_id();
    const std::string snapshot = experiment_config_json(cfg);
    {
        std::ofstream cf(fs::path(cfg.out_dir) / "config.json", std::ios::trunc);
        cf << snapshot << "\n";
    }
    const std::string ckpt_path = (fs::path(cfg.out_dir) / ("best" + std::string(kCheckpointExt))).string();

    Model<float> model = build_model<float>(cfg);
    out << "training " << cfg.model_preset << " (" << model.count_parameters() << " parameters, run " << run_id
        << ")\n";

    TrainCallbacks<float> cb;
    cb.log = &out;
    cb.on_best = [&](const Model<float>& m, const MetricsRow& row) {
        CheckpointMeta meta;
        meta.epoch = row.epoch;
        meta.best_val_acc = row.acc_mean;
        meta.config_digest = config_digest(snapshot);
        save_model(ckpt_path, m, meta);
    };
    TrainResult result = train_loop(model, data.ds, data.split, cfg.episodes, cfg.preprocess, cfg.optim,
                                    cfg.schedule, cfg.early_stop_patience, cfg.seed, run_id, cb);
    write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), result.history);
    out << "best val acc " << fmt(result.best_val_acc) << " at epoch " << result.best_epoch
        << (result.early_stopped ? " (early stop)" : "") << "\n";
    out << "checkpoint: " << ckpt_path << "\n";
    print_eta_lambda(model, out);
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const CommandOptions& opt, std::ostream& out) {
    ExperimentConfig cfg = resolve_config(opt);
    LoadedData data = load_split_dataset(cfg);
    CheckpointMeta meta;
    Model<float> model = load_model<float>(checkpoint_path, &meta);
    if (!opt.config_path.empty()) {
        // the config's model section must describe the checkpointed model
        Model<float> expect = build_model<float>(cfg);
        if (model_config_json(expect) != meta.config_json)
            throw SchemaError("config model '" + cfg.model_preset + "' does not match checkpoint '" +
                              checkpoint_path + "'");
    }
    const int64_t episodes = opt.episodes.value_or(cfg.episodes.test_episodes);
    const int64_t k_shot = opt.k_shot.value_or(cfg.episodes.k_shot);
    MetricsRow row = eval_test(model, cfg, data, episodes, k_shot);
    row.run_id = cfg.resolved_run_id();
    row.epoch = meta.epoch;
    out << "test accuracy " << fmt(row.acc_mean);
    if (row.ci_defined)
        out << " +/- " << fmt(row.acc_ci95);
    else
        out << " (ci95 undefined)";
    out << " over " << row.episodes << " episodes\n";
    out << "precision " << fmt(row.precision_macro) << ", recall " << fmt(row.recall_macro) << ", f1 "
        << fmt(row.f1_macro) << ", loss " << fmt(row.loss_mean) << "\n";
    print_eta_lambda(model, out);
    fs::create_directories(cfg.out_dir);
    nlohmann::json j = row_to_json(row);
    j["k_shot"] = k_shot;
    j["checkpoint"] = checkpoint_path;
    std::ofstream jf(fs::path(cfg.out_dir) / "eval_result.json", std::ios::trunc);
    jf << j.dump(2) << "\n";
    return 0;
}

int cmd_ablate(const std::string& checkpoint_path, const std::vector<int64_t>& k_list, const CommandOptions& opt,
               std::ostream& out) {
    ExperimentConfig cfg = resolve_config(opt);
    LoadedData data = load_split_dataset(cfg);
    Model<float> model = [&] {
        if (checkpoint_path.empty()) {
            out << "no checkpoint given; ablating a freshly initialized model\n";
            return build_model<float>(cfg);
        }
        return load_model<float>(checkpoint_path);
    }();

    int64_t min_images = INT64_MAX;
    for (int64_t cid : data.split.test)
        min_images = std::min(min_images, static_cast<int64_t>(data.ds.classes[static_cast<size_t>(cid)].images.size()));
    for (int64_t k : k_list) {
        if (k < 1) throw ArgumentError("ablate: K must be >= 1");
        if (k + cfg.episodes.n_query > min_images)
            throw ArgumentError("ablate: K=" + std::to_string(k) + " with " + std::to_string(cfg.episodes.n_query) +
                                " queries exceeds the smallest test class (" + std::to_string(min_images) +
                                " images)");
    }

    const int64_t episodes = opt.episodes.value_or(cfg.episodes.test_episodes);
    fs::create_directories(cfg.out_dir);
    const std::string csv_path = (fs::path(cfg.out_dir) / "ablation.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "k,episodes,acc_mean,acc_ci95,precision_macro,recall_macro,f1_macro,loss_mean\n";
    out << "k-shot ablation over " << episodes << " test episodes:\n";
    for (int64_t k : k_list) {
        MetricsRow row = eval_test(model, cfg, data, episodes, k);
        csv << k << ',' << row.episodes << ',' << fmt(row.acc_mean) << ','
            << (row.ci_defined ? fmt(row.acc_ci95) : "") << ',' << fmt(row.precision_macro) << ','
            << fmt(row.recall_macro) << ',' << fmt(row.f1_macro) << ',' << fmt(row.loss_mean) << '\n';
        out << "  K=" << k << ": acc " << fmt(row.acc_mean);
        if (row.ci_defined) out << " +/- " << fmt(row.acc_ci95);
        out << "\n";
    }
    out << "wrote " << csv_path << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& preset, std::ostream& out) {
    const ModelPreset p = model_preset(preset.empty() ? "desk_flat_hebbian" : preset);
    const bool hebbian = p.kind == ModelKind::Flat ? p.flat.hfw.has_value() : p.hier.hfw.has_value();
    constexpr double tol = 1e-4;
    std::vector<OpCheck> checks = gradsuite::kernel_checks(5, tol);
    checks.push_back(gradsuite::hfw_composition_check(17, tol));
    checks.push_back(gradsuite::block_composition_check(18, tol));
    if (p.kind == ModelKind::Hier)
        checks.push_back(gradsuite::hier_episode_composition_check(19, tol, hebbian));
    else
        checks.push_back(gradsuite::episode_composition_check(19, tol, hebbian));
    if (hebbian) checks.push_back(gradsuite::episode_composition_check(20, tol, true, MemoryScope::PerEpisode));
    bool all = true;
    for (const auto& c : checks) {
        out << (c.passed ? "[PASS] " : "[FAIL] ") << c.op << ": max rel err " << fmt(c.max_rel_err) << "\n";
        all = all && c.passed;
    }
    out << (all ? "gradcheck passed" : "gradcheck FAILED") << " (tol " << tol << ")\n";
    return all ? 0 : 3;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace hfw
