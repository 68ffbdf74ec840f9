#include "hfw/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hfw/io_util.hpp"
#include "json_detail.hpp"

namespace fs = std::filesystem;

namespace hfw {

using jsondetail::check_keys;
using jsondetail::get_or;
using nlohmann::json;

void ExperimentConfig::validate() const {
    if (model_kind == ModelKind::Flat)
        flat.validate();
    else
        hier.validate();
    episodes.validate();
    data.validate();
    preprocess.validate();
    optim.validate();
    schedule.validate();
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
}

namespace {

EpisodeConfig episodes_from_json(const json& j, const std::string& path) {
    check_keys(j, {"n_way", "k_shot", "n_query", "train", "val", "test"}, path);
    EpisodeConfig e;
    e.n_way = get_or<int64_t>(j, "n_way", e.n_way, path);
    e.k_shot = get_or<int64_t>(j, "k_shot", e.k_shot, path);
    e.n_query = get_or<int64_t>(j, "n_query", e.n_query, path);
    e.train_episodes = get_or<int64_t>(j, "train", e.train_episodes, path);
    e.val_episodes = get_or<int64_t>(j, "val", e.val_episodes, path);
    e.test_episodes = get_or<int64_t>(j, "test", e.test_episodes, path);
    return e;
}

json episodes_to_json(const EpisodeConfig& e) {
    return json{{"n_way", e.n_way}, {"k_shot", e.k_shot},      {"n_query", e.n_query},
                {"train", e.train_episodes}, {"val", e.val_episodes}, {"test", e.test_episodes}};
}

PreprocessConfig preprocess_from_json(const json& j, const std::string& path) {
    check_keys(j, {"target", "crop_pad", "hflip_p", "rotation_deg", "augment", "mean", "std"}, path);
    PreprocessConfig p;
    p.target = get_or<int64_t>(j, "target", p.target, path);
    p.crop_pad = get_or<int64_t>(j, "crop_pad", p.crop_pad, path);
    p.hflip_p = get_or<double>(j, "hflip_p", p.hflip_p, path);
    p.rotation_deg = get_or<double>(j, "rotation_deg", p.rotation_deg, path);
    p.augment = get_or<bool>(j, "augment", p.augment, path);
    auto mean = get_or<std::vector<double>>(j, "mean", {p.mean.begin(), p.mean.end()}, path);
    auto stddev = get_or<std::vector<double>>(j, "std", {p.stddev.begin(), p.stddev.end()}, path);
    if (mean.size() != 3 || stddev.size() != 3) throw ConfigError("'" + path + "': mean/std need 3 entries");
    std::copy(mean.begin(), mean.end(), p.mean.begin());
    std::copy(stddev.begin(), stddev.end(), p.stddev.begin());
    return p;
}

json preprocess_to_json(const PreprocessConfig& p) {
    return json{{"target", p.target},
                {"crop_pad", p.crop_pad},
                {"hflip_p", p.hflip_p},
                {"rotation_deg", p.rotation_deg},
                {"augment", p.augment},
                {"mean", std::vector<double>(p.mean.begin(), p.mean.end())},
                {"std", std::vector<double>(p.stddev.begin(), p.stddev.end())}};
}

DataConfig data_from_json(const json& j, const std::string& path) {
    check_keys(j, {"source", "root", "classes", "per_class", "extent", "synth_seed"}, path);
    DataConfig d;
    d.source = get_or<std::string>(j, "source", d.source, path);
    d.root = get_or<std::string>(j, "root", d.root, path);
    d.synth_classes = get_or<int64_t>(j, "classes", d.synth_classes, path);
    d.synth_per_class = get_or<int64_t>(j, "per_class", d.synth_per_class, path);
    d.synth_extent = get_or<int64_t>(j, "extent", d.synth_extent, path);
    d.synth_seed = get_or<uint64_t>(j, "synth_seed", d.synth_seed, path);
    return d;
}

json data_to_json(const DataConfig& d) {
    return json{{"source", d.source},        {"root", d.root},
                {"classes", d.synth_classes}, {"per_class", d.synth_per_class},
                {"extent", d.synth_extent},  {"synth_seed", d.synth_seed}};
}

OptimConfig optim_from_json(const json& j, const std::string& path) {
    check_keys(j, {"lr", "weight_decay", "beta1", "beta2", "eps", "clip_norm"}, path);
    OptimConfig o;
    o.lr_base = get_or<double>(j, "lr", o.lr_base, path);
    o.weight_decay = get_or<double>(j, "weight_decay", o.weight_decay, path);
    o.beta1 = get_or<double>(j, "beta1", o.beta1, path);
    o.beta2 = get_or<double>(j, "beta2", o.beta2, path);
    o.eps_opt = get_or<double>(j, "eps", o.eps_opt, path);
    o.clip_norm = get_or<double>(j, "clip_norm", o.clip_norm, path);
    return o;
}

json optim_to_json(const OptimConfig& o) {
    return json{{"lr", o.lr_base},   {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
                {"beta2", o.beta2}, {"eps", o.eps_opt},               {"clip_norm", o.clip_norm}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j,
               {"schema_version", "seed", "out_dir", "run_id", "model", "hfw", "episodes", "split", "data",
                "preprocess", "optim", "schedule", "early_stop_patience", "threads", "deterministic"},
               "config");
    ExperimentConfig c;
    c.schema_version = get_or<int64_t>(j, "schema_version", 1, "config");
    if (c.schema_version != 1)
        throw ConfigError("schema_version " + std::to_string(c.schema_version) + " unsupported (want 1)");
    c.seed = get_or<uint64_t>(j, "seed", c.seed, "config");
    c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir, "config");
    c.run_id = get_or<std::string>(j, "run_id", c.run_id, "config");

    json model = j.value("model", json::object());
    check_keys(model, {"preset", "overrides"}, "config.model");
    c.model_preset = get_or<std::string>(model, "preset", c.model_preset, "config.model");
    ModelPreset preset = model_preset(c.model_preset);
    c.model_kind = preset.kind;
    // overrides merge onto the preset's resolved backbone config
    json base = preset.kind == ModelKind::Flat ? jsondetail::flat_to_json(preset.flat)
                                               : jsondetail::hier_to_json(preset.hier);
    if (model.contains("overrides")) {
        const json& ov = model.at("overrides");
        if (!ov.is_object()) throw ConfigError("config.model.overrides: expected an object");
        base.merge_patch(ov);
    }
    if (preset.kind == ModelKind::Flat)
        c.flat = jsondetail::flat_from_json(base, "config.model.overrides");
    else
        c.hier = jsondetail::hier_from_json(base, "config.model.overrides");

    if (j.contains("hfw") && !j.at("hfw").is_null()) {
        if (!c.has_hfw())
            throw ConfigError("config.hfw given but preset '" + c.model_preset +
                              "' has no fast-weight module; choose a *_hebbian preset");
        HfwConfig hc = jsondetail::hfw_from_json(j.at("hfw"), "config.hfw");
        if (c.model_kind == ModelKind::Flat)
            c.flat.hfw = hc;
        else
            c.hier.hfw = hc;
    }

    if (j.contains("episodes")) c.episodes = episodes_from_json(j.at("episodes"), "config.episodes");
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, {"train", "val", "test"}, "config.split");
        c.split.train = get_or<double>(s, "train", c.split.train, "config.split");
        c.split.val = get_or<double>(s, "val", c.split.val, "config.split");
        c.split.test = get_or<double>(s, "test", c.split.test, "config.split");
    }
    if (j.contains("data")) c.data = data_from_json(j.at("data"), "config.data");
    if (j.contains("preprocess")) c.preprocess = preprocess_from_json(j.at("preprocess"), "config.preprocess");
    if (j.contains("optim")) c.optim = optim_from_json(j.at("optim"), "config.optim");
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, {"warmup_epochs", "total_epochs"}, "config.schedule");
        c.schedule.warmup_epochs = get_or<int64_t>(s, "warmup_epochs", c.schedule.warmup_epochs, "config.schedule");
        c.schedule.total_epochs = get_or<int64_t>(s, "total_epochs", c.schedule.total_epochs, "config.schedule");
    }
    c.early_stop_patience = get_or<int64_t>(j, "early_stop_patience", c.early_stop_patience, "config");
    c.threads = get_or<int64_t>(j, "threads", c.threads, "config");
    c.deterministic = get_or<bool>(j, "deterministic", c.deterministic, "config");
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    if (!c.run_id.empty()) j["run_id"] = c.run_id;
    json model;
    model["preset"] = c.model_preset;
    model["overrides"] = c.model_kind == ModelKind::Flat ? jsondetail::flat_to_json(c.flat)
                                                          : jsondetail::hier_to_json(c.hier);
    j["model"] = model;
    j["episodes"] = episodes_to_json(c.episodes);
    j["split"] = json{{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    j["data"] = data_to_json(c.data);
    j["preprocess"] = preprocess_to_json(c.preprocess);
    j["optim"] = optim_to_json(c.optim);
    j["schedule"] = json{{"warmup_epochs", c.schedule.warmup_epochs}, {"total_epochs", c.schedule.total_epochs}};
    j["early_stop_patience"] = c.early_stop_patience;
    j["threads"] = c.threads;
    j["deterministic"] = c.deterministic;
    return j.dump(2);
}

std::string config_digest(const std::string& json_text) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x",
                  crc32(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(json_text.data()),
                                                 json_text.size())));
    return buf;
}

std::pair<std::string, bool> ensure_pack_cache(const DataConfig& data) {
    data.validate();
    const fs::path root = data.root.empty() ? fs::path(".") : fs::path(data.root);
    const fs::path cache = root / (data.source == "omniglot" ? "omniglot.pack" : "synth.pack");
    if (fs::exists(cache)) {
        try {
            read_pack(cache.string());
            return {cache.string(), false};
        } catch (const FormatError&) {
            // fall through and rebuild
        }
    }
    CharacterDataset ds = data.source == "omniglot"
                              ? load_omniglot(root.string())
                              : synth_glyphs(data.synth_classes, data.synth_per_class, data.synth_extent,
                                             data.synth_seed);
    fs::create_directories(root);
    write_pack(cache.string(), ds);
    return {cache.string(), true};
}

CharacterDataset load_dataset(const DataConfig& data) {
    data.validate();
    const fs::path root = data.root.empty() ? fs::path(".") : fs::path(data.root);
    const fs::path cache = root / (data.source == "omniglot" ? "omniglot.pack" : "synth.pack");
    if (fs::exists(cache)) {
        try {
            return read_pack(cache.string());
        } catch (const FormatError&) {
            // stale cache; rebuild from source below
        }
    }
    if (data.source == "omniglot") return load_omniglot(root.string());
    return synth_glyphs(data.synth_classes, data.synth_per_class, data.synth_extent, data.synth_seed);
}

}  // namespace hfw
