#pragma once

// Experiment configuration: schema-versioned JSON with strict keys (unknown
// keys are errors). Model presets resolve to full backbone configs at parse
// time, so a saved snapshot pins every hyperparameter.

#include <cstdint>
#include <string>

#include "hfw/backbones.hpp"
#include "hfw/data.hpp"
#include "hfw/fewshot.hpp"
#include "hfw/train_types.hpp"

namespace hfw {

struct DataConfig {
    std::string source = "synth";  // "synth" | "omniglot"
    std::string root;              // data root / cache directory
    int64_t synth_classes = 40;
    int64_t synth_per_class = 20;
    int64_t synth_extent = 28;
    uint64_t synth_seed = 7;

    void validate() const {
        if (source != "synth" && source != "omniglot")
            throw ConfigError("data.source must be 'synth' or 'omniglot'");
        if (source == "synth" && (synth_classes < 2 || synth_per_class < 1 || synth_extent < 8))
            throw ConfigError("data: synth needs classes >= 2, per_class >= 1, extent >= 8");
    }
};

struct ExperimentConfig {
    int64_t schema_version = 1;
    uint64_t seed = 42;
    std::string out_dir = "runs/run";
    std::string run_id;  // defaults to "<preset>_s<seed>"
    std::string model_preset = "desk_flat";
    ModelKind model_kind = ModelKind::Flat;
    FlatBackboneConfig flat;  // resolved; valid when model_kind == Flat
    HierBackboneConfig hier;  // resolved; valid when model_kind == Hier
    EpisodeConfig episodes;
    SplitRatios split;
    DataConfig data;
    PreprocessConfig preprocess;
    OptimConfig optim;
    ScheduleConfig schedule;
    int64_t early_stop_patience = 15;
    int64_t threads = 1;
    bool deterministic = true;

    bool has_hfw() const { return model_kind == ModelKind::Flat ? flat.hfw.has_value() : hier.hfw.has_value(); }

    std::string resolved_run_id() const {
        return run_id.empty() ? model_preset + "_s" + std::to_string(seed) : run_id;
    }

    void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Fully resolved snapshot; parses back to an identical config.
std::string experiment_config_json(const ExperimentConfig& cfg);

std::string config_digest(const std::string& json_text);

template <typename T>
Model<T> build_model(const ExperimentConfig& cfg) {
    return cfg.model_kind == ModelKind::Flat ? Model<T>::flat(cfg.flat, cfg.seed) : Model<T>::hier(cfg.hier, cfg.seed);
}

// Loads (or synthesizes) the dataset named by cfg.data, preferring the pack cache.
CharacterDataset load_dataset(const DataConfig& data);

// Builds the pack cache if missing; returns (cache path, rebuilt?).
std::pair<std::string, bool> ensure_pack_cache(const DataConfig& data);

}  // namespace hfw
