#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfw/errors.hpp"

namespace hfw {

struct OptimConfig {
    double lr_base = 5e-4;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    double clip_norm = 1.0;

    void validate() const {
        if (lr_base <= 0 || eps_opt <= 0 || clip_norm <= 0)
            throw ConfigError("optim: lr, eps and clip_norm must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("optim: betas must be in [0, 1)");
        if (weight_decay < 0) throw ConfigError("optim: weight_decay must be >= 0");
    }
};

struct ScheduleConfig {
    int64_t warmup_epochs = 10;
    int64_t total_epochs = 60;

    void validate() const {
        if (warmup_epochs < 0 || warmup_epochs >= total_epochs || total_epochs < 1)
            throw ConfigError("schedule: need 0 <= warmup < total and total >= 1");
    }
};

// One row per (epoch, split); the fixed column schema of metrics.csv.
struct MetricsRow {
    std::string run_id;
    int64_t epoch = 0;
    std::string split;
    int64_t episodes = 0;
    double acc_mean = 0.0;
    double acc_ci95 = 0.0;
    bool ci_defined = false;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double loss_mean = 0.0;
    double lr = 0.0;
    std::vector<double> eta_values, lambda_values;  // per fast-weight module
    double wall_seconds = 0.0;
};

}  // namespace hfw
