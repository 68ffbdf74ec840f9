#pragma once

// Experiment front-end: the five CLI verbs as library functions returning
// process exit codes (0 ok, 2 config/schema, 3 numerical, 4 data, 1 other).

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hfw {

struct CommandOptions {
    std::string config_path;            // --config
    std::optional<uint64_t> seed;       // --seed
    std::optional<int64_t> episodes;    // --episodes (eval/ablate)
    std::optional<int64_t> k_shot;      // --k (eval)
    std::optional<int64_t> threads;     // --threads
    std::optional<bool> deterministic;  // --deterministic
    std::string data_root;              // --data-root (falls back to HFW_DATA_ROOT)
    bool synth = false;                 // --synth
    std::optional<int64_t> synth_classes;
};

int cmd_prepare_data(const CommandOptions& opt, std::ostream& out);
int cmd_train(const CommandOptions& opt, std::ostream& out);
int cmd_eval(const std::string& checkpoint_path, const CommandOptions& opt, std::ostream& out);
int cmd_ablate(const std::string& checkpoint_path, const std::vector<int64_t>& k_list, const CommandOptions& opt,
               std::ostream& out);
int cmd_gradcheck(const std::string& preset, std::ostream& out);

// Runs fn, mapping thrown errors to the stable exit-code contract.
int guarded(const std::function<int()>& fn, std::ostream& err);

}  // namespace hfw
