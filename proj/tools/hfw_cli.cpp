// Command-line front-end for the Hebbian fast-weight few-shot experiments.
//
//   hfw prepare-data [--config c.json] [--data-root DIR | --synth [--classes N]]
//   hfw train        --config c.json [--seed S] [--threads T] [--deterministic]
//   hfw eval         CKPT [--config c.json] [--episodes E] [--k K]
//   hfw ablate       [CKPT] [--config c.json] [--k 1,3,5,10] [--episodes E]
//   hfw gradcheck    [PRESET]

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "hfw/commands.hpp"
#include "hfw/errors.hpp"

namespace {

void add_common(CLI::App* cmd, hfw::CommandOptions& opt, bool& det_flag) {
    cmd->add_option("--config", opt.config_path, "experiment config JSON");
    cmd->add_option("--seed", opt.seed, "override the experiment seed");
    cmd->add_option("--threads", opt.threads, "evaluation worker threads (ignored in deterministic mode)");
    cmd->add_flag("--deterministic", det_flag, "force single-threaded, bit-reproducible execution");
    cmd->add_option("--data-root", opt.data_root, "dataset root (falls back to HFW_DATA_ROOT)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hebbian fast-weight transformers, episodic few-shot training and evaluation"};
    app.require_subcommand(1);

    hfw::CommandOptions opt;
    bool det_flag = false;
    std::string k_csv = "1,3,5,10";
    std::string checkpoint;
    std::string preset = "desk_flat_hebbian";

    auto* prep = app.add_subcommand("prepare-data", "build the packed dataset cache and report split sizes");
    add_common(prep, opt, det_flag);
    prep->add_flag("--synth", opt.synth, "use the procedural glyph generator");
    prep->add_option("--classes", opt.synth_classes, "synthetic class count (with --synth)");

    auto* train = app.add_subcommand("train", "run the episodic training loop");
    add_common(train, opt, det_flag);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on test episodes");
    eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
    add_common(eval, opt, det_flag);
    eval->add_option("--episodes", opt.episodes, "test episode count override");
    eval->add_option("--k", opt.k_shot, "k-shot override");

    auto* ablate = app.add_subcommand("ablate", "k-shot ablation over the test split");
    ablate->add_option("checkpoint", checkpoint, "checkpoint file (omit to ablate a fresh model)");
    add_common(ablate, opt, det_flag);
    ablate->add_option("--episodes", opt.episodes, "test episode count override");
    ablate->add_option("--k", k_csv, "comma-separated shot counts");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification (float64)");
    grad->add_option("preset", preset, "model preset selecting the composition under test");

    CLI11_PARSE(app, argc, argv);
    if (det_flag) opt.deterministic = true;

    return hfw::guarded(
        [&]() -> int {
            if (prep->parsed()) return hfw::cmd_prepare_data(opt, std::cout);
            if (train->parsed()) return hfw::cmd_train(opt, std::cout);
            if (eval->parsed()) return hfw::cmd_eval(checkpoint, opt, std::cout);
            if (ablate->parsed()) {
                std::vector<int64_t> ks;
                std::stringstream ss(k_csv);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    try {
                        ks.push_back(std::stoll(tok));
                    } catch (const std::exception&) {
                        throw hfw::ConfigError("--k expects comma-separated shot counts, got '" + tok + "'");
                    }
                }
                return hfw::cmd_ablate(checkpoint, ks, opt, std::cout);
            }
            if (grad->parsed()) return hfw::cmd_gradcheck(preset, std::cout);
            return 1;
        },
        std::cerr);
}
