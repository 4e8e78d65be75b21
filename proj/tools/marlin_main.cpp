// SPDX-License-Identifier: Apache-2.0
//
// marlin: self-supervised facial-video pre-training at desk scale.
// Subcommands: synth, mask, pretrain, features, probe, eval,
// ablate-ratio, ablate-strategy. Every run writes a report.json with the
// config hash and seed needed to reproduce it.

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marlin/cli.hpp"

namespace {

int exit_code_for(const marlin::Error& e) {
    switch (e.kind()) {
        case marlin::ErrorKind::invalid_argument: return 2;
        case marlin::ErrorKind::io: return 3;
        case marlin::ErrorKind::format: return 4;
        case marlin::ErrorKind::numeric: return 5;
    }
    return 1;
}

void add_clip_flags(CLI::App* cmd, marlin::ClipSpec& spec) {
    cmd->add_option("--channels", spec.channels, "pixel channels");
    cmd->add_option("--frames", spec.frames, "frames per clip");
    cmd->add_option("--height", spec.height, "frame height");
    cmd->add_option("--width", spec.width, "frame width");
    cmd->add_option("--stride", spec.temporal_stride, "temporal stride");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked facial-video representation pre-training at desk scale"};
    app.require_subcommand(1);

    // ---- synth ----
    marlin::cli::SynthOptions synth;
    synth.spec = {3, 8, 32, 32, 2};
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic face-clip corpus + manifest");
    synth_cmd->add_option("--count", synth.count, "number of clips")->required();
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "corpus seed");
    synth_cmd->add_flag("--labeled", synth.labeled, "emit mouth-open labels (balanced two-class task)");
    synth_cmd->add_option("--motion", synth.motion_amplitude, "motion amplitude (0 = static)");
    add_clip_flags(synth_cmd, synth.spec);

    // ---- mask ----
    marlin::cli::MaskOptions mask;
    std::string mask_strategy = "fasking";
    auto* mask_cmd = app.add_subcommand("mask", "build a mask plan for one clip");
    mask_cmd->add_option("--clip", mask.clip_path, "input .mclip file")->required();
    mask_cmd->add_option("--out", mask.out_dir, "output directory")->required();
    mask_cmd->add_option("--strategy", mask_strategy, "fasking|random|frame|tube");
    mask_cmd->add_option("--ratio", mask.ratio, "masking ratio in [0,1]");
    mask_cmd->add_option("--seed", mask.seed, "plan seed");
    mask_cmd->add_option("--cube-t", mask.cube_t, "cube temporal size");
    mask_cmd->add_option("--cube-h", mask.cube_h, "cube height");
    mask_cmd->add_option("--cube-w", mask.cube_w, "cube width");
    mask_cmd->add_flag("--preview", mask.preview, "write preview clip with masked cubes zeroed");

    // ---- pretrain ----
    std::string pretrain_config;
    std::string pretrain_out;
    auto* pre_cmd = app.add_subcommand("pretrain", "run self-supervised pre-training from a config file");
    pre_cmd->add_option("--config", pretrain_config, "config JSON path")->required();
    pre_cmd->add_option("--out", pretrain_out, "override out_dir");

    // ---- features ----
    marlin::cli::FeaturesOptions features;
    features.clip = {3, 8, 32, 32, 2};
    auto* feat_cmd = app.add_subcommand("features", "sliding-window feature extraction");
    feat_cmd->add_option("--checkpoint", features.checkpoint_dir, "checkpoint directory")->required();
    feat_cmd->add_option("--manifest", features.manifest_path, "clip manifest")->required();
    feat_cmd->add_option("--out", features.out_dir, "output directory")->required();
    feat_cmd->add_option("--window-stride", features.window_stride, "frames between window starts");
    add_clip_flags(feat_cmd, features.clip);

    // ---- probe ----
    marlin::cli::ProbeOptions probe;
    probe.clip = {3, 8, 32, 32, 2};
    std::string probe_mode = "lp";
    std::string probe_config;
    auto* probe_cmd = app.add_subcommand("probe", "downstream adaptation (linear probe / fine-tune)");
    probe_cmd->add_option("--checkpoint", probe.checkpoint_dir, "checkpoint directory")->required();
    probe_cmd->add_option("--train-manifest", probe.train_manifest, "labeled train manifest")->required();
    probe_cmd->add_option("--test-manifest", probe.test_manifest, "labeled test manifest")->required();
    probe_cmd->add_option("--out", probe.out_dir, "output directory")->required();
    probe_cmd->add_option("--mode", probe_mode, "lp|ft");
    probe_cmd->add_option("--fraction", probe.fraction, "few-shot label fraction in (0,1]");
    probe_cmd->add_option("--config", probe_config, "JSON with downstream TrainConfig overrides");
    probe_cmd->add_option("--seed", probe.train.seed, "downstream seed");
    probe_cmd->add_option("--window-stride", probe.window_stride, "feature window stride");
    add_clip_flags(probe_cmd, probe.clip);

    // ---- eval ----
    marlin::cli::EvalOptions eval_opt;
    eval_opt.clip = {3, 8, 32, 32, 2};
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained head on a test manifest");
    eval_cmd->add_option("--checkpoint", eval_opt.checkpoint_dir, "encoder checkpoint")->required();
    eval_cmd->add_option("--head", eval_opt.head_dir, "head checkpoint")->required();
    eval_cmd->add_option("--test-manifest", eval_opt.test_manifest, "labeled test manifest")->required();
    eval_cmd->add_option("--out", eval_opt.out_dir, "output directory")->required();
    eval_cmd->add_option("--window-stride", eval_opt.window_stride, "feature window stride");
    add_clip_flags(eval_cmd, eval_opt.clip);

    // ---- ablations ----
    std::string ablate_config, ablate_out;
    std::vector<double> ratios;
    auto* ar_cmd = app.add_subcommand("ablate-ratio", "pretrain+probe per masking ratio, CSV out");
    ar_cmd->add_option("--config", ablate_config, "config JSON path")->required();
    ar_cmd->add_option("--out", ablate_out, "output directory")->required();
    ar_cmd->add_option("--ratios", ratios, "list of masking ratios")->required();

    std::string ablate_s_config, ablate_s_out;
    std::vector<std::string> strategies;
    auto* as_cmd = app.add_subcommand("ablate-strategy", "pretrain+probe per masking strategy, CSV out");
    as_cmd->add_option("--config", ablate_s_config, "config JSON path")->required();
    as_cmd->add_option("--out", ablate_s_out, "output directory")->required();
    as_cmd->add_option("--strategies", strategies, "list of strategies")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            marlin::cli::cmd_synth(synth);
        } else if (mask_cmd->parsed()) {
            mask.strategy = marlin::parse_mask_strategy(mask_strategy);
            marlin::cli::cmd_mask(mask);
        } else if (pre_cmd->parsed()) {
            const auto cfg = marlin::cli::load_project_config(pretrain_config);
            marlin::cli::cmd_pretrain(cfg, pretrain_out);
        } else if (feat_cmd->parsed()) {
            marlin::cli::cmd_features(features);
        } else if (probe_cmd->parsed()) {
            probe.mode = marlin::parse_adapt_mode(probe_mode);
            if (!probe_config.empty()) {
                std::ifstream is(probe_config);
                marlin::require(bool(is), marlin::ErrorKind::io, "missing config: " + probe_config);
                nlohmann::json j;
                try {
                    is >> j;
                } catch (const nlohmann::json::exception& e) {
                    throw marlin::Error(marlin::ErrorKind::format,
                                        "probe config: bad JSON: " + std::string(e.what()));
                }
                probe.train = marlin::train_config_from_json(j, probe.train);
            }
            marlin::cli::cmd_probe(probe);
        } else if (eval_cmd->parsed()) {
            marlin::cli::cmd_eval(eval_opt);
        } else if (ar_cmd->parsed()) {
            const auto cfg = marlin::cli::load_project_config(ablate_config);
            marlin::cli::cmd_ablate_ratio(cfg, ratios, ablate_out);
        } else if (as_cmd->parsed()) {
            const auto cfg = marlin::cli::load_project_config(ablate_s_config);
            marlin::cli::cmd_ablate_strategy(cfg, strategies, ablate_s_out);
        }
    } catch (const marlin::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
