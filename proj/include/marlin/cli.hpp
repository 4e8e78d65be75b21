// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marlin/report.hpp"
#include "marlin/synth.hpp"
#include "marlin/training.hpp"

// Command implementations behind the CLI binary. They are plain functions so
// the integration tests can drive them in-process.

namespace marlin::cli {

using Scalar = float;

// ---------------------------------------------------------------------------
// Project config file: top-level keys mirror TrainConfig exactly, plus
// "model", "clip", "manifest", "out_dir", "window_stride" and an optional
// "probe" section (downstream TrainConfig overrides + manifests + mode +
// fraction). Paths are resolved relative to the config file.

struct ProjectConfig {
    TrainConfig train;
    ModelConfig model;
    ClipSpec clip;
    std::filesystem::path manifest;
    std::filesystem::path out_dir;
    int window_stride = 1;

    TrainConfig probe_train = TrainConfig::downstream_defaults();
    std::filesystem::path probe_train_manifest;
    std::filesystem::path probe_test_manifest;
    AdaptMode probe_mode = AdaptMode::linear_probe;
    double probe_fraction = 1.0;

    nlohmann::ordered_json raw;
};

inline ClipSpec clip_spec_from_json(const nlohmann::json& j, ClipSpec base = {}) {
    ClipSpec c = base;
    if (j.contains("channels")) c.channels = j["channels"].get<int>();
    if (j.contains("frames")) c.frames = j["frames"].get<int>();
    if (j.contains("height")) c.height = j["height"].get<int>();
    if (j.contains("width")) c.width = j["width"].get<int>();
    if (j.contains("temporal_stride")) c.temporal_stride = j["temporal_stride"].get<int>();
    c.validate();
    return c;
}

inline ModelConfig model_from_sections(const nlohmann::json& model_j, const ClipSpec& clip) {
    const Variant variant = parse_variant(model_j.value("variant", "tiny"));
    const int cube_t = model_j.value("cube_t", 2);
    const int cube_h = model_j.value("cube_h", 16);
    const int cube_w = model_j.value("cube_w", 16);
    const TokenGridSpec grid =
        TokenGridSpec::for_clip(clip.channels, clip.frames, clip.height, clip.width, cube_t, cube_h, cube_w);
    ModelConfig m = ModelConfig::preset(variant, grid);
    if (model_j.contains("embed_dim")) m.embed_dim = model_j["embed_dim"].get<int>();
    if (model_j.contains("depth")) m.depth = model_j["depth"].get<int>();
    if (model_j.contains("heads")) m.heads = model_j["heads"].get<int>();
    if (model_j.contains("decoder_dim")) m.decoder_dim = model_j["decoder_dim"].get<int>();
    if (model_j.contains("decoder_depth")) m.decoder_depth = model_j["decoder_depth"].get<int>();
    if (model_j.contains("decoder_heads")) m.decoder_heads = model_j["decoder_heads"].get<int>();
    if (model_j.contains("disc_hidden")) m.disc_hidden = model_j["disc_hidden"].get<std::vector<int>>();
    if (model_j.contains("learned_pos")) m.learned_pos = model_j["learned_pos"].get<bool>();
    m.validate();
    return m;
}

inline ProjectConfig load_project_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(bool(is), ErrorKind::io, "missing config file: " + path.string());
    nlohmann::ordered_json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::format, "config: bad JSON: " + std::string(e.what()));
    }
    const auto base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    ProjectConfig cfg;
    cfg.raw = j;
    cfg.train = train_config_from_json(j);
    cfg.clip = j.contains("clip") ? clip_spec_from_json(j["clip"]) : ClipSpec{};
    cfg.model = model_from_sections(j.value("model", nlohmann::ordered_json::object()), cfg.clip);
    if (j.contains("manifest")) cfg.manifest = resolve(j["manifest"].get<std::string>());
    if (j.contains("out_dir")) cfg.out_dir = resolve(j["out_dir"].get<std::string>());
    if (j.contains("window_stride")) cfg.window_stride = j["window_stride"].get<int>();

    if (j.contains("probe")) {
        const auto& p = j["probe"];
        cfg.probe_train = train_config_from_json(p, TrainConfig::downstream_defaults());
        if (p.contains("train_manifest")) cfg.probe_train_manifest = resolve(p["train_manifest"].get<std::string>());
        if (p.contains("test_manifest")) cfg.probe_test_manifest = resolve(p["test_manifest"].get<std::string>());
        if (p.contains("mode")) cfg.probe_mode = parse_adapt_mode(p["mode"].get<std::string>());
        if (p.contains("fraction")) cfg.probe_fraction = p["fraction"].get<double>();
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// synth: deterministic labeled/unlabeled corpus of procedural face clips.

struct SynthOptions {
    int count = 10;
    ClipSpec spec;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    bool labeled = false;       // alternate mouth-open/closed, emit labels
    double motion_amplitude = 1.0;
};

inline RunReport cmd_synth(const SynthOptions& opt) {
    WallClock clock;
    require_arg(opt.count >= 1, "synth: count must be >= 1");
    const auto clip_dir = opt.out_dir / "clips";
    std::filesystem::create_directories(clip_dir);

    DatasetManifest manifest;
    if (opt.labeled) manifest.task = TaskInfo{"multiclass", 2};
    Rng coin(derive_seed(opt.seed, 0xc015));
    for (int i = 0; i < opt.count; ++i) {
        MotionParams motion;
        motion.amplitude = opt.motion_amplitude;
        const bool open = opt.labeled ? (i % 2 == 1) : (coin.next_double() < 0.5);
        motion.mouth_open = open;
        const VideoClip clip = synth_face_clip(derive_seed(opt.seed, static_cast<std::uint64_t>(i)),
                                               opt.spec, motion);
        char name[48];
        std::snprintf(name, sizeof(name), "clip_%05d.mclip", i);
        const auto path = clip_dir / name;
        write_clip(clip, path);
        ManifestEntry e;
        e.path = path;
        if (opt.labeled) e.label = std::vector<double>{open ? 1.0 : 0.0};
        manifest.entries.push_back(std::move(e));
    }
    const auto manifest_path = opt.out_dir / "manifest.jsonl";
    write_manifest(manifest, manifest_path);

    RunReport report;
    report.command = "synth";
    report.seed = opt.seed;
    report.config = {{"count", opt.count},
                     {"labeled", opt.labeled},
                     {"motion_amplitude", opt.motion_amplitude},
                     {"clip",
                      {{"channels", opt.spec.channels},
                       {"frames", opt.spec.frames},
                       {"height", opt.spec.height},
                       {"width", opt.spec.width},
                       {"temporal_stride", opt.spec.temporal_stride}}},
                     {"seed", opt.seed}};
    report.metrics = {{"clips_written", opt.count}};
    report.artifacts = {manifest_path.string()};
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

// ---------------------------------------------------------------------------
// mask: plan one clip, serialize the plan, optionally write a preview clip
// with masked cubes zeroed.

struct MaskOptions {
    std::filesystem::path clip_path;
    MaskStrategy strategy = MaskStrategy::fasking;
    double ratio = 0.9;
    std::uint64_t seed = 0;
    int cube_t = 2, cube_h = 16, cube_w = 16;
    std::filesystem::path out_dir;
    bool preview = false;
};

inline RunReport cmd_mask(const MaskOptions& opt) {
    WallClock clock;
    const VideoClip clip = load_clip(opt.clip_path);
    const TokenGridSpec grid = TokenGridSpec::for_clip(clip.channels, clip.frames, clip.height,
                                                       clip.width, opt.cube_t, opt.cube_h, opt.cube_w);
    const std::vector<RegionLabel> labels = token_region_labels(clip, grid);
    MaskPlan plan = make_plan(opt.strategy, labels, grid, opt.ratio, opt.seed);
    plan.label_histogram.clear();
    for (RegionLabel l : labels) plan.label_histogram[region_name(l)]++;

    std::filesystem::create_directories(opt.out_dir);
    const auto plan_path = opt.out_dir / "plan.json";
    {
        std::ofstream os(plan_path, std::ios::trunc);
        require(bool(os), ErrorKind::io, "mask: cannot write plan.json");
        os << mask_plan_to_json(plan).dump(2) << "\n";
    }

    RunReport report;
    report.command = "mask";
    report.seed = opt.seed;
    report.config = {{"clip", opt.clip_path.string()},
                     {"strategy", mask_strategy_name(opt.strategy)},
                     {"ratio", opt.ratio},
                     {"seed", opt.seed},
                     {"cube_t", opt.cube_t},
                     {"cube_h", opt.cube_h},
                     {"cube_w", opt.cube_w}};
    report.metrics = {{"k", plan.k()}, {"n", plan.n}};
    report.artifacts = {plan_path.string()};

    if (opt.preview) {
        TokenBatch<Scalar> tokens = patchify<Scalar>(clip, grid);
        for (int i = 0; i < plan.k(); ++i) {
            if (!plan.masked[static_cast<std::size_t>(i)]) continue;
            for (int j = 0; j < tokens.values.cols(); ++j) tokens.values(i, j) = 0.0f;
        }
        VideoClip preview = clip;
        preview.pixels = unpatchify(tokens);
        preview.clip_id = clip.clip_id + "-preview";
        const auto preview_path = opt.out_dir / "preview.mclip";
        write_clip(preview, preview_path);
        report.artifacts.push_back(preview_path.string());
    }
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

// ---------------------------------------------------------------------------
// pretrain / features / probe / eval

inline RunReport cmd_pretrain(const ProjectConfig& cfg, const std::filesystem::path& out_override = {}) {
    WallClock clock;
    PretrainOptions opt;
    opt.manifest_path = cfg.manifest;
    opt.train = cfg.train;
    opt.model = cfg.model;
    opt.clip = cfg.clip;
    opt.out_dir = out_override.empty() ? cfg.out_dir : out_override;
    require_arg(!opt.out_dir.empty(), "pretrain: no out_dir configured");
    require_arg(!opt.manifest_path.empty(), "pretrain: no manifest configured");

    const PretrainResult<Scalar> result = pretrain<Scalar>(opt);

    RunReport report;
    report.command = "pretrain";
    report.seed = cfg.train.seed;
    report.config = cfg.raw;
    report.metrics = {{"steps", result.steps},
                      {"first_recon", result.first_loss.recon},
                      {"final_recon", result.final_loss.recon},
                      {"final_adv_g", result.final_loss.adv_g},
                      {"final_adv_d", result.final_loss.adv_d},
                      {"final_total_g", result.final_loss.total_g}};
    report.artifacts = {(opt.out_dir / "final").string(), (opt.out_dir / "train_log.csv").string()};
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

struct FeaturesOptions {
    std::filesystem::path checkpoint_dir;
    std::filesystem::path manifest_path;
    std::filesystem::path out_dir;
    ClipSpec clip;
    int window_stride = 1;
};

inline RunReport cmd_features(const FeaturesOptions& opt) {
    WallClock clock;
    const Checkpoint<Scalar> ckpt = load_checkpoint<Scalar>(opt.checkpoint_dir);
    const DatasetManifest manifest = load_manifest(opt.manifest_path);
    const auto feat_dir = opt.out_dir / "features";
    std::filesystem::create_directories(feat_dir);

    std::ofstream index(opt.out_dir / "features_index.jsonl", std::ios::trunc);
    require(bool(index), ErrorKind::io, "features: cannot write index");
    long windows_total = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const VideoClip clip = load_clip(manifest.entries[i].path);
        const Mat<Scalar> feats = extract_features(ckpt.params, clip, opt.clip, opt.window_stride);
        char name[48];
        std::snprintf(name, sizeof(name), "clip_%05zu.csv", i);
        const auto fpath = feat_dir / name;
        std::ofstream os(fpath, std::ios::trunc);
        require(bool(os), ErrorKind::io, "features: cannot write " + fpath.string());
        for (int r = 0; r < feats.rows(); ++r) {
            for (int c = 0; c < feats.cols(); ++c) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(feats(r, c)));
                os << (c ? "," : "") << buf;
            }
            os << "\n";
        }
        windows_total += feats.rows();
        nlohmann::ordered_json row;
        row["clip"] = manifest.entries[i].path.string();
        row["features"] = fpath.string();
        row["windows"] = feats.rows();
        index << row.dump() << "\n";
    }

    RunReport report;
    report.command = "features";
    report.seed = ckpt.seed;
    report.config = {{"checkpoint", opt.checkpoint_dir.string()},
                     {"manifest", opt.manifest_path.string()},
                     {"window_stride", opt.window_stride}};
    report.metrics = {{"clips", manifest.entries.size()},
                      {"windows", windows_total},
                      {"embed_dim", ckpt.params.config.embed_dim}};
    report.artifacts = {(opt.out_dir / "features_index.jsonl").string()};
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

struct ProbeOptions {
    std::filesystem::path checkpoint_dir;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
    AdaptMode mode = AdaptMode::linear_probe;
    double fraction = 1.0;
    TrainConfig train = TrainConfig::downstream_defaults();
    ClipSpec clip;
    int window_stride = 1;
    std::filesystem::path out_dir;
};

inline RunReport cmd_probe(const ProbeOptions& opt) {
    WallClock clock;
    const Checkpoint<Scalar> ckpt = load_checkpoint<Scalar>(opt.checkpoint_dir);
    DatasetManifest train_manifest = load_manifest(opt.train_manifest);
    const DatasetManifest test_manifest = load_manifest(opt.test_manifest);
    if (opt.fraction < 1.0)
        train_manifest = few_shot_subset(train_manifest, opt.fraction, opt.train.seed);

    AdaptOptions adapt;
    adapt.mode = opt.mode;
    adapt.train = opt.train;
    adapt.clip = opt.clip;
    adapt.window_stride = opt.window_stride;
    const AdaptResult<Scalar> result = adapt_downstream(ckpt.params, train_manifest, adapt);

    const Metrics metrics = evaluate(result.head, result.params, test_manifest, opt.clip, opt.window_stride);

    std::filesystem::create_directories(opt.out_dir);
    save_head(result.head, opt.out_dir / "head");
    if (opt.mode == AdaptMode::fine_tune)
        save_checkpoint(result.params, opt.out_dir / "encoder_ft", ckpt.step, ckpt.epoch, opt.train.seed);

    RunReport report;
    report.command = "probe";
    report.seed = opt.train.seed;
    report.config = {{"checkpoint", opt.checkpoint_dir.string()},
                     {"train_manifest", opt.train_manifest.string()},
                     {"test_manifest", opt.test_manifest.string()},
                     {"mode", adapt_mode_name(opt.mode)},
                     {"fraction", opt.fraction},
                     {"train", train_config_to_json(opt.train)},
                     {"window_stride", opt.window_stride}};
    report.metrics = {{"accuracy", metrics.accuracy},
                      {"test_size", metrics.sample_count},
                      {"effective_train_size", train_manifest.entries.size()}};
    if (metrics.mean_auc) report.metrics["mean_auc"] = *metrics.mean_auc;
    auto aucs = nlohmann::ordered_json::array();
    for (const auto& a : metrics.auc_per_output) {
        if (a) aucs.push_back(*a);
        else aucs.push_back(nullptr);
    }
    report.metrics["auc_per_output"] = aucs;
    report.artifacts = {(opt.out_dir / "head").string()};
    if (opt.mode == AdaptMode::fine_tune) report.artifacts.push_back((opt.out_dir / "encoder_ft").string());
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

struct EvalOptions {
    std::filesystem::path checkpoint_dir;
    std::filesystem::path head_dir;
    std::filesystem::path test_manifest;
    ClipSpec clip;
    int window_stride = 1;
    std::filesystem::path out_dir;
};

inline RunReport cmd_eval(const EvalOptions& opt) {
    WallClock clock;
    const Checkpoint<Scalar> ckpt = load_checkpoint<Scalar>(opt.checkpoint_dir);
    const DownstreamHead<Scalar> head = load_head<Scalar>(opt.head_dir);
    const DatasetManifest test_manifest = load_manifest(opt.test_manifest);
    const Metrics metrics = evaluate(head, ckpt.params, test_manifest, opt.clip, opt.window_stride);

    RunReport report;
    report.command = "eval";
    report.seed = ckpt.seed;
    report.config = {{"checkpoint", opt.checkpoint_dir.string()},
                     {"head", opt.head_dir.string()},
                     {"test_manifest", opt.test_manifest.string()},
                     {"window_stride", opt.window_stride}};
    report.metrics = {{"accuracy", metrics.accuracy}, {"test_size", metrics.sample_count}};
    if (metrics.mean_auc) report.metrics["mean_auc"] = *metrics.mean_auc;
    report.wall_clock_sec = clock.seconds();
    write_report(report, opt.out_dir);
    return report;
}

// ---------------------------------------------------------------------------
// Ablation harnesses: repeat pretrain+probe per setting with shared seeds,
// one CSV row per setting, flushed as each setting completes.

namespace detail {

struct AblationRow {
    std::string setting;
    std::uint64_t seed;
    double accuracy;
    double mean_auc;
    double final_recon;
};

inline AblationRow run_setting(const ProjectConfig& base, const std::string& setting_name,
                               const TrainConfig& train, const std::filesystem::path& setting_dir) {
    ProjectConfig cfg = base;
    cfg.train = train;
    const RunReport pre = cmd_pretrain(cfg, setting_dir / "pretrain");

    ProbeOptions probe;
    probe.checkpoint_dir = setting_dir / "pretrain" / "final";
    probe.train_manifest = cfg.probe_train_manifest;
    probe.test_manifest = cfg.probe_test_manifest;
    probe.mode = cfg.probe_mode;
    probe.fraction = cfg.probe_fraction;
    probe.train = cfg.probe_train;
    probe.clip = cfg.clip;
    probe.window_stride = cfg.window_stride;
    probe.out_dir = setting_dir / "probe";
    const RunReport pr = cmd_probe(probe);

    AblationRow row;
    row.setting = setting_name;
    row.seed = train.seed;
    row.accuracy = pr.metrics.at("accuracy").get<double>();
    row.mean_auc = pr.metrics.contains("mean_auc") ? pr.metrics.at("mean_auc").get<double>() : 0.0;
    row.final_recon = pre.metrics.at("final_recon").get<double>();
    if (verbose_logging()) {
        std::fprintf(stderr, "[ablate] setting %s: accuracy %.4f mean_auc %.4f recon %.6g\n",
                     setting_name.c_str(), row.accuracy, row.mean_auc, row.final_recon);
    }
    return row;
}

}  // namespace detail

inline RunReport cmd_ablate_ratio(const ProjectConfig& cfg, const std::vector<double>& ratios,
                                  const std::filesystem::path& out_dir) {
    WallClock clock;
    require_arg(!ratios.empty(), "ablate-ratio: empty ratio list");
    require_arg(!cfg.probe_train_manifest.empty() && !cfg.probe_test_manifest.empty(),
                "ablate-ratio: config needs probe.train_manifest and probe.test_manifest");
    std::filesystem::create_directories(out_dir);
    const auto csv_path = out_dir / "ablate_ratio.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    require(bool(csv), ErrorKind::io, "ablate-ratio: cannot write CSV");
    csv << "ratio,seed,accuracy,mean_auc,final_recon\n";
    csv.flush();

    for (double r : ratios) {
        TrainConfig train = cfg.train;
        train.mask_ratio = r;
        char label[32];
        std::snprintf(label, sizeof(label), "%.4g", r);
        const auto row = detail::run_setting(cfg, label, train, out_dir / ("ratio_" + std::string(label)));
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.6g,%.6g,%.6g\n", row.setting.c_str(),
                      static_cast<unsigned long long>(row.seed), row.accuracy, row.mean_auc,
                      row.final_recon);
        csv << buf;
        csv.flush();
    }

    RunReport report;
    report.command = "ablate-ratio";
    report.seed = cfg.train.seed;
    report.config = cfg.raw;
    report.config["ratios"] = ratios;
    report.metrics = {{"settings", ratios.size()}};
    report.artifacts = {csv_path.string()};
    report.wall_clock_sec = clock.seconds();
    write_report(report, out_dir);
    return report;
}

inline RunReport cmd_ablate_strategy(const ProjectConfig& cfg, const std::vector<std::string>& strategies,
                                     const std::filesystem::path& out_dir) {
    WallClock clock;
    require_arg(!strategies.empty(), "ablate-strategy: empty strategy list");
    require_arg(!cfg.probe_train_manifest.empty() && !cfg.probe_test_manifest.empty(),
                "ablate-strategy: config needs probe.train_manifest and probe.test_manifest");
    std::filesystem::create_directories(out_dir);
    const auto csv_path = out_dir / "ablate_strategy.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    require(bool(csv), ErrorKind::io, "ablate-strategy: cannot write CSV");
    csv << "strategy,seed,accuracy,mean_auc,final_recon\n";
    csv.flush();

    for (const std::string& name : strategies) {
        TrainConfig train = cfg.train;
        train.mask_strategy = parse_mask_strategy(name);
        const auto row = detail::run_setting(cfg, name, train, out_dir / ("strategy_" + name));
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.6g,%.6g,%.6g\n", row.setting.c_str(),
                      static_cast<unsigned long long>(row.seed), row.accuracy, row.mean_auc,
                      row.final_recon);
        csv << buf;
        csv.flush();
    }

    RunReport report;
    report.command = "ablate-strategy";
    report.seed = cfg.train.seed;
    report.config = cfg.raw;
    report.config["strategies"] = strategies;
    report.metrics = {{"settings", strategies.size()}};
    report.artifacts = {csv_path.string()};
    report.wall_clock_sec = clock.seconds();
    write_report(report, out_dir);
    return report;
}

}  // namespace marlin::cli
