// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marlin/clip.hpp"
#include "marlin/losses.hpp"
#include "marlin/masking.hpp"
#include "marlin/model.hpp"
#include "marlin/optim.hpp"
#include "marlin/synth.hpp"
#include "marlin/tokenizer.hpp"

namespace marlin {

struct TrainConfig {
    double base_lr = 1.5e-4;
    int batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    LrSchedule schedule = LrSchedule::cosine;
    int epochs = 1;
    double lambda_w = 0.1;
    double mask_ratio = 0.9;
    MaskStrategy mask_strategy = MaskStrategy::fasking;
    double clip_value = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        require_arg(base_lr > 0.0, "train config: base_lr must be positive");
        require_arg(batch_size >= 1, "train config: batch_size must be >= 1");
        require_arg(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                    "train config: betas must lie in [0,1)");
        require_arg(weight_decay >= 0.0, "train config: weight_decay must be >= 0");
        require_arg(epochs >= 1, "train config: epochs must be >= 1");
        require_arg(lambda_w >= 0.0, "train config: lambda_w must be >= 0");
        require_arg(mask_ratio >= 0.0 && mask_ratio <= 1.0, "train config: mask_ratio must lie in [0,1]");
        require_arg(clip_value > 0.0, "train config: clip_value must be positive");
    }

    // Downstream defaults: Adam betas 0.5/0.9, lr 1e-4, no weight decay.
    static TrainConfig downstream_defaults() {
        TrainConfig c;
        c.base_lr = 1e-4;
        c.beta1 = 0.5;
        c.beta2 = 0.9;
        c.weight_decay = 0.0;
        c.schedule = LrSchedule::constant;
        c.batch_size = 16;
        c.epochs = 100;
        return c;
    }
};

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["base_lr"] = c.base_lr;
    j["batch_size"] = c.batch_size;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["weight_decay"] = c.weight_decay;
    j["schedule"] = lr_schedule_name(c.schedule);
    j["epochs"] = c.epochs;
    j["lambda_w"] = c.lambda_w;
    j["mask_ratio"] = c.mask_ratio;
    j["mask_strategy"] = mask_strategy_name(c.mask_strategy);
    j["clip_value"] = c.clip_value;
    j["seed"] = c.seed;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    TrainConfig c = base;
    if (j.contains("base_lr")) c.base_lr = j["base_lr"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("schedule")) c.schedule = parse_lr_schedule(j["schedule"].get<std::string>());
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("lambda_w")) c.lambda_w = j["lambda_w"].get<double>();
    if (j.contains("mask_ratio")) c.mask_ratio = j["mask_ratio"].get<double>();
    if (j.contains("mask_strategy"))
        c.mask_strategy = parse_mask_strategy(j["mask_strategy"].get<std::string>());
    if (j.contains("clip_value")) c.clip_value = j["clip_value"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Pre-training: alternating discriminator / generator
// phases over one shared set of per-clip mask plans.

template <typename S>
struct TrainState {
    ModelParams<S> params;
    AdamW<S> opt_gen;
    AdamW<S> opt_disc;
    long step = 0;
    long total_steps = 0;  // 0 -> constant-rate fallback inside lr_for_step

    TrainState(ModelParams<S> p, const TrainConfig& c)
        : params(std::move(p)),
          opt_gen(c.beta1, c.beta2, c.weight_decay),
          opt_disc(c.beta1, c.beta2, c.weight_decay) {}
};

namespace detail {

inline std::uint64_t plan_seed(std::uint64_t base, long step, int clip_index) {
    return derive_seed(derive_seed(base, 0x9d1a + static_cast<std::uint64_t>(step)),
                       static_cast<std::uint64_t>(clip_index));
}

template <typename S>
double lr_for_step(const TrainState<S>& state, const TrainConfig& config) {
    if (state.total_steps <= 0)
        return lr_at(0, 0, config.base_lr, config.batch_size, LrSchedule::constant);
    const long s = std::min(state.step, state.total_steps);
    return lr_at(s, state.total_steps, config.base_lr, config.batch_size, config.schedule);
}

template <typename S>
void clamp_discriminator(ModelParams<S>& params, double clip_value) {
    const S lo = static_cast<S>(-clip_value), hi = static_cast<S>(clip_value);
    for (auto& t : params.tensors) {
        if (t.group != ParamGroup::discriminator) continue;
        S* p = t.value.data();
        for (std::size_t i = 0; i < t.value.size(); ++i) p[i] = std::clamp(p[i], lo, hi);
    }
}

}  // namespace detail

template <typename S>
struct StepInputs {
    std::vector<TokenBatch<S>> tokens;
    std::vector<MaskPlan> plans;
};

// Tokenize a batch of sampled clips and build their mask plans. One plan per
// clip, seeded from (config seed, global step, clip index).
template <typename S>
StepInputs<S> prepare_step_inputs(const std::vector<VideoClip>& batch, const ModelConfig& model,
                                  const TrainConfig& config, long step) {
    require_arg(!batch.empty(), "pretrain step: empty batch");
    StepInputs<S> in;
    in.tokens.reserve(batch.size());
    in.plans.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const VideoClip& clip = batch[i];
        in.tokens.push_back(patchify<S>(clip, model.grid));
        const std::vector<RegionLabel> labels = token_region_labels(clip, model.grid);
        in.plans.push_back(make_plan(config.mask_strategy, labels, model.grid, config.mask_ratio,
                                     detail::plan_seed(config.seed, step, static_cast<int>(i))));
    }
    return in;
}

// Phase 1: critic update. The generator enters the graph as detached inputs,
// so only phi_Gamma receives gradients; afterwards every discriminator weight
// is clamped to [-clip_value, clip_value].
template <typename S>
double pretrain_disc_phase(TrainState<S>& state, const StepInputs<S>& in, const TrainConfig& config) {
    const ModelConfig& model = state.params.config;
    Graph<S> g;
    ModelVars<S> vars = register_model(g, state.params, false, false, true);

    std::vector<typename Graph<S>::VarId> real_scores, fake_scores;
    for (std::size_t i = 0; i < in.tokens.size(); ++i) {
        const SplitTokens<S> split = split_tokens(in.tokens[i].values, in.plans[i]);
        require_arg(split.masked.rows() >= 1, "pretrain step: plan leaves no masked tokens");
        const auto z = encode_graph(g, vars, model, g.input(split.visible), split.visible_indices);
        const auto rec = decode_graph(g, vars, model, z, split.visible_indices, split.masked_indices);
        real_scores.push_back(discriminate_graph(g, vars, model, g.input(split.masked)));
        fake_scores.push_back(discriminate_graph(g, vars, model, rec));
    }
    const auto loss =
        g.sub(g.mean_all(g.concat_rows(fake_scores)), g.mean_all(g.concat_rows(real_scores)));
    g.backward(loss);

    const double lr = detail::lr_for_step(state, config);
    for (auto& t : state.params.tensors) {
        if (t.group != ParamGroup::discriminator || !t.trainable) continue;
        state.opt_disc.step_tensor(t, g.grad(vars.at(t.name)), lr);
    }
    detail::clamp_discriminator(state.params, config.clip_value);
    return static_cast<double>(g.value(loss)(0, 0));
}

// Phase 2: generator update on the same plans with a fresh forward pass. With
// lambda_w = 0 the adversarial branch is not built and the update is exactly
// a masked-autoencoder step.
template <typename S>
std::pair<double, double> pretrain_gen_phase(TrainState<S>& state, const StepInputs<S>& in,
                                             const TrainConfig& config) {
    const ModelConfig& model = state.params.config;
    Graph<S> g;
    ModelVars<S> vars = register_model(g, state.params, true, true, false);

    typename Graph<S>::VarId recon_acc = -1;
    std::vector<typename Graph<S>::VarId> fake_scores;
    std::vector<Mat<S>> reconstructions;  // kept only for the lambda=0 report
    for (std::size_t i = 0; i < in.tokens.size(); ++i) {
        const SplitTokens<S> split = split_tokens(in.tokens[i].values, in.plans[i]);
        require_arg(split.masked.rows() >= 1, "pretrain step: plan leaves no masked tokens");
        const auto z = encode_graph(g, vars, model, g.input(split.visible), split.visible_indices);
        const auto rec = decode_graph(g, vars, model, z, split.visible_indices, split.masked_indices);
        const auto clip_mse = g.mse(rec, g.input(split.masked));
        recon_acc = i == 0 ? clip_mse : g.add(recon_acc, clip_mse);
        if (config.lambda_w > 0.0) fake_scores.push_back(discriminate_graph(g, vars, model, rec));
        else reconstructions.push_back(g.value(rec));
    }
    const auto recon = g.scale(recon_acc, S(1) / static_cast<S>(in.tokens.size()));

    typename Graph<S>::VarId total = recon;
    double adv_g_value;
    if (config.lambda_w > 0.0) {
        const auto adv_g = g.scale(g.mean_all(g.concat_rows(fake_scores)), S(-1));
        total = g.add_scaled(recon, adv_g, static_cast<S>(config.lambda_w));
        adv_g_value = static_cast<double>(g.value(adv_g)(0, 0));
    } else {
        // Adversarial term is reported but takes no part in the update.
        double acc = 0.0;
        std::size_t count = 0;
        for (const Mat<S>& rec : reconstructions) {
            const std::vector<S> scores = discriminate(state.params, rec);
            for (S s : scores) acc += static_cast<double>(s);
            count += scores.size();
        }
        adv_g_value = count > 0 ? -acc / static_cast<double>(count) : 0.0;
    }
    g.backward(total);

    const double lr = detail::lr_for_step(state, config);
    for (auto& t : state.params.tensors) {
        if (!t.trainable || (t.group != ParamGroup::encoder && t.group != ParamGroup::decoder)) continue;
        state.opt_gen.step_tensor(t, g.grad(vars.at(t.name)), lr);
    }
    return {static_cast<double>(g.value(recon)(0, 0)), adv_g_value};
}

// Critic phase then fresh generator phase over precomputed step inputs.
template <typename S>
LossReport pretrain_step_on(TrainState<S>& state, const StepInputs<S>& in, const TrainConfig& config) {
    config.validate();
    const double adv_d = pretrain_disc_phase(state, in, config);
    const auto [recon, adv_g] = pretrain_gen_phase(state, in, config);
    state.step += 1;
    if (!std::isfinite(recon) || !std::isfinite(adv_g) || !std::isfinite(adv_d)) {
        throw Error::numeric("pretrain step " + std::to_string(state.step) +
                             ": non-finite loss (recon=" + std::to_string(recon) +
                             ", adv_g=" + std::to_string(adv_g) + ", adv_d=" + std::to_string(adv_d) + ")");
    }
    return combine(recon, adv_g, adv_d, config.lambda_w);
}

// One full pre-training step: plans, critic phase, fresh generator phase.
template <typename S>
LossReport pretrain_step(TrainState<S>& state, const std::vector<VideoClip>& batch,
                         const TrainConfig& config) {
    const StepInputs<S> in = prepare_step_inputs<S>(batch, state.params.config, config, state.step);
    return pretrain_step_on(state, in, config);
}

struct PretrainOptions {
    std::filesystem::path manifest_path;
    TrainConfig train;
    ModelConfig model;
    ClipSpec clip;
    std::filesystem::path out_dir;
    bool checkpoint_every_epoch = true;
};

namespace detail {

inline void append_log_row(std::ofstream& os, long epoch, long step, const LossReport& r, double lr) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%ld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", epoch, step,
                  r.recon, r.adv_g, r.adv_d, r.total_g, r.total_d, lr);
    os << buf;
}

}  // namespace detail

template <typename S>
struct PretrainResult {
    Checkpoint<S> checkpoint;
    LossReport first_loss;
    LossReport final_loss;
    long steps = 0;
};

// Full pre-training loop: epochs of shuffled batches of temporally sampled
// clips, CSV loss log, checkpoint per epoch plus a final checkpoint.
// Everything is a pure function of (manifest, config, seed).
template <typename S>
PretrainResult<S> pretrain(const PretrainOptions& opt) {
    opt.train.validate();
    opt.model.validate();
    const DatasetManifest manifest = load_manifest(opt.manifest_path);
    require_arg(!manifest.entries.empty(), "pretrain: empty manifest");

    std::vector<VideoClip> sources;
    sources.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) sources.push_back(load_clip(e.path));

    const int n = static_cast<int>(sources.size());
    const int batch = std::min(opt.train.batch_size, n);
    const long steps_per_epoch = n / batch;
    require_arg(steps_per_epoch >= 1, "pretrain: dataset smaller than one batch");

    TrainState<S> state(init_params<S>(opt.model, opt.train.seed), opt.train);
    state.total_steps = steps_per_epoch * opt.train.epochs;

    std::filesystem::create_directories(opt.out_dir);
    std::ofstream log(opt.out_dir / "train_log.csv", std::ios::trunc);
    require(bool(log), ErrorKind::io, "pretrain: cannot open training log");
    log << "epoch,step,recon,adv_g,adv_d,total_g,total_d,lr\n";
    std::ofstream plan_log(opt.out_dir / "mask_plans.jsonl", std::ios::trunc);
    require(bool(plan_log), ErrorKind::io, "pretrain: cannot open mask plan log");

    PretrainResult<S> result;
    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        Rng shuffle_rng(derive_seed(opt.train.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (long b = 0; b < steps_per_epoch; ++b) {
            std::vector<VideoClip> clips;
            clips.reserve(static_cast<std::size_t>(batch));
            for (int j = 0; j < batch; ++j) {
                const int src = order[static_cast<std::size_t>(b * batch + j)];
                Rng sample_rng(derive_seed(opt.train.seed, 0x5a17 + static_cast<std::uint64_t>(state.step),
                                           static_cast<std::uint64_t>(src)));
                clips.push_back(sample_clip(sources[static_cast<std::size_t>(src)], opt.clip, sample_rng));
            }
            const double lr = detail::lr_for_step(state, opt.train);
            const StepInputs<S> inputs =
                prepare_step_inputs<S>(clips, state.params.config, opt.train, state.step);
            for (std::size_t i = 0; i < inputs.plans.size(); ++i) {
                nlohmann::ordered_json row;
                row["step"] = state.step;
                row["clip"] = i;
                row["plan"] = mask_plan_to_json(inputs.plans[i]);
                plan_log << row.dump() << "\n";
            }
            LossReport report;
            try {
                report = pretrain_step_on(state, inputs, opt.train);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::numeric) {
                    save_checkpoint(state.params, opt.out_dir / "diagnostic", state.step, epoch,
                                    opt.train.seed);
                }
                throw;
            }
            if (state.step == 1) result.first_loss = report;
            result.final_loss = report;
            detail::append_log_row(log, epoch, state.step - 1, report, lr);
        }
        log.flush();
        plan_log.flush();
        if (verbose_logging()) {
            std::fprintf(stderr, "[pretrain] epoch %d/%d step %ld recon %.6g total_g %.6g\n",
                         epoch + 1, opt.train.epochs, state.step, result.final_loss.recon,
                         result.final_loss.total_g);
        }
        if (opt.checkpoint_every_epoch) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
            save_checkpoint(state.params, opt.out_dir / name, state.step, epoch, opt.train.seed);
        }
    }
    save_checkpoint(state.params, opt.out_dir / "final", state.step, opt.train.epochs - 1,
                    opt.train.seed);
    result.checkpoint.params = std::move(state.params);
    result.checkpoint.step = state.step;
    result.checkpoint.epoch = opt.train.epochs - 1;
    result.checkpoint.seed = opt.train.seed;
    result.steps = state.step;
    return result;
}

// ---------------------------------------------------------------------------
// Feature extraction: sliding temporal window, full (unmasked) encoder pass,
// mean pooling over token outputs. One row per window.

template <typename S>
Mat<S> extract_features(const ModelParams<S>& params, const VideoClip& source, const ClipSpec& spec,
                        int window_stride) {
    require_arg(window_stride >= 1, "extract_features: window_stride must be >= 1");
    const int span = spec.frames * spec.temporal_stride;
    require_arg(source.frames >= span, "extract_features: input shorter than one window");

    const int k = params.config.grid.tokens();
    std::vector<int> all_positions(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) all_positions[static_cast<std::size_t>(i)] = i;

    std::vector<Mat<S>> rows;
    for (int start = 0; start + span <= source.frames; start += window_stride) {
        const VideoClip window = slice_clip(source, spec, start);
        const TokenBatch<S> tokens = patchify<S>(window, params.config.grid);
        const Mat<S> z = encode(params, tokens.values, all_positions);
        Mat<S> pooled(1, z.cols());
        for (int i = 0; i < z.rows(); ++i)
            for (int j = 0; j < z.cols(); ++j) pooled(0, j) += z(i, j);
        for (int j = 0; j < z.cols(); ++j) pooled(0, j) /= static_cast<S>(z.rows());
        rows.push_back(std::move(pooled));
    }
    Mat<S> out(static_cast<int>(rows.size()), params.config.embed_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(static_cast<int>(i), j) = rows[i](0, j);
    return out;
}

// Per-clip feature: mean over window features.
template <typename S>
Mat<S> clip_feature(const ModelParams<S>& params, const VideoClip& source, const ClipSpec& spec,
                    int window_stride) {
    const Mat<S> windows = extract_features(params, source, spec, window_stride);
    Mat<S> out(1, windows.cols());
    for (int i = 0; i < windows.rows(); ++i)
        for (int j = 0; j < windows.cols(); ++j) out(0, j) += windows(i, j);
    for (int j = 0; j < windows.cols(); ++j) out(0, j) /= static_cast<S>(windows.rows());
    return out;
}

// ---------------------------------------------------------------------------
// Downstream adaptation.

enum class AdaptMode { linear_probe, fine_tune };

inline const char* adapt_mode_name(AdaptMode m) {
    return m == AdaptMode::linear_probe ? "lp" : "ft";
}

inline AdaptMode parse_adapt_mode(const std::string& name) {
    if (name == "lp" || name == "LP") return AdaptMode::linear_probe;
    if (name == "ft" || name == "FT") return AdaptMode::fine_tune;
    throw Error::invalid("unknown adaptation mode: " + name + " (expected lp or ft)");
}

template <typename S>
struct DownstreamHead {
    Mat<S> weight;  // embed_dim x num_outputs
    Mat<S> bias;    // 1 x num_outputs
    TaskInfo task;
};

template <typename S>
DownstreamHead<S> init_head(int embed_dim, const TaskInfo& task, std::uint64_t seed) {
    require_arg(task.num_outputs >= 1, "head: num_outputs must be >= 1");
    Rng rng(derive_seed(seed, 0x4ead));
    DownstreamHead<S> h;
    h.weight = Mat<S>::trunc_normal(embed_dim, task.num_outputs, kInitStd, rng);
    h.bias = Mat<S>(1, task.num_outputs);
    h.task = task;
    return h;
}

template <typename S>
void save_head(const DownstreamHead<S>& head, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["kind"] = "head";
    manifest["task"] = {{"kind", head.task.kind}, {"num_outputs", head.task.num_outputs}};
    manifest["tensors"] = {{{"name", "head.weight"}, {"rows", head.weight.rows()}, {"cols", head.weight.cols()}},
                           {{"name", "head.bias"}, {"rows", 1}, {"cols", head.bias.cols()}}};
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    require(bool(os), ErrorKind::io, "head: cannot write manifest");
    os << manifest.dump(2) << "\n";
    for (const auto& [name, mat] : {std::pair<std::string, const Mat<S>*>{"head.weight", &head.weight},
                                    std::pair<std::string, const Mat<S>*>{"head.bias", &head.bias}}) {
        const Mat<float> blob = mat->template cast<float>();
        std::ofstream bs(dir / (name + ".bin"), std::ios::binary | std::ios::trunc);
        require(bool(bs), ErrorKind::io, "head: cannot write " + name);
        bs.write(reinterpret_cast<const char*>(blob.data()),
                 static_cast<std::streamsize>(blob.size() * sizeof(float)));
    }
}

template <typename S>
DownstreamHead<S> load_head(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    require(bool(is), ErrorKind::io, "head: missing manifest in " + dir.string());
    nlohmann::json manifest;
    is >> manifest;
    require(manifest.value("kind", "") == "head", ErrorKind::format, "head: wrong manifest kind");
    DownstreamHead<S> h;
    h.task.kind = manifest.at("task").at("kind").get<std::string>();
    h.task.num_outputs = manifest.at("task").at("num_outputs").get<int>();
    for (const auto& tj : manifest.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        Mat<float> blob(tj.at("rows").get<int>(), tj.at("cols").get<int>());
        std::ifstream bs(dir / (name + ".bin"), std::ios::binary);
        require(bool(bs), ErrorKind::io, "head: missing blob " + name);
        bs.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(blob.size() * sizeof(float)));
        require(bool(bs), ErrorKind::format, "head: blob size mismatch for " + name);
        if (name == "head.weight") h.weight = blob.cast<S>();
        else if (name == "head.bias") h.bias = blob.cast<S>();
    }
    return h;
}

namespace detail {

inline int multiclass_target(const std::vector<double>& label, int num_outputs) {
    require_arg(label.size() == 1, "multiclass label must be a length-1 vector holding the class index");
    const int cls = static_cast<int>(label[0]);
    require_arg(cls >= 0 && cls < num_outputs && label[0] == cls, "class index out of range");
    return cls;
}

struct LabeledSet {
    std::vector<VideoClip> clips;
    std::vector<std::vector<double>> labels;
    TaskInfo task;
};

inline LabeledSet load_labeled(const DatasetManifest& manifest) {
    require_arg(manifest.task.has_value(), "manifest lacks task metadata");
    require_arg(manifest.labeled(), "manifest entries lack labels");
    LabeledSet set;
    set.task = *manifest.task;
    for (const auto& e : manifest.entries) {
        set.clips.push_back(load_clip(e.path));
        if (set.task.kind == "multilabel")
            require_arg(e.label->size() == static_cast<std::size_t>(set.task.num_outputs),
                        "multilabel vector width must equal num_outputs");
        set.labels.push_back(*e.label);
    }
    return set;
}

}  // namespace detail

struct AdaptOptions {
    AdaptMode mode = AdaptMode::linear_probe;
    TrainConfig train = TrainConfig::downstream_defaults();
    ClipSpec clip;
    int window_stride = 1;
};

template <typename S>
struct AdaptResult {
    DownstreamHead<S> head;
    ModelParams<S> params;  // updated encoder for FT, unchanged for LP
};

// Linear probing: frozen encoder features -> linear head. Fine-tuning:
// encoder and head trained jointly on unmasked token sequences. The decoder
// and discriminator are never touched.
//
// The head optimizes against per-dimension standardized features (statistics
// frozen from the initial encoder over the training set); the affine
// transform is folded into the saved head, which therefore stays a pure
// linear map on raw features. Pooled encoder features carry O(1) means with
// much smaller spread, and a head fit on raw features stalls on that offset.
template <typename S>
AdaptResult<S> adapt_downstream(const ModelParams<S>& pretrained, const DatasetManifest& manifest,
                                const AdaptOptions& opt) {
    opt.train.validate();
    const detail::LabeledSet set = detail::load_labeled(manifest);
    const int n = static_cast<int>(set.clips.size());
    require_arg(n >= 1, "downstream: empty training manifest");
    const int batch = std::min(opt.train.batch_size, n);
    const long steps_per_epoch = n / batch;
    const int dim = pretrained.config.embed_dim;

    AdaptResult<S> result{init_head<S>(dim, set.task, opt.train.seed), pretrained};
    AdamW<S> opt_head(opt.train.beta1, opt.train.beta2, opt.train.weight_decay);
    AdamW<S> opt_enc(opt.train.beta1, opt.train.beta2, opt.train.weight_decay);
    const long total_steps = steps_per_epoch * opt.train.epochs;

    const bool multilabel = set.task.kind == "multilabel";

    // Initial-encoder features over the whole training set: the LP input and
    // the source of the standardization statistics.
    Mat<S> base_features(n, dim);
    for (int i = 0; i < n; ++i) {
        const Mat<S> f =
            clip_feature(pretrained, set.clips[static_cast<std::size_t>(i)], opt.clip, opt.window_stride);
        for (int j = 0; j < f.cols(); ++j) base_features(i, j) = f(0, j);
    }
    Mat<S> feat_mean(1, dim), feat_inv_std(1, dim);
    for (int j = 0; j < dim; ++j) {
        S mu = 0;
        for (int i = 0; i < n; ++i) mu += base_features(i, j);
        mu /= static_cast<S>(n);
        S var = 0;
        for (int i = 0; i < n; ++i) {
            const S d = base_features(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<S>(n);
        feat_mean(0, j) = mu;
        feat_inv_std(0, j) = S(1) / std::max(std::sqrt(var), static_cast<S>(1e-6));
    }
    // standardization as a fixed linear layer: f_std = f * diag(inv_std) + shift
    Mat<S> scale_diag(dim, dim);
    Mat<S> shift(1, dim);
    for (int j = 0; j < dim; ++j) {
        scale_diag(j, j) = feat_inv_std(0, j);
        shift(0, j) = -feat_mean(0, j) * feat_inv_std(0, j);
    }

    long step = 0;
    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        Rng shuffle_rng(derive_seed(opt.train.seed, 0xd0e5, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (long b = 0; b < steps_per_epoch; ++b, ++step) {
            const double lr =
                lr_at(std::min(step, total_steps), total_steps, opt.train.base_lr, batch, opt.train.schedule);
            Graph<S> g;
            const bool train_encoder = opt.mode == AdaptMode::fine_tune;
            ModelVars<S> vars = register_model(g, result.params, train_encoder, false, false);
            const auto w = g.param(result.head.weight);
            const auto bias = g.param(result.head.bias);

            std::vector<int> targets_mc;
            Mat<S> targets_ml(batch, set.task.num_outputs);
            typename Graph<S>::VarId feats;
            if (opt.mode == AdaptMode::linear_probe) {
                std::vector<int> rows(static_cast<std::size_t>(batch));
                for (int j = 0; j < batch; ++j) rows[static_cast<std::size_t>(j)] = order[static_cast<std::size_t>(b * batch + j)];
                feats = g.gather_rows(g.input(base_features), rows);
            } else {
                std::vector<typename Graph<S>::VarId> pooled;
                const int k = result.params.config.grid.tokens();
                std::vector<int> all_positions(static_cast<std::size_t>(k));
                for (int i = 0; i < k; ++i) all_positions[static_cast<std::size_t>(i)] = i;
                for (int j = 0; j < batch; ++j) {
                    const int idx = order[static_cast<std::size_t>(b * batch + j)];
                    const VideoClip window =
                        slice_clip(set.clips[static_cast<std::size_t>(idx)], opt.clip, 0);
                    const TokenBatch<S> tokens = patchify<S>(window, result.params.config.grid);
                    const auto z = encode_graph(g, vars, result.params.config, g.input(tokens.values),
                                                all_positions);
                    pooled.push_back(g.mean_rows(z));
                }
                feats = g.concat_rows(pooled);
            }
            for (int j = 0; j < batch; ++j) {
                const int idx = order[static_cast<std::size_t>(b * batch + j)];
                const auto& label = set.labels[static_cast<std::size_t>(idx)];
                if (multilabel) {
                    for (int c = 0; c < set.task.num_outputs; ++c)
                        targets_ml(j, c) = static_cast<S>(label[static_cast<std::size_t>(c)]);
                } else {
                    targets_mc.push_back(detail::multiclass_target(label, set.task.num_outputs));
                }
            }

            const auto std_feats =
                g.add_row_broadcast(g.matmul(feats, g.input(scale_diag)), g.input(shift));
            const auto logits = g.add_row_broadcast(g.matmul(std_feats, w), bias);
            const auto loss = multilabel ? g.sigmoid_bce(logits, targets_ml)
                                         : g.softmax_cross_entropy(logits, targets_mc);
            g.backward(loss);
            require(std::isfinite(static_cast<double>(g.value(loss)(0, 0))), ErrorKind::numeric,
                    "downstream: non-finite loss");

            NamedTensor<S> wt{"head.weight", ParamGroup::head, true, result.head.weight};
            NamedTensor<S> bt{"head.bias", ParamGroup::head, true, result.head.bias};
            opt_head.step_tensor(wt, g.grad(w), lr);
            opt_head.step_tensor(bt, g.grad(bias), lr);
            result.head.weight = wt.value;
            result.head.bias = bt.value;
            if (train_encoder) {
                for (auto& t : result.params.tensors) {
                    if (t.group != ParamGroup::encoder || !t.trainable) continue;
                    opt_enc.step_tensor(t, g.grad(vars.at(t.name)), lr);
                }
            }
        }
    }

    // fold the standardization into the stored head: raw_logits = f*(S*W) + (shift*W + b)
    Mat<S> folded_w(dim, set.task.num_outputs);
    Mat<S> folded_b = result.head.bias;
    for (int j = 0; j < dim; ++j)
        for (int c = 0; c < set.task.num_outputs; ++c)
            folded_w(j, c) = feat_inv_std(0, j) * result.head.weight(j, c);
    for (int c = 0; c < set.task.num_outputs; ++c)
        for (int j = 0; j < dim; ++j) folded_b(0, c) += shift(0, j) * result.head.weight(j, c);
    result.head.weight = std::move(folded_w);
    result.head.bias = std::move(folded_b);
    return result;
}

// Stratified few-shot subsetting: per label-group, a seed-fixed permutation
// prefix of ceil(fraction * count) entries. Prefixes nest, so
// subset(0.1) is contained in subset(0.5) under one seed. Original manifest
// order is preserved in the output.
inline DatasetManifest few_shot_subset(const DatasetManifest& manifest, double fraction,
                                       std::uint64_t seed) {
    require_arg(fraction > 0.0 && fraction <= 1.0, "few_shot_subset: fraction must lie in (0,1]");
    require_arg(manifest.labeled(), "few_shot_subset: manifest must be labeled");

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const nlohmann::json key = *manifest.entries[i].label;
        groups[key.dump()].push_back(i);
    }

    std::vector<std::size_t> chosen;
    for (auto& [key, ids] : groups) {
        Rng rng(derive_seed(seed, fnv1a64(key)));
        rng.shuffle(ids);
        const std::size_t take =
            static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
        require_arg(take >= 1, "few_shot_subset: empty class after subsetting");
        chosen.insert(chosen.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());

    DatasetManifest out;
    out.schema_version = manifest.schema_version;
    out.task = manifest.task;
    for (std::size_t i : chosen) out.entries.push_back(manifest.entries[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct Metrics {
    double accuracy = 0.0;
    std::vector<std::optional<double>> auc_per_output;
    std::optional<double> mean_auc;
    int sample_count = 0;
};

namespace detail {

// Rank-statistic AUC with midrank tie handling; absent when only one class is
// present.
inline std::optional<double> rank_auc(const std::vector<double>& scores,
                                      const std::vector<int>& positives) {
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int p : positives) pos += static_cast<std::size_t>(p);
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t l = i; l <= j; ++l) rank[idx[l]] = mid;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t l = 0; l < n; ++l)
        if (positives[l]) rank_sum += rank[l];
    const double pos_d = static_cast<double>(pos), neg_d = static_cast<double>(neg);
    return (rank_sum - pos_d * (pos_d + 1.0) / 2.0) / (pos_d * neg_d);
}

}  // namespace detail

// Metric computation on a score matrix: accuracy (argmax match for
// multiclass, threshold-0.5 mean for multilabel) and per-output rank AUC,
// which is reported as absent on single-class columns.
inline Metrics metrics_from_scores(const Mat<double>& scores,
                                   const std::vector<std::vector<double>>& labels,
                                   const TaskInfo& task) {
    const int n = scores.rows();
    const int outputs = task.num_outputs;
    require_arg(static_cast<int>(labels.size()) == n, "metrics: one label vector per score row");
    require_arg(scores.cols() == outputs, "metrics: score width must equal num_outputs");
    const bool multilabel = task.kind == "multilabel";

    Metrics m;
    m.sample_count = n;
    if (!multilabel) {
        int correct = 0;
        for (int i = 0; i < n; ++i) {
            int pred = 0;
            for (int c = 1; c < outputs; ++c)
                if (scores(i, c) > scores(i, pred)) pred = c;
            const int target = detail::multiclass_target(labels[static_cast<std::size_t>(i)], outputs);
            correct += pred == target ? 1 : 0;
        }
        m.accuracy = static_cast<double>(correct) / n;
    } else {
        long correct = 0;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < outputs; ++c) {
                const int pred = scores(i, c) > 0.5 ? 1 : 0;
                const int target =
                    labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] > 0.5 ? 1 : 0;
                correct += pred == target ? 1 : 0;
            }
        m.accuracy = static_cast<double>(correct) / (static_cast<double>(n) * outputs);
    }

    for (int c = 0; c < outputs; ++c) {
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> pos(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = scores(i, c);
            pos[static_cast<std::size_t>(i)] =
                multilabel
                    ? (labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] > 0.5 ? 1 : 0)
                    : (detail::multiclass_target(labels[static_cast<std::size_t>(i)], outputs) == c ? 1
                                                                                                    : 0);
        }
        m.auc_per_output.push_back(detail::rank_auc(s, pos));
    }

    double auc_sum = 0.0;
    int auc_count = 0;
    for (const auto& a : m.auc_per_output)
        if (a) {
            auc_sum += *a;
            ++auc_count;
        }
    if (auc_count > 0) m.mean_auc = auc_sum / auc_count;
    return m;
}

// Evaluate a head on a labeled test manifest: encoder features per clip,
// softmax/sigmoid scores, then metrics_from_scores.
template <typename S>
Metrics evaluate(const DownstreamHead<S>& head, const ModelParams<S>& params,
                 const DatasetManifest& manifest_test, const ClipSpec& clip, int window_stride) {
    const detail::LabeledSet set = detail::load_labeled(manifest_test);
    require_arg(set.task.kind == head.task.kind && set.task.num_outputs == head.task.num_outputs,
                "evaluate: manifest task does not match head");
    const int n = static_cast<int>(set.clips.size());
    const int outputs = head.task.num_outputs;
    const bool multilabel = head.task.kind == "multilabel";

    Mat<double> scores(n, outputs);
    for (int i = 0; i < n; ++i) {
        const Mat<S> f = clip_feature(params, set.clips[static_cast<std::size_t>(i)], clip, window_stride);
        for (int c = 0; c < outputs; ++c) {
            double logit = static_cast<double>(head.bias(0, c));
            for (int j = 0; j < f.cols(); ++j)
                logit += static_cast<double>(f(0, j)) * static_cast<double>(head.weight(j, c));
            scores(i, c) = logit;
        }
        if (!multilabel) {
            double mx = scores(i, 0);
            for (int c = 1; c < outputs; ++c) mx = std::max(mx, scores(i, c));
            double sum = 0.0;
            for (int c = 0; c < outputs; ++c) {
                scores(i, c) = std::exp(scores(i, c) - mx);
                sum += scores(i, c);
            }
            for (int c = 0; c < outputs; ++c) scores(i, c) /= sum;
        } else {
            for (int c = 0; c < outputs; ++c) scores(i, c) = 1.0 / (1.0 + std::exp(-scores(i, c)));
        }
    }
    return metrics_from_scores(scores, set.labels, set.task);
}

}  // namespace marlin
