// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "marlin/graph.hpp"
#include "marlin/masking.hpp"
#include "marlin/rng.hpp"
#include "marlin/tokenizer.hpp"

namespace marlin {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

enum class Variant { tiny, vit_s, vit_b, vit_l };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::tiny: return "tiny";
        case Variant::vit_s: return "vit_s";
        case Variant::vit_b: return "vit_b";
        case Variant::vit_l: return "vit_l";
    }
    return "?";
}

inline Variant parse_variant(const std::string& name) {
    if (name == "tiny") return Variant::tiny;
    if (name == "vit_s") return Variant::vit_s;
    if (name == "vit_b") return Variant::vit_b;
    if (name == "vit_l") return Variant::vit_l;
    throw Error::invalid("unknown model variant: " + name);
}

struct ModelConfig {
    Variant variant = Variant::tiny;
    int embed_dim = 16;
    int depth = 1;
    int heads = 2;
    int decoder_dim = 8;
    int decoder_depth = 1;
    int decoder_heads = 2;
    std::vector<int> disc_hidden = {32};
    bool learned_pos = true;
    TokenGridSpec grid;

    void validate() const {
        require_arg(embed_dim >= 1 && depth >= 1 && heads >= 1, "model config: bad encoder dims");
        require_arg(embed_dim % heads == 0, "model config: embed_dim must be divisible by heads");
        require_arg(decoder_dim >= 1 && decoder_depth >= 1 && decoder_heads >= 1,
                    "model config: bad decoder dims");
        require_arg(decoder_dim % decoder_heads == 0,
                    "model config: decoder_dim must be divisible by decoder_heads");
        for (int h : disc_hidden) require_arg(h >= 1, "model config: disc hidden widths must be >= 1");
    }

    static ModelConfig preset(Variant v, TokenGridSpec grid) {
        ModelConfig c;
        c.variant = v;
        c.grid = grid;
        switch (v) {
            case Variant::tiny:
                c.embed_dim = 16; c.depth = 1; c.heads = 2;
                c.decoder_dim = 8; c.decoder_depth = 1; c.decoder_heads = 2;
                c.disc_hidden = {32};
                break;
            case Variant::vit_s:
                c.embed_dim = 384; c.depth = 12; c.heads = 6;
                c.decoder_dim = 192; c.decoder_depth = 4; c.decoder_heads = 3;
                c.disc_hidden = {512, 256};
                break;
            case Variant::vit_b:
                c.embed_dim = 768; c.depth = 12; c.heads = 12;
                c.decoder_dim = 384; c.decoder_depth = 4; c.decoder_heads = 6;
                c.disc_hidden = {512, 256};
                break;
            case Variant::vit_l:
                c.embed_dim = 1024; c.depth = 24; c.heads = 16;
                c.decoder_dim = 512; c.decoder_depth = 4; c.decoder_heads = 8;
                c.disc_hidden = {512, 256};
                break;
        }
        return c;
    }
};

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["variant"] = variant_name(c.variant);
    j["embed_dim"] = c.embed_dim;
    j["depth"] = c.depth;
    j["heads"] = c.heads;
    j["decoder_dim"] = c.decoder_dim;
    j["decoder_depth"] = c.decoder_depth;
    j["decoder_heads"] = c.decoder_heads;
    j["disc_hidden"] = c.disc_hidden;
    j["learned_pos"] = c.learned_pos;
    j["grid"] = {{"channels", c.grid.channels}, {"cube_t", c.grid.cube_t}, {"cube_h", c.grid.cube_h},
                 {"cube_w", c.grid.cube_w},     {"grid_t", c.grid.grid_t}, {"grid_h", c.grid.grid_h},
                 {"grid_w", c.grid.grid_w}};
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.decoder_dim = j.at("decoder_dim").get<int>();
    c.decoder_depth = j.at("decoder_depth").get<int>();
    c.decoder_heads = j.at("decoder_heads").get<int>();
    c.disc_hidden = j.at("disc_hidden").get<std::vector<int>>();
    c.learned_pos = j.at("learned_pos").get<bool>();
    const auto& gj = j.at("grid");
    c.grid.channels = gj.at("channels").get<int>();
    c.grid.cube_t = gj.at("cube_t").get<int>();
    c.grid.cube_h = gj.at("cube_h").get<int>();
    c.grid.cube_w = gj.at("cube_w").get<int>();
    c.grid.grid_t = gj.at("grid_t").get<int>();
    c.grid.grid_h = gj.at("grid_h").get<int>();
    c.grid.grid_w = gj.at("grid_w").get<int>();
    c.validate();
    return c;
}

enum class ParamGroup { encoder, decoder, discriminator, head };

inline const char* param_group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::encoder: return "encoder";
        case ParamGroup::decoder: return "decoder";
        case ParamGroup::discriminator: return "discriminator";
        case ParamGroup::head: return "head";
    }
    return "?";
}

inline ParamGroup parse_param_group(const std::string& name) {
    if (name == "encoder") return ParamGroup::encoder;
    if (name == "decoder") return ParamGroup::decoder;
    if (name == "discriminator") return ParamGroup::discriminator;
    if (name == "head") return ParamGroup::head;
    throw Error::format("unknown param group: " + name);
}

template <typename S>
struct NamedTensor {
    std::string name;
    ParamGroup group;
    bool trainable = true;
    Mat<S> value;
};

// The three pre-training parameter sets (encoder phi_E, decoder phi_D,
// discriminator phi_Gamma) in a flat named registry. Registry order is the
// declaration order and drives deterministic initialization and optimizer
// iteration.
template <typename S>
struct ModelParams {
    ModelConfig config;
    std::vector<NamedTensor<S>> tensors;
    std::unordered_map<std::string, std::size_t> index;

    void add(std::string name, ParamGroup group, Mat<S> value, bool trainable = true) {
        require_arg(!index.count(name), "duplicate parameter name: " + name);
        index[name] = tensors.size();
        tensors.push_back(NamedTensor<S>{std::move(name), group, trainable, std::move(value)});
    }

    const NamedTensor<S>& at(const std::string& name) const {
        auto it = index.find(name);
        require_arg(it != index.end(), "unknown parameter: " + name);
        return tensors[it->second];
    }
    NamedTensor<S>& at(const std::string& name) {
        auto it = index.find(name);
        require_arg(it != index.end(), "unknown parameter: " + name);
        return tensors[it->second];
    }

    std::size_t scalar_count(ParamGroup group) const {
        std::size_t n = 0;
        for (const auto& t : tensors)
            if (t.group == group && t.trainable) n += t.value.size();
        return n;
    }

    std::size_t trainable_scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors)
            if (t.trainable) n += t.value.size();
        return n;
    }

    template <typename T>
    ModelParams<T> cast() const {
        ModelParams<T> out;
        out.config = config;
        for (const auto& t : tensors) out.add(t.name, t.group, t.value.template cast<T>(), t.trainable);
        return out;
    }
};

namespace detail {

template <typename S>
Mat<S> sinusoidal_positions(int count, int dim) {
    Mat<S> pos(count, dim);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < dim; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / dim;
            const double angle = i / std::pow(10000.0, exponent);
            pos(i, j) = static_cast<S>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pos;
}

template <typename S>
void add_block(ModelParams<S>& p, const std::string& prefix, ParamGroup g, int dim, Rng& rng) {
    p.add(prefix + ".ln1.gamma", g, Mat<S>(1, dim, S(1)));
    p.add(prefix + ".ln1.beta", g, Mat<S>(1, dim));
    p.add(prefix + ".attn.qkv.weight", g, Mat<S>::trunc_normal(dim, 3 * dim, kInitStd, rng));
    p.add(prefix + ".attn.qkv.bias", g, Mat<S>(1, 3 * dim));
    p.add(prefix + ".attn.proj.weight", g, Mat<S>::trunc_normal(dim, dim, kInitStd, rng));
    p.add(prefix + ".attn.proj.bias", g, Mat<S>(1, dim));
    p.add(prefix + ".ln2.gamma", g, Mat<S>(1, dim, S(1)));
    p.add(prefix + ".ln2.beta", g, Mat<S>(1, dim));
    p.add(prefix + ".mlp.fc1.weight", g, Mat<S>::trunc_normal(dim, 4 * dim, kInitStd, rng));
    p.add(prefix + ".mlp.fc1.bias", g, Mat<S>(1, 4 * dim));
    p.add(prefix + ".mlp.fc2.weight", g, Mat<S>::trunc_normal(4 * dim, dim, kInitStd, rng));
    p.add(prefix + ".mlp.fc2.bias", g, Mat<S>(1, dim));
}

}  // namespace detail

// Truncated-normal weights (std 0.02), zero biases, unit layer-norm gains.
// Positional embeddings are learned by default; with learned_pos=false they
// are fixed sinusoids excluded from the trainable set.
template <typename S>
ModelParams<S> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const int k = config.grid.tokens();
    const int e = config.grid.token_width();
    const int d = config.embed_dim;
    const int dd = config.decoder_dim;

    Rng rng(derive_seed(seed, 0x9a7a));
    ModelParams<S> p;
    p.config = config;

    p.add("encoder.embed.weight", ParamGroup::encoder, Mat<S>::trunc_normal(e, d, kInitStd, rng));
    p.add("encoder.embed.bias", ParamGroup::encoder, Mat<S>(1, d));
    if (config.learned_pos) {
        p.add("encoder.pos", ParamGroup::encoder, Mat<S>::trunc_normal(k, d, kInitStd, rng));
    } else {
        p.add("encoder.pos", ParamGroup::encoder, detail::sinusoidal_positions<S>(k, d), false);
    }
    for (int i = 0; i < config.depth; ++i)
        detail::add_block(p, "encoder.block" + std::to_string(i), ParamGroup::encoder, d, rng);
    p.add("encoder.norm.gamma", ParamGroup::encoder, Mat<S>(1, d, S(1)));
    p.add("encoder.norm.beta", ParamGroup::encoder, Mat<S>(1, d));

    p.add("decoder.proj.weight", ParamGroup::decoder, Mat<S>::trunc_normal(d, dd, kInitStd, rng));
    p.add("decoder.proj.bias", ParamGroup::decoder, Mat<S>(1, dd));
    p.add("decoder.mask_token", ParamGroup::decoder, Mat<S>::trunc_normal(1, dd, kInitStd, rng));
    if (config.learned_pos) {
        p.add("decoder.pos", ParamGroup::decoder, Mat<S>::trunc_normal(k, dd, kInitStd, rng));
    } else {
        p.add("decoder.pos", ParamGroup::decoder, detail::sinusoidal_positions<S>(k, dd), false);
    }
    for (int i = 0; i < config.decoder_depth; ++i)
        detail::add_block(p, "decoder.block" + std::to_string(i), ParamGroup::decoder, dd, rng);
    p.add("decoder.norm.gamma", ParamGroup::decoder, Mat<S>(1, dd, S(1)));
    p.add("decoder.norm.beta", ParamGroup::decoder, Mat<S>(1, dd));
    p.add("decoder.out.weight", ParamGroup::decoder, Mat<S>::trunc_normal(dd, e, kInitStd, rng));
    p.add("decoder.out.bias", ParamGroup::decoder, Mat<S>(1, e));

    int in_w = e;
    for (std::size_t i = 0; i < config.disc_hidden.size(); ++i) {
        const int out_w = config.disc_hidden[i];
        const std::string prefix = "disc.fc" + std::to_string(i);
        p.add(prefix + ".weight", ParamGroup::discriminator, Mat<S>::trunc_normal(in_w, out_w, kInitStd, rng));
        p.add(prefix + ".bias", ParamGroup::discriminator, Mat<S>(1, out_w));
        in_w = out_w;
    }
    p.add("disc.out.weight", ParamGroup::discriminator, Mat<S>::trunc_normal(in_w, 1, kInitStd, rng));
    p.add("disc.out.bias", ParamGroup::discriminator, Mat<S>(1, 1));

    return p;
}

// ---------------------------------------------------------------------------
// Graph-level forward passes. Each builder registers the parameter tensors as
// graph leaves; groups listed in `trainable` become differentiable params,
// everything else enters as plain inputs (detached).

template <typename S>
struct ModelVars {
    std::unordered_map<std::string, typename Graph<S>::VarId> ids;

    typename Graph<S>::VarId at(const std::string& name) const {
        auto it = ids.find(name);
        require_arg(it != ids.end(), "model vars: unknown tensor " + name);
        return it->second;
    }
};

template <typename S>
ModelVars<S> register_model(Graph<S>& g, const ModelParams<S>& params,
                            bool train_encoder, bool train_decoder, bool train_disc) {
    ModelVars<S> vars;
    for (const auto& t : params.tensors) {
        const bool train = t.trainable && ((t.group == ParamGroup::encoder && train_encoder) ||
                                           (t.group == ParamGroup::decoder && train_decoder) ||
                                           (t.group == ParamGroup::discriminator && train_disc));
        vars.ids[t.name] = train ? g.param(t.value) : g.input(t.value);
    }
    return vars;
}

namespace detail {

template <typename S>
typename Graph<S>::VarId transformer_block(Graph<S>& g, const ModelVars<S>& vars,
                                           const std::string& prefix, typename Graph<S>::VarId x,
                                           int heads) {
    using VarId = typename Graph<S>::VarId;
    const int dim = g.value(x).cols();
    const int head_dim = dim / heads;

    VarId xn = g.layer_norm(x, vars.at(prefix + ".ln1.gamma"), vars.at(prefix + ".ln1.beta"),
                            static_cast<S>(kLayerNormEps));
    VarId qkv = g.add_row_broadcast(g.matmul(xn, vars.at(prefix + ".attn.qkv.weight")),
                                    vars.at(prefix + ".attn.qkv.bias"));
    std::vector<VarId> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    for (int h = 0; h < heads; ++h) {
        VarId q = g.slice_cols(qkv, h * head_dim, (h + 1) * head_dim);
        VarId k = g.slice_cols(qkv, dim + h * head_dim, dim + (h + 1) * head_dim);
        VarId v = g.slice_cols(qkv, 2 * dim + h * head_dim, 2 * dim + (h + 1) * head_dim);
        VarId attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), inv_sqrt));
        head_outs.push_back(g.matmul(attn, v));
    }
    VarId merged = g.concat_cols(head_outs);
    VarId attn_out = g.add_row_broadcast(g.matmul(merged, vars.at(prefix + ".attn.proj.weight")),
                                         vars.at(prefix + ".attn.proj.bias"));
    x = g.add(x, attn_out);

    VarId x2 = g.layer_norm(x, vars.at(prefix + ".ln2.gamma"), vars.at(prefix + ".ln2.beta"),
                            static_cast<S>(kLayerNormEps));
    VarId hidden = g.gelu(g.add_row_broadcast(g.matmul(x2, vars.at(prefix + ".mlp.fc1.weight")),
                                              vars.at(prefix + ".mlp.fc1.bias")));
    VarId mlp_out = g.add_row_broadcast(g.matmul(hidden, vars.at(prefix + ".mlp.fc2.weight")),
                                        vars.at(prefix + ".mlp.fc2.bias"));
    return g.add(x, mlp_out);
}

}  // namespace detail

// Encoder: linear cube embedding + positional embeddings gathered at the
// visible token positions, then pre-norm transformer blocks and a final norm.
template <typename S>
typename Graph<S>::VarId encode_graph(Graph<S>& g, const ModelVars<S>& vars, const ModelConfig& config,
                                      typename Graph<S>::VarId visible,
                                      const std::vector<int>& visible_positions) {
    require_arg(g.value(visible).cols() == config.grid.token_width(),
                "encode: token width does not match grid");
    require_arg(g.value(visible).rows() == static_cast<int>(visible_positions.size()),
                "encode: one position per visible row");
    for (int p : visible_positions)
        require_arg(0 <= p && p < config.grid.tokens(), "encode: position out of range");

    using VarId = typename Graph<S>::VarId;
    VarId x = g.add_row_broadcast(g.matmul(visible, vars.at("encoder.embed.weight")),
                                  vars.at("encoder.embed.bias"));
    x = g.add(x, g.gather_rows(vars.at("encoder.pos"), visible_positions));
    for (int i = 0; i < config.depth; ++i)
        x = detail::transformer_block(g, vars, "encoder.block" + std::to_string(i), x, config.heads);
    return g.layer_norm(x, vars.at("encoder.norm.gamma"), vars.at("encoder.norm.beta"),
                        static_cast<S>(kLayerNormEps));
}

// Decoder: latent rows projected to decoder width and scattered to their
// original positions, the shared mask token everywhere else, positional
// embeddings over the full k-length sequence, transformer blocks, and a
// linear head back to raw-pixel width at the masked positions only (rows in
// masked-index order).
template <typename S>
typename Graph<S>::VarId decode_graph(Graph<S>& g, const ModelVars<S>& vars, const ModelConfig& config,
                                      typename Graph<S>::VarId z, const std::vector<int>& visible_idx,
                                      const std::vector<int>& masked_idx) {
    using VarId = typename Graph<S>::VarId;
    const int k = config.grid.tokens();
    require_arg(g.value(z).rows() == static_cast<int>(visible_idx.size()),
                "decode: latent rows must match visible positions");
    require_arg(static_cast<int>(visible_idx.size() + masked_idx.size()) == k,
                "decode: index maps must cover all tokens");

    VarId proj = g.add_row_broadcast(g.matmul(z, vars.at("decoder.proj.weight")),
                                     vars.at("decoder.proj.bias"));
    VarId mask_rows = g.repeat_row(vars.at("decoder.mask_token"), static_cast<int>(masked_idx.size()));
    VarId full = g.assemble_rows(k, proj, visible_idx, mask_rows, masked_idx);
    full = g.add(full, vars.at("decoder.pos"));
    for (int i = 0; i < config.decoder_depth; ++i)
        full = detail::transformer_block(g, vars, "decoder.block" + std::to_string(i), full,
                                         config.decoder_heads);
    full = g.layer_norm(full, vars.at("decoder.norm.gamma"), vars.at("decoder.norm.beta"),
                        static_cast<S>(kLayerNormEps));
    VarId masked_latent = g.gather_rows(full, masked_idx);
    return g.add_row_broadcast(g.matmul(masked_latent, vars.at("decoder.out.weight")),
                               vars.at("decoder.out.bias"));
}

// Per-token discriminator: MLP over raw-pixel tokens, one score per row.
template <typename S>
typename Graph<S>::VarId discriminate_graph(Graph<S>& g, const ModelVars<S>& vars,
                                            const ModelConfig& config, typename Graph<S>::VarId tokens) {
    require_arg(g.value(tokens).cols() == config.grid.token_width(),
                "discriminate: token width does not match grid");
    using VarId = typename Graph<S>::VarId;
    VarId x = tokens;
    for (std::size_t i = 0; i < config.disc_hidden.size(); ++i) {
        const std::string prefix = "disc.fc" + std::to_string(i);
        x = g.gelu(g.add_row_broadcast(g.matmul(x, vars.at(prefix + ".weight")),
                                       vars.at(prefix + ".bias")));
    }
    return g.add_row_broadcast(g.matmul(x, vars.at("disc.out.weight")), vars.at("disc.out.bias"));
}

// ---------------------------------------------------------------------------
// Plain (non-training) forward wrappers.

template <typename S>
Mat<S> encode(const ModelParams<S>& params, const Mat<S>& visible,
              const std::vector<int>& visible_positions) {
    Graph<S> g;
    ModelVars<S> vars = register_model(g, params, false, false, false);
    const auto z = encode_graph(g, vars, params.config, g.input(visible), visible_positions);
    Mat<S> out = g.value(z);
    require(out.all_finite(), ErrorKind::numeric, "encode: non-finite latent");
    return out;
}

template <typename S>
Mat<S> decode(const ModelParams<S>& params, const Mat<S>& z, const MaskPlan& plan) {
    Graph<S> g;
    ModelVars<S> vars = register_model(g, params, false, false, false);
    const auto out = decode_graph(g, vars, params.config, g.input(z), plan.visible_indices(),
                                  plan.masked_indices());
    return g.value(out);
}

template <typename S>
std::vector<S> discriminate(const ModelParams<S>& params, const Mat<S>& tokens) {
    Graph<S> g;
    ModelVars<S> vars = register_model(g, params, false, false, false);
    const auto scores = discriminate_graph(g, vars, params.config, g.input(tokens));
    const Mat<S>& v = g.value(scores);
    std::vector<S> out(static_cast<std::size_t>(v.rows()));
    for (int i = 0; i < v.rows(); ++i) out[static_cast<std::size_t>(i)] = v(i, 0);
    return out;
}

// Reconstruction pass: splits tokens by the plan, encodes the visible part,
// decodes the masked part; returns (reconstruction, ground truth), both in
// masked-index order.
template <typename S>
std::pair<Mat<S>, Mat<S>> forward_reconstruct(const ModelParams<S>& params, const TokenBatch<S>& tokens,
                                              const MaskPlan& plan) {
    require_arg(tokens.spec == params.config.grid, "forward_reconstruct: grid mismatch");
    const SplitTokens<S> split = split_tokens(tokens.values, plan);
    Graph<S> g;
    ModelVars<S> vars = register_model(g, params, false, false, false);
    const auto z = encode_graph(g, vars, params.config, g.input(split.visible), split.visible_indices);
    const auto rec = decode_graph(g, vars, params.config, z, split.visible_indices, split.masked_indices);
    return {g.value(rec), split.masked};
}

// ---------------------------------------------------------------------------
// Checkpoints: directory with manifest.json plus one raw little-endian f32
// blob per named tensor.

template <typename S>
void save_checkpoint(const ModelParams<S>& params, const std::filesystem::path& dir, long step,
                     long epoch, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = model_config_to_json(params.config);
    manifest["step"] = step;
    manifest["epoch"] = epoch;
    manifest["seed"] = seed;
    auto tensors = nlohmann::ordered_json::array();
    for (const auto& t : params.tensors) {
        tensors.push_back({{"name", t.name},
                           {"group", param_group_name(t.group)},
                           {"trainable", t.trainable},
                           {"rows", t.value.rows()},
                           {"cols", t.value.cols()}});
        const Mat<float> blob = t.value.template cast<float>();
        std::ofstream os(dir / (t.name + ".bin"), std::ios::binary | std::ios::trunc);
        require(bool(os), ErrorKind::io, "checkpoint: cannot write " + (dir / (t.name + ".bin")).string());
        os.write(reinterpret_cast<const char*>(blob.data()),
                 static_cast<std::streamsize>(blob.size() * sizeof(float)));
        require(bool(os), ErrorKind::io, "checkpoint: short write for " + t.name);
    }
    manifest["tensors"] = tensors;
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    require(bool(os), ErrorKind::io, "checkpoint: cannot write manifest");
    os << manifest.dump(2) << "\n";
}

template <typename S>
struct Checkpoint {
    ModelParams<S> params;
    long step = 0;
    long epoch = 0;
    std::uint64_t seed = 0;
};

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    require(bool(is), ErrorKind::io, "checkpoint: missing manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::format, "checkpoint: bad manifest JSON: " + std::string(e.what()));
    }
    require(manifest.value("format_version", 0) == 1, ErrorKind::format,
            "checkpoint: unsupported format version");

    Checkpoint<S> ckpt;
    ckpt.params.config = model_config_from_json(manifest.at("config"));
    ckpt.step = manifest.value("step", 0L);
    ckpt.epoch = manifest.value("epoch", 0L);
    ckpt.seed = manifest.value("seed", std::uint64_t(0));

    for (const auto& tj : manifest.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const int rows = tj.at("rows").get<int>();
        const int cols = tj.at("cols").get<int>();
        Mat<float> blob(rows, cols);
        std::ifstream bs(dir / (name + ".bin"), std::ios::binary);
        require(bool(bs), ErrorKind::io, "checkpoint: missing blob for " + name);
        bs.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(blob.size() * sizeof(float)));
        require(bool(bs) && bs.gcount() == static_cast<std::streamsize>(blob.size() * sizeof(float)),
                ErrorKind::format, "checkpoint: blob size mismatch for " + name);
        ckpt.params.add(name, parse_param_group(tj.at("group").get<std::string>()),
                        blob.template cast<S>(), tj.at("trainable").get<bool>());
    }
    return ckpt;
}

}  // namespace marlin
