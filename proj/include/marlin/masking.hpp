// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "marlin/clip.hpp"
#include "marlin/rng.hpp"
#include "marlin/tokenizer.hpp"

namespace marlin {

enum class MaskStrategy { fasking, random, frame, tube };

inline const char* mask_strategy_name(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::fasking: return "fasking";
        case MaskStrategy::random: return "random";
        case MaskStrategy::frame: return "frame";
        case MaskStrategy::tube: return "tube";
    }
    return "?";
}

inline MaskStrategy parse_mask_strategy(const std::string& name) {
    if (name == "fasking") return MaskStrategy::fasking;
    if (name == "random") return MaskStrategy::random;
    if (name == "frame") return MaskStrategy::frame;
    if (name == "tube") return MaskStrategy::tube;
    throw Error::invalid("unknown mask strategy: " + name);
}

// Boolean partition of the k tokens into n masked / k-n visible. Plans are
// pure functions of (strategy, seed, labels or grid, ratio).
struct MaskPlan {
    std::vector<bool> masked;
    int n = 0;
    double r = 0.0;
    MaskStrategy strategy = MaskStrategy::random;
    std::uint64_t seed = 0;
    std::map<std::string, int> label_histogram;

    int k() const { return static_cast<int>(masked.size()); }
    int visible_count() const { return k() - n; }

    std::vector<int> masked_indices() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < k(); ++i)
            if (masked[static_cast<std::size_t>(i)]) out.push_back(i);
        return out;
    }
    std::vector<int> visible_indices() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(k() - n));
        for (int i = 0; i < k(); ++i)
            if (!masked[static_cast<std::size_t>(i)]) out.push_back(i);
        return out;
    }
};

// n = floor(r*k); r=1 masks everything, n never exceeds k.
inline int masked_token_count(double r, int k) {
    require_arg(r >= 0.0 && r <= 1.0, "masking ratio must lie in [0,1]");
    return static_cast<int>(std::floor(r * k));
}

namespace detail {

inline void check_ratio(double r) {
    require_arg(r >= 0.0 && r <= 1.0, "masking ratio must lie in [0,1]");
}

inline MaskPlan plan_from_masked_ids(int k, const std::vector<int>& masked_ids, double r,
                                     MaskStrategy strategy, std::uint64_t seed) {
    MaskPlan plan;
    plan.masked.assign(static_cast<std::size_t>(k), false);
    for (int id : masked_ids) plan.masked[static_cast<std::size_t>(id)] = true;
    plan.n = static_cast<int>(masked_ids.size());
    plan.r = r;
    plan.strategy = strategy;
    plan.seed = seed;
    return plan;
}

}  // namespace detail

// Facial-region guided masking. The visible budget (k-n tokens) is filled in
// group order background, skin, then the priority regions in seed-shuffled
// order; tokens inside each group are taken in seed-shuffled order and the
// fill stops exactly at k-n. Everything left over is masked, so priority
// tokens are the last to become visible.
//
// RNG consumption contract (the test oracle mirrors it): one shuffle of the
// 5-element priority set, then one shuffle of each group's token ids in group
// order, stopping before any group that starts with the quota already met.
inline MaskPlan fasking(const std::vector<RegionLabel>& labels, double r, std::uint64_t seed) {
    detail::check_ratio(r);
    const int k = static_cast<int>(labels.size());
    require_arg(k >= 1, "fasking: empty label vector");

    const int n = masked_token_count(r, k);
    const int quota = k - n;

    Rng rng(seed);
    std::vector<RegionLabel> groups = {RegionLabel::background, RegionLabel::skin};
    {
        std::vector<RegionLabel> prio(std::begin(kPrioritySet), std::end(kPrioritySet));
        rng.shuffle(prio);
        groups.insert(groups.end(), prio.begin(), prio.end());
    }

    std::vector<bool> visible(static_cast<std::size_t>(k), false);
    int visible_count = 0;
    for (RegionLabel group : groups) {
        if (visible_count == quota) break;
        std::vector<int> ids;
        for (int i = 0; i < k; ++i)
            if (labels[static_cast<std::size_t>(i)] == group) ids.push_back(i);
        rng.shuffle(ids);
        for (int id : ids) {
            visible[static_cast<std::size_t>(id)] = true;
            if (++visible_count == quota) break;
        }
    }

    MaskPlan plan;
    plan.masked.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) plan.masked[static_cast<std::size_t>(i)] = !visible[static_cast<std::size_t>(i)];
    plan.n = n;
    plan.r = r;
    plan.strategy = MaskStrategy::fasking;
    plan.seed = seed;
    for (RegionLabel l : labels) plan.label_histogram[region_name(l)]++;
    return plan;
}

// Uniformly random n-subset of [0, k).
inline MaskPlan random_mask(int k, double r, std::uint64_t seed) {
    detail::check_ratio(r);
    require_arg(k >= 1, "random_mask: k must be >= 1");
    const int n = masked_token_count(r, k);
    Rng rng(seed);
    return detail::plan_from_masked_ids(k, rng.sample_indices(k, n), r, MaskStrategy::random, seed);
}

// Masks whole temporal slices: floor(r*grid_t) randomly chosen frame rows of
// tokens; n is that multiple of grid_h*grid_w.
inline MaskPlan frame_mask(const TokenGridSpec& spec, double r, std::uint64_t seed) {
    detail::check_ratio(r);
    const int slices = masked_token_count(r, spec.grid_t);
    Rng rng(seed);
    const std::vector<int> chosen = rng.sample_indices(spec.grid_t, slices);
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(slices) * spec.grid_h * spec.grid_w);
    for (int ti : chosen)
        for (int hi = 0; hi < spec.grid_h; ++hi)
            for (int wi = 0; wi < spec.grid_w; ++wi) ids.push_back(spec.token_index(ti, hi, wi));
    return detail::plan_from_masked_ids(spec.tokens(), ids, r, MaskStrategy::frame, seed);
}

// VideoMAE-style tubes: floor(r*grid_h*grid_w) spatial cells masked at every
// temporal index; n = grid_t * floor(r*grid_h*grid_w).
inline MaskPlan tube_mask(const TokenGridSpec& spec, double r, std::uint64_t seed) {
    detail::check_ratio(r);
    const int spatial = spec.grid_h * spec.grid_w;
    const int cells = masked_token_count(r, spatial);
    Rng rng(seed);
    const std::vector<int> chosen = rng.sample_indices(spatial, cells);
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(cells) * spec.grid_t);
    for (int ti = 0; ti < spec.grid_t; ++ti)
        for (int cell : chosen) ids.push_back(ti * spatial + cell);
    return detail::plan_from_masked_ids(spec.tokens(), ids, r, MaskStrategy::tube, seed);
}

inline MaskPlan make_plan(MaskStrategy strategy, const std::vector<RegionLabel>& labels,
                          const TokenGridSpec& spec, double r, std::uint64_t seed) {
    switch (strategy) {
        case MaskStrategy::fasking: return fasking(labels, r, seed);
        case MaskStrategy::random: return random_mask(spec.tokens(), r, seed);
        case MaskStrategy::frame: return frame_mask(spec, r, seed);
        case MaskStrategy::tube: return tube_mask(spec, r, seed);
    }
    throw Error::invalid("unknown mask strategy");
}

// Stable-order partition of a token matrix into visible and masked rows plus
// the index maps that invert it.
template <typename S>
struct SplitTokens {
    Mat<S> visible;
    Mat<S> masked;
    std::vector<int> visible_indices;
    std::vector<int> masked_indices;
};

template <typename S>
SplitTokens<S> split_tokens(const Mat<S>& tokens, const MaskPlan& plan) {
    require_arg(tokens.rows() == plan.k(), "split_tokens: plan size does not match token rows");
    SplitTokens<S> out;
    out.visible_indices = plan.visible_indices();
    out.masked_indices = plan.masked_indices();
    out.visible = Mat<S>(static_cast<int>(out.visible_indices.size()), tokens.cols());
    out.masked = Mat<S>(static_cast<int>(out.masked_indices.size()), tokens.cols());
    for (std::size_t i = 0; i < out.visible_indices.size(); ++i)
        for (int j = 0; j < tokens.cols(); ++j)
            out.visible(static_cast<int>(i), j) = tokens(out.visible_indices[i], j);
    for (std::size_t i = 0; i < out.masked_indices.size(); ++i)
        for (int j = 0; j < tokens.cols(); ++j)
            out.masked(static_cast<int>(i), j) = tokens(out.masked_indices[i], j);
    return out;
}

template <typename S>
Mat<S> merge_tokens(const SplitTokens<S>& split) {
    const int k = static_cast<int>(split.visible_indices.size() + split.masked_indices.size());
    const int e = split.visible_indices.empty() ? split.masked.cols() : split.visible.cols();
    Mat<S> out(k, e);
    for (std::size_t i = 0; i < split.visible_indices.size(); ++i)
        for (int j = 0; j < e; ++j) out(split.visible_indices[i], j) = split.visible(static_cast<int>(i), j);
    for (std::size_t i = 0; i < split.masked_indices.size(); ++i)
        for (int j = 0; j < e; ++j) out(split.masked_indices[i], j) = split.masked(static_cast<int>(i), j);
    return out;
}

// ---------------------------------------------------------------------------
// Plan serialization: JSON with the mask as a base64 bitset (LSB-first within
// each byte).

namespace detail {

inline const char* b64_alphabet() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    const char* tab = b64_alphabet();
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out.push_back(tab[(v >> 6) & 63]);
        out.push_back(tab[v & 63]);
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out += "==";
    } else if (rem == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(tab[(v >> 18) & 63]);
        out.push_back(tab[(v >> 12) & 63]);
        out.push_back(tab[(v >> 6) & 63]);
        out += "=";
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::array<int, 256> rev;
    rev.fill(-1);
    const char* tab = b64_alphabet();
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(tab[i])] = i;
    std::vector<std::uint8_t> out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        const int v = rev[static_cast<unsigned char>(c)];
        require(v >= 0, ErrorKind::format, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json mask_plan_to_json(const MaskPlan& plan) {
    std::vector<std::uint8_t> bytes((plan.masked.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < plan.masked.size(); ++i)
        if (plan.masked[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    nlohmann::ordered_json j;
    j["strategy"] = mask_strategy_name(plan.strategy);
    j["seed"] = plan.seed;
    j["r"] = plan.r;
    j["k"] = plan.k();
    j["n"] = plan.n;
    j["masked"] = detail::base64_encode(bytes);
    j["label_histogram"] = plan.label_histogram;
    return j;
}

inline MaskPlan mask_plan_from_json(const nlohmann::json& j) {
    MaskPlan plan;
    plan.strategy = parse_mask_strategy(j.at("strategy").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.r = j.at("r").get<double>();
    const int k = j.at("k").get<int>();
    plan.n = j.at("n").get<int>();
    const std::vector<std::uint8_t> bytes = detail::base64_decode(j.at("masked").get<std::string>());
    require(bytes.size() >= (static_cast<std::size_t>(k) + 7) / 8, ErrorKind::format,
            "mask plan: bitset too short for k");
    plan.masked.resize(static_cast<std::size_t>(k));
    int popcount = 0;
    for (int i = 0; i < k; ++i) {
        const bool bit = (bytes[static_cast<std::size_t>(i) / 8] >> (i % 8)) & 1u;
        plan.masked[static_cast<std::size_t>(i)] = bit;
        popcount += bit ? 1 : 0;
    }
    require(popcount == plan.n, ErrorKind::format, "mask plan: popcount does not match n");
    if (j.contains("label_histogram"))
        plan.label_histogram = j["label_histogram"].get<std::map<std::string, int>>();
    return plan;
}

}  // namespace marlin
