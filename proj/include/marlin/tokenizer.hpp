// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "marlin/clip.hpp"
#include "marlin/mat.hpp"

namespace marlin {

// Cube tokenization geometry. Token index is temporal-major, then row-major
// spatial: ((ti*grid_h)+hi)*grid_w+wi. Within a token row the raw pixels are
// flattened channel-outermost: ((c*cube_t+dt)*cube_h+dh)*cube_w+dw.
struct TokenGridSpec {
    int channels = 3;
    int cube_t = 2, cube_h = 16, cube_w = 16;
    int grid_t = 8, grid_h = 14, grid_w = 14;

    int tokens() const { return grid_t * grid_h * grid_w; }                   // k
    int token_width() const { return channels * cube_t * cube_h * cube_w; }  // e

    int frames() const { return grid_t * cube_t; }
    int height() const { return grid_h * cube_h; }
    int width() const { return grid_w * cube_w; }

    int token_index(int ti, int hi, int wi) const { return (ti * grid_h + hi) * grid_w + wi; }
    int temporal_index(int token) const { return token / (grid_h * grid_w); }

    static TokenGridSpec for_clip(int channels, int frames, int height, int width, int cube_t,
                                  int cube_h, int cube_w) {
        require_arg(cube_t >= 1 && cube_h >= 1 && cube_w >= 1, "cube dims must be >= 1");
        require_arg(frames % cube_t == 0, "cube_t must divide clip frames exactly (" +
                                              std::to_string(frames) + " % " + std::to_string(cube_t) + ")");
        require_arg(height % cube_h == 0, "cube_h must divide clip height exactly");
        require_arg(width % cube_w == 0, "cube_w must divide clip width exactly");
        TokenGridSpec s;
        s.channels = channels;
        s.cube_t = cube_t;
        s.cube_h = cube_h;
        s.cube_w = cube_w;
        s.grid_t = frames / cube_t;
        s.grid_h = height / cube_h;
        s.grid_w = width / cube_w;
        return s;
    }

    friend bool operator==(const TokenGridSpec& a, const TokenGridSpec& b) = default;
};

// k x e matrix of raw-pixel tokens plus its geometry.
template <typename S>
struct TokenBatch {
    Mat<S> values;
    TokenGridSpec spec;
};

template <typename S = float>
TokenBatch<S> patchify(const VideoClip& clip, const TokenGridSpec& spec) {
    require_arg(clip.channels == spec.channels, "patchify: channel mismatch");
    require_arg(clip.frames == spec.frames() && clip.height == spec.height() &&
                    clip.width == spec.width(),
                "patchify: spec does not divide clip shape");

    TokenBatch<S> out;
    out.spec = spec;
    out.values = Mat<S>(spec.tokens(), spec.token_width());
    for (int ti = 0; ti < spec.grid_t; ++ti)
        for (int hi = 0; hi < spec.grid_h; ++hi)
            for (int wi = 0; wi < spec.grid_w; ++wi) {
                S* row = out.values.row(spec.token_index(ti, hi, wi));
                int col = 0;
                for (int c = 0; c < spec.channels; ++c)
                    for (int dt = 0; dt < spec.cube_t; ++dt)
                        for (int dh = 0; dh < spec.cube_h; ++dh) {
                            const std::size_t base = clip.pixel_index(
                                c, ti * spec.cube_t + dt, hi * spec.cube_h + dh, wi * spec.cube_w);
                            for (int dw = 0; dw < spec.cube_w; ++dw)
                                row[col++] = static_cast<S>(clip.pixels[base + dw]);
                        }
            }
    return out;
}

// Exact inverse of patchify (pixel tensor only; the segmap is not tokenized).
template <typename S>
std::vector<float> unpatchify(const TokenBatch<S>& tokens) {
    const TokenGridSpec& spec = tokens.spec;
    require_arg(tokens.values.rows() == spec.tokens() && tokens.values.cols() == spec.token_width(),
                "unpatchify: token matrix shape mismatch");

    std::vector<float> pixels(static_cast<std::size_t>(spec.channels) * spec.frames() *
                              spec.height() * spec.width());
    const auto pixel_index = [&](int c, int t, int h, int w) {
        return ((static_cast<std::size_t>(c) * spec.frames() + t) * spec.height() + h) * spec.width() + w;
    };
    for (int ti = 0; ti < spec.grid_t; ++ti)
        for (int hi = 0; hi < spec.grid_h; ++hi)
            for (int wi = 0; wi < spec.grid_w; ++wi) {
                const S* row = tokens.values.row(spec.token_index(ti, hi, wi));
                int col = 0;
                for (int c = 0; c < spec.channels; ++c)
                    for (int dt = 0; dt < spec.cube_t; ++dt)
                        for (int dh = 0; dh < spec.cube_h; ++dh) {
                            const std::size_t base = pixel_index(
                                c, ti * spec.cube_t + dt, hi * spec.cube_h + dh, wi * spec.cube_w);
                            for (int dw = 0; dw < spec.cube_w; ++dw)
                                pixels[base + dw] = static_cast<float>(row[col++]);
                        }
            }
    return pixels;
}

// Per-token facial region: majority vote over the cube's voxels, ties broken
// by priority (left-eye > right-eye > nose > mouth > hair > skin > background).
inline std::vector<RegionLabel> token_region_labels(const VideoClip& clip, const TokenGridSpec& spec) {
    require_arg(clip.frames == spec.frames() && clip.height == spec.height() &&
                    clip.width == spec.width(),
                "token_region_labels: segmap shape mismatch");

    std::vector<RegionLabel> labels(static_cast<std::size_t>(spec.tokens()));
    for (int ti = 0; ti < spec.grid_t; ++ti)
        for (int hi = 0; hi < spec.grid_h; ++hi)
            for (int wi = 0; wi < spec.grid_w; ++wi) {
                std::array<int, kNumRegionLabels> votes{};
                for (int dt = 0; dt < spec.cube_t; ++dt)
                    for (int dh = 0; dh < spec.cube_h; ++dh)
                        for (int dw = 0; dw < spec.cube_w; ++dw)
                            votes[clip.segmap[clip.voxel_index(ti * spec.cube_t + dt,
                                                               hi * spec.cube_h + dh,
                                                               wi * spec.cube_w + dw)]]++;
                int best = 0;
                for (int l = 1; l < kNumRegionLabels; ++l) {
                    if (votes[l] > votes[best] ||
                        (votes[l] == votes[best] &&
                         region_priority_rank(static_cast<RegionLabel>(l)) <
                             region_priority_rank(static_cast<RegionLabel>(best)))) {
                        best = l;
                    }
                }
                labels[static_cast<std::size_t>(spec.token_index(ti, hi, wi))] =
                    static_cast<RegionLabel>(best);
            }
    return labels;
}

}  // namespace marlin
