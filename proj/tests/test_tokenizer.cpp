// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "marlin/tokenizer.hpp"
#include "oracles.hpp"

using namespace marlin;

TEST_CASE("tokenizer: the reference geometry yields 8x14x14 = 1568 tokens of width 1536") {
    const auto spec = TokenGridSpec::for_clip(3, 16, 224, 224, 2, 16, 16);
    REQUIRE(spec.grid_t == 8);
    REQUIRE(spec.grid_h == 14);
    REQUIRE(spec.grid_w == 14);
    REQUIRE(spec.tokens() == 1568);
    REQUIRE(spec.token_width() == 3 * 2 * 16 * 16);
    REQUIRE(spec.token_width() == 1536);
}

TEST_CASE("tokenizer: k*e preserves the element count for random specs") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int ct = 1 + static_cast<int>(rng.next_below(3));
        const int ch = 1 + static_cast<int>(rng.next_below(4));
        const int cw = 1 + static_cast<int>(rng.next_below(4));
        const int gt = 1 + static_cast<int>(rng.next_below(4));
        const int gh = 1 + static_cast<int>(rng.next_below(4));
        const int gw = 1 + static_cast<int>(rng.next_below(4));
        const int C = 1 + static_cast<int>(rng.next_below(3));
        const auto spec = TokenGridSpec::for_clip(C, ct * gt, ch * gh, cw * gw, ct, ch, cw);
        REQUIRE(static_cast<long>(spec.tokens()) * spec.token_width() ==
                static_cast<long>(C) * (ct * gt) * (ch * gh) * (cw * gw));
    }
}

TEST_CASE("tokenizer: non-divisible shapes are rejected") {
    REQUIRE_THROWS_AS(TokenGridSpec::for_clip(3, 15, 224, 224, 2, 16, 16), Error);
    REQUIRE_THROWS_AS(TokenGridSpec::for_clip(3, 16, 225, 224, 2, 16, 16), Error);
}

TEST_CASE("tokenizer: constant clip produces constant token rows") {
    VideoClip clip;
    clip.channels = 2;
    clip.frames = 4;
    clip.height = 6;
    clip.width = 6;
    clip.pixels.assign(2 * 4 * 6 * 6, 0.625f);
    clip.segmap.assign(4 * 6 * 6, 0);
    const auto spec = TokenGridSpec::for_clip(2, 4, 6, 6, 2, 3, 3);
    const auto tokens = patchify<float>(clip, spec);
    for (int i = 0; i < tokens.values.rows(); ++i)
        for (int j = 0; j < tokens.values.cols(); ++j) REQUIRE(tokens.values(i, j) == 0.625f);
}

TEST_CASE("tokenizer: patchify/unpatchify is a bijection preserving the Frobenius norm") {
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const int ct = 1 + static_cast<int>(rng.next_below(3));
        const int ch = 1 + static_cast<int>(rng.next_below(5));
        const int cw = 1 + static_cast<int>(rng.next_below(5));
        const int gt = 1 + static_cast<int>(rng.next_below(3));
        const int gh = 1 + static_cast<int>(rng.next_below(4));
        const int gw = 1 + static_cast<int>(rng.next_below(4));
        const int C = 1 + static_cast<int>(rng.next_below(3));
        const auto clip = oracle::random_clip(C, ct * gt, ch * gh, cw * gw, rng);
        const auto spec = TokenGridSpec::for_clip(C, clip.frames, clip.height, clip.width, ct, ch, cw);
        const auto tokens = patchify<float>(clip, spec);
        const auto pixels = unpatchify(tokens);
        REQUIRE(pixels == clip.pixels);

        double clip_norm = 0.0;
        for (float p : clip.pixels) clip_norm += double(p) * p;
        REQUIRE(frobenius_norm(tokens.values) == Catch::Approx(std::sqrt(clip_norm)).epsilon(1e-12));
    }
}

TEST_CASE("tokenizer: swapping two token rows swaps the corresponding cubes") {
    // 2-cube toy grid: 1 channel, cubes of 1x2x2, grid 1x1x2
    Rng rng(23);
    const auto clip = oracle::random_clip(1, 1, 2, 4, rng);
    const auto spec = TokenGridSpec::for_clip(1, 1, 2, 4, 1, 2, 2);
    REQUIRE(spec.tokens() == 2);
    auto tokens = patchify<float>(clip, spec);
    for (int j = 0; j < tokens.values.cols(); ++j)
        std::swap(tokens.values(0, j), tokens.values(1, j));
    const auto pixels = unpatchify(tokens);
    // cube 0 is columns 0..1, cube 1 is columns 2..3; they must have traded places
    const auto idx = [&](int h, int w) { return std::size_t(h) * 4 + w; };
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) {
            REQUIRE(pixels[idx(h, w)] == clip.pixels[idx(h, w + 2)]);
            REQUIRE(pixels[idx(h, w + 2)] == clip.pixels[idx(h, w)]);
        }
}

TEST_CASE("tokenizer: zero token batch unpatchifies to a zero tensor") {
    TokenBatch<float> tokens;
    tokens.spec = TokenGridSpec::for_clip(2, 2, 4, 4, 1, 2, 2);
    tokens.values = Mat<float>(tokens.spec.tokens(), tokens.spec.token_width());
    for (float p : unpatchify(tokens)) REQUIRE(p == 0.0f);
}

TEST_CASE("token labels: uniform segmap maps every token to that label") {
    Rng rng(29);
    auto clip = oracle::random_clip(1, 2, 4, 4, rng);
    clip.segmap.assign(clip.segmap.size(), static_cast<std::uint8_t>(RegionLabel::nose));
    const auto spec = TokenGridSpec::for_clip(1, 2, 4, 4, 2, 2, 2);
    for (auto l : token_region_labels(clip, spec)) REQUIRE(l == RegionLabel::nose);
}

TEST_CASE("token labels: exact 50/50 tie resolves by priority, strict majority wins otherwise") {
    // one token of 1x2x... use cube 1x2x5: 10 voxels
    VideoClip clip;
    clip.channels = 1;
    clip.frames = 1;
    clip.height = 2;
    clip.width = 5;
    clip.pixels.assign(10, 0.0f);
    clip.segmap.assign(10, 0);
    const auto spec = TokenGridSpec::for_clip(1, 1, 2, 5, 1, 2, 5);

    SECTION("half nose / half skin -> nose by priority") {
        for (int i = 0; i < 5; ++i) clip.segmap[i] = static_cast<std::uint8_t>(RegionLabel::nose);
        for (int i = 5; i < 10; ++i) clip.segmap[i] = static_cast<std::uint8_t>(RegionLabel::skin);
        REQUIRE(token_region_labels(clip, spec)[0] == RegionLabel::nose);
    }
    SECTION("60% background / 40% mouth -> background by strict majority") {
        for (int i = 0; i < 6; ++i) clip.segmap[i] = static_cast<std::uint8_t>(RegionLabel::background);
        for (int i = 6; i < 10; ++i) clip.segmap[i] = static_cast<std::uint8_t>(RegionLabel::mouth);
        REQUIRE(token_region_labels(clip, spec)[0] == RegionLabel::background);
    }
}

TEST_CASE("token labels: agree with a brute-force vote counter on random segmaps") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const auto clip = oracle::random_clip(1, 4, 6, 6, rng);
        const auto spec = TokenGridSpec::for_clip(1, 4, 6, 6, 2, 3, 3);
        const auto got = token_region_labels(clip, spec);
        for (int ti = 0; ti < spec.grid_t; ++ti)
            for (int hi = 0; hi < spec.grid_h; ++hi)
                for (int wi = 0; wi < spec.grid_w; ++wi) {
                    std::vector<RegionLabel> voxels;
                    for (int dt = 0; dt < spec.cube_t; ++dt)
                        for (int dh = 0; dh < spec.cube_h; ++dh)
                            for (int dw = 0; dw < spec.cube_w; ++dw)
                                voxels.push_back(clip.label(ti * 2 + dt, hi * 3 + dh, wi * 3 + dw));
                    REQUIRE(got[static_cast<std::size_t>(spec.token_index(ti, hi, wi))] ==
                            oracle::vote_label(voxels));
                }
    }
}

TEST_CASE("token labels: equivariant under whole-cube spatial translation") {
    Rng rng(37);
    const auto clip = oracle::random_clip(1, 2, 4, 8, rng);
    const auto spec = TokenGridSpec::for_clip(1, 2, 4, 8, 2, 2, 2);
    const auto base = token_region_labels(clip, spec);

    // circular shift by one cube along w
    VideoClip shifted = clip;
    for (int t = 0; t < clip.frames; ++t)
        for (int h = 0; h < clip.height; ++h)
            for (int w = 0; w < clip.width; ++w)
                shifted.segmap[shifted.voxel_index(t, h, (w + 2) % clip.width)] =
                    clip.segmap[clip.voxel_index(t, h, w)];
    const auto moved = token_region_labels(shifted, spec);
    for (int ti = 0; ti < spec.grid_t; ++ti)
        for (int hi = 0; hi < spec.grid_h; ++hi)
            for (int wi = 0; wi < spec.grid_w; ++wi)
                REQUIRE(moved[static_cast<std::size_t>(
                            spec.token_index(ti, hi, (wi + 1) % spec.grid_w))] ==
                        base[static_cast<std::size_t>(spec.token_index(ti, hi, wi))]);
}

TEST_CASE("token labels: segmap shape mismatch rejected") {
    Rng rng(41);
    const auto clip = oracle::random_clip(1, 2, 4, 4, rng);
    const auto spec = TokenGridSpec::for_clip(1, 2, 4, 8, 2, 2, 2);
    REQUIRE_THROWS_AS(token_region_labels(clip, spec), Error);
}
