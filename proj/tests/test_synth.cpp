// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "marlin/synth.hpp"

using namespace marlin;

TEST_CASE("synth: pure function of (seed, spec, motion)") {
    ClipSpec spec{3, 6, 32, 32, 2};
    MotionParams motion;
    const auto a = synth_face_clip(1234, spec, motion);
    const auto b = synth_face_clip(1234, spec, motion);
    REQUIRE(a.pixels == b.pixels);
    REQUIRE(a.segmap == b.segmap);
    const auto c = synth_face_clip(1235, spec, motion);
    REQUIRE(a.pixels != c.pixels);
}

TEST_CASE("synth: every frame carries all 7 region labels at >= 32x32") {
    ClipSpec spec{3, 4, 32, 32, 1};
    for (int open = 0; open <= 1; ++open) {
        MotionParams motion;
        motion.mouth_open = open == 1;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto clip = synth_face_clip(seed, spec, motion);
            for (int t = 0; t < spec.frames; ++t) {
                std::set<std::uint8_t> present;
                for (int h = 0; h < spec.height; ++h)
                    for (int w = 0; w < spec.width; ++w)
                        present.insert(clip.segmap[clip.voxel_index(t, h, w)]);
                INFO("seed " << seed << " frame " << t << " open " << open);
                REQUIRE(present.size() == 7);
            }
        }
    }
}

TEST_CASE("synth: zero motion amplitude yields identical frames") {
    ClipSpec spec{3, 5, 24, 24, 1};
    MotionParams motion;
    motion.amplitude = 0.0;
    const auto clip = synth_face_clip(77, spec, motion);
    for (int t = 1; t < spec.frames; ++t)
        for (int c = 0; c < 3; ++c)
            for (int h = 0; h < spec.height; ++h)
                for (int w = 0; w < spec.width; ++w) {
                    REQUIRE(clip.pixel(c, t, h, w) == clip.pixel(c, 0, h, w));
                    REQUIRE(clip.segmap[clip.voxel_index(t, h, w)] ==
                            clip.segmap[clip.voxel_index(0, h, w)]);
                }
}

TEST_CASE("synth: pixels land in [0,1] and clips validate") {
    ClipSpec spec{3, 3, 16, 16, 1};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto clip = synth_face_clip(seed, spec, {});
        clip.validate();
        for (float p : clip.pixels) REQUIRE((p >= 0.0f && p <= 1.0f));
    }
}

TEST_CASE("synth: mouth-open flag changes the mouth region's appearance") {
    ClipSpec spec{3, 2, 32, 32, 1};
    MotionParams closed, open;
    open.mouth_open = true;
    const auto a = synth_face_clip(5, spec, closed);
    const auto b = synth_face_clip(5, spec, open);
    // mouth pixels exist in both and differ strongly in at least one channel
    double max_delta = 0.0;
    int mouth_px = 0;
    for (int h = 0; h < spec.height; ++h)
        for (int w = 0; w < spec.width; ++w) {
            if (a.label(0, h, w) == RegionLabel::mouth && b.label(0, h, w) == RegionLabel::mouth) {
                ++mouth_px;
                for (int c = 0; c < 3; ++c)
                    max_delta = std::max(max_delta,
                                         std::abs(double(a.pixel(c, 0, h, w)) - b.pixel(c, 0, h, w)));
            }
        }
    REQUIRE(mouth_px > 0);
    REQUIRE(max_delta > 0.2);
}
