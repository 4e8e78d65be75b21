// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "marlin/masking.hpp"
#include "oracles.hpp"

using namespace marlin;

namespace {

std::vector<RegionLabel> random_labels(int k, Rng& rng) {
    std::vector<RegionLabel> labels(static_cast<std::size_t>(k));
    for (auto& l : labels) l = static_cast<RegionLabel>(rng.next_below(kNumRegionLabels));
    return labels;
}

std::set<int> masked_set(const MaskPlan& plan) {
    const auto ids = plan.masked_indices();
    return {ids.begin(), ids.end()};
}

}  // namespace

TEST_CASE("fasking: 4-token example masks the priority tokens for every shuffle seed") {
    const std::vector<RegionLabel> labels = {RegionLabel::nose, RegionLabel::skin,
                                             RegionLabel::background, RegionLabel::left_eye};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto plan = fasking(labels, 0.5, seed);
        REQUIRE(plan.n == 2);
        REQUIRE(masked_set(plan) == std::set<int>{0, 3});
    }
}

TEST_CASE("fasking: 4-token example at r=0.75 leaves only the background visible") {
    const std::vector<RegionLabel> labels = {RegionLabel::nose, RegionLabel::skin,
                                             RegionLabel::background, RegionLabel::left_eye};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto plan = fasking(labels, 0.75, seed);
        REQUIRE(plan.n == 3);
        REQUIRE(masked_set(plan) == std::set<int>{0, 1, 3});
    }
}

TEST_CASE("fasking: boundary ratios") {
    Rng rng(2);
    const auto labels = random_labels(12, rng);
    const auto none = fasking(labels, 0.0, 3);
    REQUIRE(none.n == 0);
    REQUIRE(none.masked_indices().empty());
    const auto all = fasking(labels, 1.0, 3);
    REQUIRE(all.n == 12);
    REQUIRE(all.visible_indices().empty());
}

TEST_CASE("fasking: rejects empty labels and out-of-range ratios") {
    REQUIRE_THROWS_AS(fasking({}, 0.5, 1), Error);
    Rng rng(2);
    const auto labels = random_labels(4, rng);
    REQUIRE_THROWS_AS(fasking(labels, -0.1, 1), Error);
    REQUIRE_THROWS_AS(fasking(labels, 1.1, 1), Error);
}

TEST_CASE("fasking: matches the brute-force ordered fill on random label vectors") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(64));
        const auto labels = random_labels(k, rng);
        const double r = rng.next_double();
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto plan = fasking(labels, r, seed);
            const auto expect = oracle::fasking_fill(labels, r, seed);
            REQUIRE(plan.masked == expect);
        }
    }
}

TEST_CASE("fasking: dominance, priority tokens are masked before any background/skin token") {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(64));
        const auto labels = random_labels(k, rng);
        const double r = rng.next_double();
        const auto plan = fasking(labels, r, rng.next_u64());
        bool base_masked = false;
        for (int i = 0; i < k; ++i) {
            const auto l = labels[static_cast<std::size_t>(i)];
            if ((l == RegionLabel::background || l == RegionLabel::skin) &&
                plan.masked[static_cast<std::size_t>(i)])
                base_masked = true;
        }
        if (base_masked) {
            for (int i = 0; i < k; ++i)
                if (is_priority_region(labels[static_cast<std::size_t>(i)]))
                    REQUIRE(plan.masked[static_cast<std::size_t>(i)]);
        }
    }
}

TEST_CASE("fasking: uniform labels degenerate to a seed-determined n-subset") {
    std::vector<RegionLabel> labels(40, RegionLabel::mouth);
    const auto a = fasking(labels, 0.6, 9);
    const auto b = fasking(labels, 0.6, 9);
    const auto c = fasking(labels, 0.6, 10);
    REQUIRE(a.n == 24);
    REQUIRE(a.masked == b.masked);
    REQUIRE(a.masked != c.masked);  // overwhelmingly likely across seeds
}

TEST_CASE("random_mask: boundary ratios and determinism") {
    REQUIRE(random_mask(10, 0.0, 1).n == 0);
    REQUIRE(random_mask(10, 1.0, 1).n == 10);
    const auto a = random_mask(100, 0.37, 123);
    const auto b = random_mask(100, 0.37, 123);
    REQUIRE(a.masked == b.masked);
    REQUIRE(a.n == 37);
}

TEST_CASE("random_mask: per-token masking frequency approaches r") {
    const int k = 100;
    const int trials = 10000;
    std::vector<int> counts(k, 0);
    for (int s = 0; s < trials; ++s) {
        const auto plan = random_mask(k, 0.9, static_cast<std::uint64_t>(s));
        for (int i = 0; i < k; ++i)
            if (plan.masked[static_cast<std::size_t>(i)]) counts[static_cast<std::size_t>(i)]++;
    }
    for (int i = 0; i < k; ++i) {
        const double freq = static_cast<double>(counts[static_cast<std::size_t>(i)]) / trials;
        REQUIRE(freq == Catch::Approx(0.9).margin(0.02));
    }
}

TEST_CASE("frame_mask: masks whole temporal slices") {
    const auto spec = TokenGridSpec::for_clip(3, 16, 224, 224, 2, 16, 16);
    const auto plan = frame_mask(spec, 0.9, 3);
    REQUIRE(plan.n == 7 * 196);
    std::set<int> slices;
    for (int i = 0; i < plan.k(); ++i)
        if (plan.masked[static_cast<std::size_t>(i)]) slices.insert(spec.temporal_index(i));
    REQUIRE(slices.size() == 7);
    // every token of a masked slice is masked
    for (int i = 0; i < plan.k(); ++i)
        if (slices.count(spec.temporal_index(i)))
            REQUIRE(plan.masked[static_cast<std::size_t>(i)]);
    REQUIRE(frame_mask(spec, 0.0, 3).n == 0);
}

TEST_CASE("tube_mask: constant along the temporal axis") {
    const auto spec = TokenGridSpec::for_clip(3, 16, 224, 224, 2, 16, 16);
    const auto plan = tube_mask(spec, 0.9, 4);
    REQUIRE(plan.n == 8 * 176);
    const int spatial = spec.grid_h * spec.grid_w;
    for (int cell = 0; cell < spatial; ++cell) {
        const bool at0 = plan.masked[static_cast<std::size_t>(cell)];
        for (int ti = 1; ti < spec.grid_t; ++ti)
            REQUIRE(plan.masked[static_cast<std::size_t>(ti * spatial + cell)] == at0);
    }
    REQUIRE(tube_mask(spec, 1.0, 4).n == spec.tokens());
}

TEST_CASE("all strategies: popcount equals each strategy's flooring rule") {
    const auto spec = TokenGridSpec::for_clip(3, 16, 224, 224, 2, 16, 16);
    Rng rng(77);
    const auto labels = random_labels(spec.tokens(), rng);
    for (int i = 0; i <= 20; ++i) {
        const double r = 0.05 * i;
        const auto count_true = [](const MaskPlan& p) {
            int c = 0;
            for (bool b : p.masked) c += b ? 1 : 0;
            return c;
        };
        const auto fa = fasking(labels, r, 9);
        REQUIRE(count_true(fa) == fa.n);
        REQUIRE(fa.n == static_cast<int>(std::floor(r * spec.tokens())));
        const auto ra = random_mask(spec.tokens(), r, 9);
        REQUIRE(count_true(ra) == ra.n);
        REQUIRE(ra.n == static_cast<int>(std::floor(r * spec.tokens())));
        const auto fr = frame_mask(spec, r, 9);
        REQUIRE(count_true(fr) == fr.n);
        REQUIRE(fr.n == static_cast<int>(std::floor(r * spec.grid_t)) * spec.grid_h * spec.grid_w);
        const auto tu = tube_mask(spec, r, 9);
        REQUIRE(count_true(tu) == tu.n);
        REQUIRE(tu.n ==
                spec.grid_t * static_cast<int>(std::floor(r * spec.grid_h * spec.grid_w)));
    }
}

TEST_CASE("split_tokens: all-visible plan is the identity partition") {
    Rng rng(8);
    Mat<float> tokens = Mat<float>::uniform01(6, 4, rng);
    MaskPlan plan;
    plan.masked.assign(6, false);
    plan.n = 0;
    const auto split = split_tokens(tokens, plan);
    REQUIRE(split.visible == tokens);
    REQUIRE(split.masked.rows() == 0);
}

TEST_CASE("split_tokens: k=4 masked {1,3} keeps visible rows (0,2) in order") {
    Mat<float> tokens(4, 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) tokens(i, j) = static_cast<float>(10 * i + j);
    MaskPlan plan;
    plan.masked = {false, true, false, true};
    plan.n = 2;
    const auto split = split_tokens(tokens, plan);
    REQUIRE(split.visible_indices == std::vector<int>{0, 2});
    REQUIRE(split.masked_indices == std::vector<int>{1, 3});
    REQUIRE(split.visible(0, 0) == 0.0f);
    REQUIRE(split.visible(1, 0) == 20.0f);
    REQUIRE(split.masked(0, 0) == 10.0f);
    REQUIRE(split.masked(1, 0) == 30.0f);
}

TEST_CASE("split_tokens/merge_tokens: partition inverts bitwise") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(32));
        Mat<float> tokens = Mat<float>::uniform01(k, 5, rng);
        const auto plan = random_mask(k, rng.next_double(), rng.next_u64());
        const auto split = split_tokens(tokens, plan);
        REQUIRE(merge_tokens(split) == tokens);
    }
}

TEST_CASE("split_tokens: size mismatch rejected") {
    Mat<float> tokens(4, 2);
    MaskPlan plan;
    plan.masked.assign(5, false);
    REQUIRE_THROWS_AS(split_tokens(tokens, plan), Error);
}

TEST_CASE("mask plan serialization: JSON round trip preserves the bitset") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + static_cast<int>(rng.next_below(200));
        const auto labels = random_labels(k, rng);
        auto plan = fasking(labels, rng.next_double(), rng.next_u64());
        const auto j = mask_plan_to_json(plan);
        const auto back = mask_plan_from_json(nlohmann::json::parse(j.dump()));
        REQUIRE(back.masked == plan.masked);
        REQUIRE(back.n == plan.n);
        REQUIRE(back.seed == plan.seed);
        REQUIRE(back.strategy == plan.strategy);
        REQUIRE(back.label_histogram == plan.label_histogram);
    }
}
