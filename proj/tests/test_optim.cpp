// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "marlin/optim.hpp"

using namespace marlin;

TEST_CASE("lr_at: scaling rule holds exactly at step 0") {
    REQUIRE(lr_at(0, 100, 1.5e-4, 256, LrSchedule::cosine) == 1.5e-4);
    REQUIRE(lr_at(0, 100, 1.5e-4, 128, LrSchedule::cosine) == 1.5e-4 * 128 / 256.0);
}

TEST_CASE("lr_at: cosine floor reaches zero at the final step") {
    REQUIRE(lr_at(100, 100, 1.5e-4, 64, LrSchedule::cosine) == 0.0);
}

TEST_CASE("lr_at: exact half value at the midpoint") {
    const double full = lr_at(0, 100, 2e-3, 32, LrSchedule::cosine);
    const double mid = lr_at(50, 100, 2e-3, 32, LrSchedule::cosine);
    REQUIRE(mid == Catch::Approx(full / 2).epsilon(1e-12));
}

TEST_CASE("lr_at: doubling the batch size doubles the rate at every step") {
    for (long s : {0L, 7L, 50L, 99L, 100L}) {
        REQUIRE(lr_at(s, 100, 1.5e-4, 64, LrSchedule::cosine) * 2 ==
                lr_at(s, 100, 1.5e-4, 128, LrSchedule::cosine));
    }
}

TEST_CASE("lr_at: constant schedule ignores progress") {
    REQUIRE(lr_at(0, 100, 1e-4, 32, LrSchedule::constant) ==
            lr_at(100, 100, 1e-4, 32, LrSchedule::constant));
}

TEST_CASE("lr_at: step beyond total rejected") {
    REQUIRE_THROWS_AS(lr_at(101, 100, 1e-4, 32, LrSchedule::cosine), Error);
}

TEST_CASE("adamw: first step matches the closed-form update") {
    // t=1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps)
    NamedTensor<double> w{"w", ParamGroup::encoder, true, Mat<double>(1, 2)};
    w.value(0, 0) = 1.0;
    w.value(0, 1) = -2.0;
    Mat<double> g(1, 2);
    g(0, 0) = 0.5;
    g(0, 1) = -0.125;
    AdamW<double> opt(0.9, 0.99, 0.0);
    opt.step_tensor(w, g, 0.1);
    REQUIRE(w.value(0, 0) == Catch::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-8))).epsilon(1e-12));
    REQUIRE(w.value(0, 1) == Catch::Approx(-2.0 - 0.1 * (-0.125 / (0.125 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adamw: decoupled weight decay shrinks weights even with zero gradient") {
    NamedTensor<double> w{"w", ParamGroup::encoder, true, Mat<double>(1, 1, 2.0)};
    Mat<double> g(1, 1, 0.0);
    AdamW<double> opt(0.9, 0.99, 0.01);
    opt.step_tensor(w, g, 0.5);
    REQUIRE(w.value(0, 0) == 2.0 - 0.5 * 0.01 * 2.0);
}

TEST_CASE("adamw: per-tensor state keyed by name") {
    NamedTensor<double> a{"a", ParamGroup::encoder, true, Mat<double>(1, 1, 0.0)};
    NamedTensor<double> b{"b", ParamGroup::encoder, true, Mat<double>(1, 1, 0.0)};
    Mat<double> g(1, 1, 1.0);
    AdamW<double> opt(0.9, 0.99, 0.0);
    opt.step_tensor(a, g, 0.1);
    opt.step_tensor(a, g, 0.1);
    opt.step_tensor(b, g, 0.1);
    // b saw one step, a saw two; their values must differ
    REQUIRE(a.value(0, 0) != b.value(0, 0));
}
