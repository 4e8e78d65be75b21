// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "marlin/graph.hpp"
#include "marlin/rng.hpp"

using namespace marlin;
using G = Graph<double>;
using VarId = G::VarId;

namespace {

// Deterministic pseudo-random target used to turn an op output into a scalar
// loss with dense, non-trivial gradients.
Mat<double> target_like(int rows, int cols) {
    Rng rng(derive_seed(0xfeed, static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols)));
    Mat<double> t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.next_double() * 2.0 - 1.0;
    return t;
}

using Builder = std::function<VarId(G&, const std::vector<VarId>&)>;

double eval_scalar(const Builder& build, const std::vector<Mat<double>>& inputs) {
    G g;
    std::vector<VarId> vars;
    for (const auto& in : inputs) vars.push_back(g.param(in));
    const VarId out = build(g, vars);
    const Mat<double>& ov = g.value(out);
    if (ov.rows() == 1 && ov.cols() == 1) return ov(0, 0);
    const VarId loss = g.mse(out, g.input(target_like(ov.rows(), ov.cols())));
    return g.value(loss)(0, 0);
}

// Central finite differences on every element of every input vs analytic
// gradients from one backward pass.
void check_gradients(const std::string& name, const Builder& build,
                     std::vector<Mat<double>> inputs, double h = 1e-5) {
    G g;
    std::vector<VarId> vars;
    for (const auto& in : inputs) vars.push_back(g.param(in));
    VarId out = build(g, vars);
    const Mat<double>& ov = g.value(out);
    if (!(ov.rows() == 1 && ov.cols() == 1)) {
        out = g.mse(out, g.input(target_like(ov.rows(), ov.cols())));
    }
    g.backward(out);

    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        const Mat<double>& analytic = g.grad(vars[vi]);
        for (std::size_t idx = 0; idx < inputs[vi].size(); ++idx) {
            auto perturbed = inputs;
            perturbed[vi].data()[idx] += h;
            const double up = eval_scalar(build, perturbed);
            perturbed[vi].data()[idx] -= 2 * h;
            const double down = eval_scalar(build, perturbed);
            const double fd = (up - down) / (2 * h);
            const double got = analytic.data()[idx];
            const double err = std::abs(fd - got);
            const double tol = 1e-10 + 1e-6 * std::max(std::abs(fd), std::abs(got));
            INFO(name << " input " << vi << " element " << idx << ": analytic " << got << " fd " << fd);
            REQUIRE(err <= tol);
        }
    }
}

Mat<double> rand_mat(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Mat<double> m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.next_double() * 2.0 - 1.0;
    return m;
}

}  // namespace

TEST_CASE("graph gradients: matmul family") {
    check_gradients("matmul", [](G& g, const std::vector<VarId>& v) { return g.matmul(v[0], v[1]); },
                    {rand_mat(3, 4, 1), rand_mat(4, 2, 2)});
    check_gradients("matmul_nt", [](G& g, const std::vector<VarId>& v) { return g.matmul_nt(v[0], v[1]); },
                    {rand_mat(3, 4, 3), rand_mat(5, 4, 4)});
}

TEST_CASE("graph gradients: elementwise and broadcast ops") {
    check_gradients("add", [](G& g, const std::vector<VarId>& v) { return g.add(v[0], v[1]); },
                    {rand_mat(3, 3, 5), rand_mat(3, 3, 6)});
    check_gradients("sub", [](G& g, const std::vector<VarId>& v) { return g.sub(v[0], v[1]); },
                    {rand_mat(3, 3, 7), rand_mat(3, 3, 8)});
    check_gradients("add_scaled",
                    [](G& g, const std::vector<VarId>& v) { return g.add_scaled(v[0], v[1], 0.37); },
                    {rand_mat(2, 4, 9), rand_mat(2, 4, 10)});
    check_gradients("scale", [](G& g, const std::vector<VarId>& v) { return g.scale(v[0], -1.7); },
                    {rand_mat(3, 2, 11)});
    check_gradients("add_row_broadcast",
                    [](G& g, const std::vector<VarId>& v) { return g.add_row_broadcast(v[0], v[1]); },
                    {rand_mat(4, 3, 12), rand_mat(1, 3, 13)});
    check_gradients("repeat_row",
                    [](G& g, const std::vector<VarId>& v) { return g.repeat_row(v[0], 5); },
                    {rand_mat(1, 4, 14)});
}

TEST_CASE("graph gradients: nonlinearities") {
    check_gradients("gelu", [](G& g, const std::vector<VarId>& v) { return g.gelu(v[0]); },
                    {rand_mat(3, 4, 15)});
    check_gradients("softmax_rows",
                    [](G& g, const std::vector<VarId>& v) { return g.softmax_rows(v[0]); },
                    {rand_mat(3, 5, 16)});
    check_gradients("layer_norm",
                    [](G& g, const std::vector<VarId>& v) { return g.layer_norm(v[0], v[1], v[2], 1e-5); },
                    {rand_mat(4, 6, 17), rand_mat(1, 6, 18), rand_mat(1, 6, 19)});
}

TEST_CASE("graph gradients: selection and assembly") {
    check_gradients("slice_cols",
                    [](G& g, const std::vector<VarId>& v) { return g.slice_cols(v[0], 1, 4); },
                    {rand_mat(3, 6, 20)});
    check_gradients("concat_cols",
                    [](G& g, const std::vector<VarId>& v) {
                        return g.concat_cols({v[0], v[1]});
                    },
                    {rand_mat(3, 2, 21), rand_mat(3, 4, 22)});
    check_gradients("concat_rows",
                    [](G& g, const std::vector<VarId>& v) {
                        return g.concat_rows({v[0], v[1]});
                    },
                    {rand_mat(2, 3, 23), rand_mat(4, 3, 24)});
    check_gradients("gather_rows (with duplicates)",
                    [](G& g, const std::vector<VarId>& v) {
                        return g.gather_rows(v[0], {2, 0, 2, 1});
                    },
                    {rand_mat(3, 3, 25)});
    check_gradients("assemble_rows",
                    [](G& g, const std::vector<VarId>& v) {
                        return g.assemble_rows(5, v[0], {0, 2, 4}, v[1], {1, 3});
                    },
                    {rand_mat(3, 3, 26), rand_mat(2, 3, 27)});
}

TEST_CASE("graph gradients: reductions and losses") {
    check_gradients("mean_rows", [](G& g, const std::vector<VarId>& v) { return g.mean_rows(v[0]); },
                    {rand_mat(4, 3, 28)});
    check_gradients("mean_all", [](G& g, const std::vector<VarId>& v) { return g.mean_all(v[0]); },
                    {rand_mat(3, 4, 29)});
    check_gradients("mse", [](G& g, const std::vector<VarId>& v) { return g.mse(v[0], v[1]); },
                    {rand_mat(3, 4, 30), rand_mat(3, 4, 31)});
    check_gradients("softmax_cross_entropy",
                    [](G& g, const std::vector<VarId>& v) {
                        return g.softmax_cross_entropy(v[0], {0, 2, 1});
                    },
                    {rand_mat(3, 3, 32)});
    Mat<double> targets(3, 2);
    targets(0, 0) = 1.0;
    targets(1, 1) = 1.0;
    targets(2, 0) = 1.0;
    check_gradients("sigmoid_bce",
                    [targets](G& g, const std::vector<VarId>& v) {
                        return g.sigmoid_bce(v[0], targets);
                    },
                    {rand_mat(3, 2, 33)});
}

TEST_CASE("graph: composite expression matches finite differences") {
    check_gradients("mini transformer-ish block",
                    [](G& g, const std::vector<VarId>& v) {
                        auto x = g.add_row_broadcast(g.matmul(v[0], v[1]), v[2]);
                        auto a = g.softmax_rows(g.scale(g.matmul_nt(x, x), 0.5));
                        auto y = g.matmul(a, x);
                        return g.layer_norm(g.add(x, y), v[3], v[4], 1e-5);
                    },
                    {rand_mat(3, 4, 34), rand_mat(4, 4, 35), rand_mat(1, 4, 36), rand_mat(1, 4, 37),
                     rand_mat(1, 4, 38)});
}

TEST_CASE("graph: detached inputs receive no gradient and spare their subgraph") {
    G g;
    const auto p = g.param(rand_mat(2, 2, 40));
    const auto frozen = g.input(rand_mat(2, 2, 41));
    const auto prod = g.matmul(p, frozen);
    const auto loss = g.mse(prod, g.input(rand_mat(2, 2, 42)));
    g.backward(loss);
    REQUIRE(g.grad(p).size() == 4);
    REQUIRE_FALSE(g.needs_grad(frozen));
    // a graph whose root has no parameter ancestry cannot be differentiated
    G g2;
    const auto a = g2.input(rand_mat(2, 2, 43));
    const auto l2 = g2.mean_all(a);
    REQUIRE_THROWS_AS(g2.backward(l2), Error);
}

TEST_CASE("graph: gradient accumulates across fan-out") {
    G g;
    const auto p = g.param(rand_mat(2, 3, 44));
    const auto sum = g.add(p, p);
    const auto loss = g.mean_all(sum);
    g.backward(loss);
    for (std::size_t i = 0; i < g.grad(p).size(); ++i)
        REQUIRE(g.grad(p).data()[i] == Catch::Approx(2.0 / 6.0).epsilon(1e-12));
}
