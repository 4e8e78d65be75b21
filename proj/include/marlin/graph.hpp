// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "marlin/mat.hpp"

namespace marlin {

// Reverse-mode autodiff over dense matrices. A Graph is built forward (node
// creation order is a topological order) and backward() replays it in
// reverse. Scalars are 1x1 matrices. Nodes that no parameter feeds into carry
// needs_grad=false and their backward closures never run, so e.g. a frozen
// generator costs nothing extra in the discriminator phase.
template <typename S>
class Graph {
public:
    using VarId = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    VarId input(Mat<S> value) { return push(std::move(value), false, {}); }
    VarId param(Mat<S> value) { return push(std::move(value), true, {}); }

    const Mat<S>& value(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Mat<S>& grad(VarId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool needs_grad(VarId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    // ---- elementwise / structural ops ----------------------------------

    VarId add(VarId a, VarId b) {
        const Mat<S>&va = value(a), &vb = value(b);
        require_arg(va.same_shape(vb), "graph add: shape mismatch");
        Mat<S> out(va.rows(), va.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = va.data()[i] + vb.data()[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](const Mat<S>& g) {
            accumulate(a, g);
            accumulate(b, g);
        });
    }

    VarId sub(VarId a, VarId b) {
        const Mat<S>&va = value(a), &vb = value(b);
        require_arg(va.same_shape(vb), "graph sub: shape mismatch");
        Mat<S> out(va.rows(), va.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = va.data()[i] - vb.data()[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](const Mat<S>& g) {
            accumulate(a, g);
            accumulate_scaled(b, g, S(-1));
        });
    }

    // a + s*b, same shapes.
    VarId add_scaled(VarId a, VarId b, S s) {
        const Mat<S>&va = value(a), &vb = value(b);
        require_arg(va.same_shape(vb), "graph add_scaled: shape mismatch");
        Mat<S> out(va.rows(), va.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = va.data()[i] + s * vb.data()[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b, s](const Mat<S>& g) {
            accumulate(a, g);
            accumulate_scaled(b, g, s);
        });
    }

    VarId scale(VarId a, S s) {
        const Mat<S>& va = value(a);
        Mat<S> out(va.rows(), va.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = va.data()[i] * s;
        return push(std::move(out), needs_grad(a),
                    [this, a, s](const Mat<S>& g) { accumulate_scaled(a, g, s); });
    }

    // Broadcast-add a 1 x cols row vector to every row.
    VarId add_row_broadcast(VarId a, VarId row) {
        const Mat<S>&va = value(a), &vr = value(row);
        require_arg(vr.rows() == 1 && vr.cols() == va.cols(), "graph add_row_broadcast: bad row shape");
        Mat<S> out(va.rows(), va.cols());
        for (int i = 0; i < va.rows(); ++i)
            for (int j = 0; j < va.cols(); ++j) out(i, j) = va(i, j) + vr(0, j);
        return push(std::move(out), needs_grad(a) || needs_grad(row),
                    [this, a, row](const Mat<S>& g) {
                        accumulate(a, g);
                        if (needs_grad(row)) {
                            Mat<S> rg(1, g.cols());
                            for (int i = 0; i < g.rows(); ++i)
                                for (int j = 0; j < g.cols(); ++j) rg(0, j) += g(i, j);
                            accumulate(row, rg);
                        }
                    });
    }

    VarId repeat_row(VarId row, int count) {
        const Mat<S>& vr = value(row);
        require_arg(vr.rows() == 1, "graph repeat_row: expected a row vector");
        Mat<S> out(count, vr.cols());
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < vr.cols(); ++j) out(i, j) = vr(0, j);
        return push(std::move(out), needs_grad(row), [this, row](const Mat<S>& g) {
            Mat<S> rg(1, g.cols());
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) rg(0, j) += g(i, j);
            accumulate(row, rg);
        });
    }

    // ---- matrix products ------------------------------------------------

    VarId matmul(VarId a, VarId b) {
        Mat<S> out;
        matmul_into(value(a), value(b), out);
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](const Mat<S>& g) {
            if (needs_grad(a)) {
                Mat<S> da;
                matmul_nt_into(g, value(b), da);
                accumulate(a, da);
            }
            if (needs_grad(b)) {
                Mat<S> db;
                matmul_tn_into(value(a), g, db);
                accumulate(b, db);
            }
        });
    }

    // a * b^T
    VarId matmul_nt(VarId a, VarId b) {
        Mat<S> out;
        matmul_nt_into(value(a), value(b), out);
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](const Mat<S>& g) {
            if (needs_grad(a)) {
                Mat<S> da;
                matmul_into(g, value(b), da);
                accumulate(a, da);
            }
            if (needs_grad(b)) {
                Mat<S> db;
                matmul_tn_into(g, value(a), db);
                accumulate(b, db);
            }
        });
    }

    // ---- nonlinearities ---------------------------------------------------

    VarId gelu(VarId a) {
        const Mat<S>& va = value(a);
        Mat<S> out(va.rows(), va.cols());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = static_cast<double>(va.data()[i]);
            out.data()[i] = static_cast<S>(0.5 * x * (1.0 + std::erf(x * 0.7071067811865476)));
        }
        return push(std::move(out), needs_grad(a), [this, a](const Mat<S>& g) {
            const Mat<S>& x = value(a);
            Mat<S> dx(x.rows(), x.cols());
            for (std::size_t i = 0; i < dx.size(); ++i) {
                const double xi = static_cast<double>(x.data()[i]);
                const double cdf = 0.5 * (1.0 + std::erf(xi * 0.7071067811865476));
                const double pdf = std::exp(-0.5 * xi * xi) * 0.3989422804014327;
                dx.data()[i] = g.data()[i] * static_cast<S>(cdf + xi * pdf);
            }
            accumulate(a, dx);
        });
    }

    // Row-wise layer norm with affine gamma/beta (1 x cols each).
    VarId layer_norm(VarId x, VarId gamma, VarId beta, S eps) {
        const Mat<S>& vx = value(x);
        const Mat<S>&vg = value(gamma), &vb = value(beta);
        require_arg(vg.rows() == 1 && vg.cols() == vx.cols() && vb.rows() == 1 && vb.cols() == vx.cols(),
                    "graph layer_norm: gamma/beta must be 1 x cols");
        const int R = vx.rows(), C = vx.cols();
        Mat<S> xhat(R, C);
        std::vector<S> inv_sigma(static_cast<std::size_t>(R));
        Mat<S> out(R, C);
        for (int i = 0; i < R; ++i) {
            const S* xi = vx.row(i);
            S mean = 0;
            for (int j = 0; j < C; ++j) mean += xi[j];
            mean /= static_cast<S>(C);
            S var = 0;
            for (int j = 0; j < C; ++j) {
                const S d = xi[j] - mean;
                var += d * d;
            }
            var /= static_cast<S>(C);
            const S is = S(1) / std::sqrt(var + eps);
            inv_sigma[static_cast<std::size_t>(i)] = is;
            for (int j = 0; j < C; ++j) {
                const S xh = (xi[j] - mean) * is;
                xhat(i, j) = xh;
                out(i, j) = vg(0, j) * xh + vb(0, j);
            }
        }
        return push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta),
                    [this, x, gamma, beta, xhat = std::move(xhat),
                     inv_sigma = std::move(inv_sigma)](const Mat<S>& g) {
                        const int R = g.rows(), C = g.cols();
                        const Mat<S>& vg = value(gamma);
                        if (needs_grad(gamma) || needs_grad(beta)) {
                            Mat<S> dgamma(1, C), dbeta(1, C);
                            for (int i = 0; i < R; ++i)
                                for (int j = 0; j < C; ++j) {
                                    dgamma(0, j) += g(i, j) * xhat(i, j);
                                    dbeta(0, j) += g(i, j);
                                }
                            if (needs_grad(gamma)) accumulate(gamma, dgamma);
                            if (needs_grad(beta)) accumulate(beta, dbeta);
                        }
                        if (needs_grad(x)) {
                            Mat<S> dx(R, C);
                            for (int i = 0; i < R; ++i) {
                                S mean_gg = 0, mean_gx = 0;
                                for (int j = 0; j < C; ++j) {
                                    const S gg = g(i, j) * vg(0, j);
                                    mean_gg += gg;
                                    mean_gx += gg * xhat(i, j);
                                }
                                mean_gg /= static_cast<S>(C);
                                mean_gx /= static_cast<S>(C);
                                const S is = inv_sigma[static_cast<std::size_t>(i)];
                                for (int j = 0; j < C; ++j) {
                                    const S gg = g(i, j) * vg(0, j);
                                    dx(i, j) = (gg - mean_gg - xhat(i, j) * mean_gx) * is;
                                }
                            }
                            accumulate(x, dx);
                        }
                    });
    }

    VarId softmax_rows(VarId a) {
        const Mat<S>& va = value(a);
        Mat<S> out(va.rows(), va.cols());
        for (int i = 0; i < va.rows(); ++i) {
            const S* xi = va.row(i);
            S mx = xi[0];
            for (int j = 1; j < va.cols(); ++j) mx = std::max(mx, xi[j]);
            S sum = 0;
            for (int j = 0; j < va.cols(); ++j) {
                const S e = std::exp(xi[j] - mx);
                out(i, j) = e;
                sum += e;
            }
            for (int j = 0; j < va.cols(); ++j) out(i, j) /= sum;
        }
        Mat<S> y = out;  // kept for the Jacobian-vector product
        return push(std::move(out), needs_grad(a), [this, a, y = std::move(y)](const Mat<S>& g) {
            Mat<S> dx(g.rows(), g.cols());
            for (int i = 0; i < g.rows(); ++i) {
                S dot = 0;
                for (int j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
                for (int j = 0; j < g.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
            }
            accumulate(a, dx);
        });
    }

    // ---- row/column selection --------------------------------------------

    VarId slice_cols(VarId a, int c0, int c1) {
        const Mat<S>& va = value(a);
        require_arg(0 <= c0 && c0 < c1 && c1 <= va.cols(), "graph slice_cols: bad range");
        Mat<S> out(va.rows(), c1 - c0);
        for (int i = 0; i < va.rows(); ++i)
            for (int j = c0; j < c1; ++j) out(i, j - c0) = va(i, j);
        return push(std::move(out), needs_grad(a), [this, a, c0](const Mat<S>& g) {
            const Mat<S>& va = value(a);
            Mat<S> da(va.rows(), va.cols());
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) da(i, c0 + j) = g(i, j);
            accumulate(a, da);
        });
    }

    VarId concat_cols(const std::vector<VarId>& parts) {
        require_arg(!parts.empty(), "graph concat_cols: empty");
        int cols = 0;
        bool ng = false;
        const int rows = value(parts[0]).rows();
        for (VarId p : parts) {
            require_arg(value(p).rows() == rows, "graph concat_cols: row mismatch");
            cols += value(p).cols();
            ng = ng || needs_grad(p);
        }
        Mat<S> out(rows, cols);
        int off = 0;
        for (VarId p : parts) {
            const Mat<S>& vp = value(p);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < vp.cols(); ++j) out(i, off + j) = vp(i, j);
            off += vp.cols();
        }
        return push(std::move(out), ng, [this, parts](const Mat<S>& g) {
            int off = 0;
            for (VarId p : parts) {
                const int pc = value(p).cols();
                if (needs_grad(p)) {
                    Mat<S> dp(g.rows(), pc);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < pc; ++j) dp(i, j) = g(i, off + j);
                    accumulate(p, dp);
                }
                off += pc;
            }
        });
    }

    VarId concat_rows(const std::vector<VarId>& parts) {
        require_arg(!parts.empty(), "graph concat_rows: empty");
        int rows = 0;
        bool ng = false;
        const int cols = value(parts[0]).cols();
        for (VarId p : parts) {
            require_arg(value(p).cols() == cols, "graph concat_rows: col mismatch");
            rows += value(p).rows();
            ng = ng || needs_grad(p);
        }
        Mat<S> out(rows, cols);
        int off = 0;
        for (VarId p : parts) {
            const Mat<S>& vp = value(p);
            for (int i = 0; i < vp.rows(); ++i)
                for (int j = 0; j < cols; ++j) out(off + i, j) = vp(i, j);
            off += vp.rows();
        }
        return push(std::move(out), ng, [this, parts](const Mat<S>& g) {
            int off = 0;
            for (VarId p : parts) {
                const int pr = value(p).rows();
                if (needs_grad(p)) {
                    Mat<S> dp(pr, g.cols());
                    for (int i = 0; i < pr; ++i)
                        for (int j = 0; j < g.cols(); ++j) dp(i, j) = g(off + i, j);
                    accumulate(p, dp);
                }
                off += pr;
            }
        });
    }

    VarId gather_rows(VarId a, std::vector<int> idx) {
        const Mat<S>& va = value(a);
        for (int i : idx) require_arg(0 <= i && i < va.rows(), "graph gather_rows: index out of range");
        Mat<S> out(static_cast<int>(idx.size()), va.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < va.cols(); ++j) out(static_cast<int>(i), j) = va(idx[i], j);
        return push(std::move(out), needs_grad(a), [this, a, idx = std::move(idx)](const Mat<S>& g) {
            const Mat<S>& va = value(a);
            Mat<S> da(va.rows(), va.cols());
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (int j = 0; j < g.cols(); ++j) da(idx[i], j) += g(static_cast<int>(i), j);
            accumulate(a, da);
        });
    }

    // Scatter two row blocks into a rows x cols output; index sets must
    // partition [0, rows).
    VarId assemble_rows(int rows, VarId a, std::vector<int> ia, VarId b, std::vector<int> ib) {
        const Mat<S>&va = value(a), &vb = value(b);
        require_arg(va.cols() == vb.cols() || va.rows() == 0 || vb.rows() == 0,
                    "graph assemble_rows: column mismatch");
        require_arg(static_cast<int>(ia.size()) == va.rows() && static_cast<int>(ib.size()) == vb.rows(),
                    "graph assemble_rows: index count mismatch");
        require_arg(static_cast<int>(ia.size() + ib.size()) == rows,
                    "graph assemble_rows: indices must cover all rows");
        std::vector<char> seen(static_cast<std::size_t>(rows), 0);
        for (const auto& idx : {ia, ib})
            for (int i : idx) {
                require_arg(0 <= i && i < rows && !seen[static_cast<std::size_t>(i)],
                            "graph assemble_rows: indices must partition the rows");
                seen[static_cast<std::size_t>(i)] = 1;
            }
        const int cols = va.rows() > 0 ? va.cols() : vb.cols();
        Mat<S> out(rows, cols);
        for (std::size_t i = 0; i < ia.size(); ++i)
            for (int j = 0; j < cols; ++j) out(ia[i], j) = va(static_cast<int>(i), j);
        for (std::size_t i = 0; i < ib.size(); ++i)
            for (int j = 0; j < cols; ++j) out(ib[i], j) = vb(static_cast<int>(i), j);
        return push(std::move(out), needs_grad(a) || needs_grad(b),
                    [this, a, b, ia = std::move(ia), ib = std::move(ib)](const Mat<S>& g) {
                        if (needs_grad(a)) {
                            Mat<S> da(static_cast<int>(ia.size()), g.cols());
                            for (std::size_t i = 0; i < ia.size(); ++i)
                                for (int j = 0; j < g.cols(); ++j) da(static_cast<int>(i), j) = g(ia[i], j);
                            accumulate(a, da);
                        }
                        if (needs_grad(b)) {
                            Mat<S> db(static_cast<int>(ib.size()), g.cols());
                            for (std::size_t i = 0; i < ib.size(); ++i)
                                for (int j = 0; j < g.cols(); ++j) db(static_cast<int>(i), j) = g(ib[i], j);
                            accumulate(b, db);
                        }
                    });
    }

    // ---- reductions / losses ----------------------------------------------

    VarId mean_rows(VarId a) {
        const Mat<S>& va = value(a);
        require_arg(va.rows() >= 1, "graph mean_rows: empty input");
        Mat<S> out(1, va.cols());
        for (int i = 0; i < va.rows(); ++i)
            for (int j = 0; j < va.cols(); ++j) out(0, j) += va(i, j);
        for (int j = 0; j < va.cols(); ++j) out(0, j) /= static_cast<S>(va.rows());
        return push(std::move(out), needs_grad(a), [this, a](const Mat<S>& g) {
            const Mat<S>& va = value(a);
            Mat<S> da(va.rows(), va.cols());
            const S inv = S(1) / static_cast<S>(va.rows());
            for (int i = 0; i < va.rows(); ++i)
                for (int j = 0; j < va.cols(); ++j) da(i, j) = g(0, j) * inv;
            accumulate(a, da);
        });
    }

    VarId mean_all(VarId a) {
        const Mat<S>& va = value(a);
        require_arg(va.size() > 0, "graph mean_all: empty input");
        S acc = 0;
        for (std::size_t i = 0; i < va.size(); ++i) acc += va.data()[i];
        Mat<S> out(1, 1);
        out(0, 0) = acc / static_cast<S>(va.size());
        return push(std::move(out), needs_grad(a), [this, a](const Mat<S>& g) {
            const Mat<S>& va = value(a);
            Mat<S> da(va.rows(), va.cols());
            const S s = g(0, 0) / static_cast<S>(va.size());
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] = s;
            accumulate(a, da);
        });
    }

    // Mean squared error over all element pairs.
    VarId mse(VarId a, VarId b) {
        const Mat<S>&va = value(a), &vb = value(b);
        require_arg(va.same_shape(vb), "graph mse: shape mismatch");
        require_arg(va.size() > 0, "graph mse: empty input");
        S acc = 0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            const S d = va.data()[i] - vb.data()[i];
            acc += d * d;
        }
        Mat<S> out(1, 1);
        out(0, 0) = acc / static_cast<S>(va.size());
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](const Mat<S>& g) {
            const Mat<S>&va = value(a), &vb = value(b);
            const S s = g(0, 0) * S(2) / static_cast<S>(va.size());
            if (needs_grad(a)) {
                Mat<S> da(va.rows(), va.cols());
                for (std::size_t i = 0; i < va.size(); ++i)
                    da.data()[i] = s * (va.data()[i] - vb.data()[i]);
                accumulate(a, da);
            }
            if (needs_grad(b)) {
                Mat<S> db(vb.rows(), vb.cols());
                for (std::size_t i = 0; i < vb.size(); ++i)
                    db.data()[i] = s * (vb.data()[i] - va.data()[i]);
                accumulate(b, db);
            }
        });
    }

    // Mean softmax cross-entropy over rows; labels are class indices.
    VarId softmax_cross_entropy(VarId logits, std::vector<int> labels) {
        const Mat<S>& vl = value(logits);
        require_arg(static_cast<int>(labels.size()) == vl.rows(), "graph ce: one label per row");
        for (int y : labels) require_arg(0 <= y && y < vl.cols(), "graph ce: label out of range");
        Mat<S> probs(vl.rows(), vl.cols());
        S loss = 0;
        for (int i = 0; i < vl.rows(); ++i) {
            const S* xi = vl.row(i);
            S mx = xi[0];
            for (int j = 1; j < vl.cols(); ++j) mx = std::max(mx, xi[j]);
            S sum = 0;
            for (int j = 0; j < vl.cols(); ++j) {
                const S e = std::exp(xi[j] - mx);
                probs(i, j) = e;
                sum += e;
            }
            for (int j = 0; j < vl.cols(); ++j) probs(i, j) /= sum;
            loss -= std::log(probs(i, labels[static_cast<std::size_t>(i)]));
        }
        Mat<S> out(1, 1);
        out(0, 0) = loss / static_cast<S>(vl.rows());
        return push(std::move(out), needs_grad(logits),
                    [this, logits, probs = std::move(probs), labels = std::move(labels)](const Mat<S>& g) {
                        Mat<S> dl(probs.rows(), probs.cols());
                        const S s = g(0, 0) / static_cast<S>(probs.rows());
                        for (int i = 0; i < probs.rows(); ++i)
                            for (int j = 0; j < probs.cols(); ++j) {
                                const S onehot = labels[static_cast<std::size_t>(i)] == j ? S(1) : S(0);
                                dl(i, j) = s * (probs(i, j) - onehot);
                            }
                        accumulate(logits, dl);
                    });
    }

    // Mean binary cross-entropy with logits against 0/1 targets.
    VarId sigmoid_bce(VarId logits, Mat<S> targets) {
        const Mat<S>& vl = value(logits);
        require_arg(vl.same_shape(targets), "graph bce: shape mismatch");
        require_arg(vl.size() > 0, "graph bce: empty input");
        S loss = 0;
        for (std::size_t i = 0; i < vl.size(); ++i) {
            const S z = vl.data()[i], t = targets.data()[i];
            loss += std::max(z, S(0)) - z * t + std::log(S(1) + std::exp(-std::abs(z)));
        }
        Mat<S> out(1, 1);
        out(0, 0) = loss / static_cast<S>(vl.size());
        return push(std::move(out), needs_grad(logits),
                    [this, logits, targets = std::move(targets)](const Mat<S>& g) {
                        const Mat<S>& vl = value(logits);
                        Mat<S> dl(vl.rows(), vl.cols());
                        const S s = g(0, 0) / static_cast<S>(vl.size());
                        for (std::size_t i = 0; i < vl.size(); ++i) {
                            const S z = vl.data()[i];
                            const S sig = S(1) / (S(1) + std::exp(-z));
                            dl.data()[i] = s * (sig - targets.data()[i]);
                        }
                        accumulate(logits, dl);
                    });
    }

    // ---- backward ---------------------------------------------------------

    void backward(VarId root) {
        Node& r = nodes_[static_cast<std::size_t>(root)];
        require_arg(r.value.rows() == 1 && r.value.cols() == 1, "backward root must be scalar");
        for (auto& n : nodes_) {
            if (n.needs_grad) n.grad = Mat<S>(n.value.rows(), n.value.cols());
        }
        require_arg(r.needs_grad, "backward: root does not depend on any parameter");
        r.grad(0, 0) = S(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.backward_fn) n.backward_fn(n.grad);
        }
    }

private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        bool needs_grad = false;
        std::function<void(const Mat<S>&)> backward_fn;
    };

    VarId push(Mat<S> value, bool needs_grad, std::function<void(const Mat<S>&)> fn) {
        nodes_.push_back(Node{std::move(value), {}, needs_grad, std::move(fn)});
        return static_cast<VarId>(nodes_.size() - 1);
    }

    void accumulate(VarId id, const Mat<S>& g) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g.data()[i];
    }

    void accumulate_scaled(VarId id, const Mat<S>& g, S s) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.data()[i] += s * g.data()[i];
    }

    std::vector<Node> nodes_;
};

}  // namespace marlin
