// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "marlin/common.hpp"
#include "marlin/rng.hpp"

namespace marlin {

// Dense row-major matrix. The whole numeric stack is templated on the scalar
// type: float for training/CLI work, double for gradient-check tests.
template <typename S>
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, S fill = S(0))
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
        require_arg(rows >= 0 && cols >= 0, "matrix dims must be non-negative");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    S& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    S operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    S* data() noexcept { return data_.data(); }
    const S* data() const noexcept { return data_.data(); }
    S* row(int i) noexcept { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const S* row(int i) const noexcept { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    void fill(S v) { data_.assign(data_.size(), v); }

    bool same_shape(const Mat& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const noexcept {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static Mat trunc_normal(int rows, int cols, double std_dev, Rng& rng) {
        Mat m(rows, cols);
        for (auto& v : m.data_) v = static_cast<S>(rng.next_trunc_normal(std_dev));
        return m;
    }

    static Mat uniform01(int rows, int cols, Rng& rng) {
        Mat m(rows, cols);
        for (auto& v : m.data_) v = static_cast<S>(rng.next_double());
        return m;
    }

    template <typename T>
    Mat<T> cast() const {
        Mat<T> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<T>(data_[i]);
        return out;
    }

    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<S> data_;
};

// C = A * B, fixed ikj loop order for determinism and cache locality.
template <typename S>
void matmul_into(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    require_arg(a.cols() == b.rows(), "matmul: inner dims differ");
    if (!accumulate || c.rows() != a.rows() || c.cols() != b.cols()) {
        c = Mat<S>(a.rows(), b.cols());
    }
    const int n = a.rows(), k = a.cols(), m = b.cols();
    for (int i = 0; i < n; ++i) {
        S* ci = c.row(i);
        for (int l = 0; l < k; ++l) {
            const S ail = a(i, l);
            const S* bl = b.row(l);
            for (int j = 0; j < m; ++j) ci[j] += ail * bl[j];
        }
    }
}

// C = A * B^T.
template <typename S>
void matmul_nt_into(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    require_arg(a.cols() == b.cols(), "matmul_nt: inner dims differ");
    if (!accumulate || c.rows() != a.rows() || c.cols() != b.rows()) {
        c = Mat<S>(a.rows(), b.rows());
    }
    const int n = a.rows(), k = a.cols(), m = b.rows();
    for (int i = 0; i < n; ++i) {
        const S* ai = a.row(i);
        S* ci = c.row(i);
        for (int j = 0; j < m; ++j) {
            const S* bj = b.row(j);
            S acc = S(0);
            for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
            ci[j] += acc;
        }
    }
}

// C = A^T * B.
template <typename S>
void matmul_tn_into(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    require_arg(a.rows() == b.rows(), "matmul_tn: inner dims differ");
    if (!accumulate || c.rows() != a.cols() || c.cols() != b.cols()) {
        c = Mat<S>(a.cols(), b.cols());
    }
    const int n = a.cols(), k = a.rows(), m = b.cols();
    for (int l = 0; l < k; ++l) {
        const S* al = a.row(l);
        const S* bl = b.row(l);
        for (int i = 0; i < n; ++i) {
            const S ali = al[i];
            S* ci = c.row(i);
            for (int j = 0; j < m; ++j) ci[j] += ali * bl[j];
        }
    }
}

template <typename S>
double frobenius_norm(const Mat<S>& m) {
    double acc = 0.0;
    const S* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) acc += static_cast<double>(p[i]) * static_cast<double>(p[i]);
    return std::sqrt(acc);
}

}  // namespace marlin
