// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "marlin/mat.hpp"
#include "marlin/model.hpp"

namespace marlin {

// Adam with decoupled weight decay. Per-tensor moment state and step count;
// stepping a subset of the registry (a training phase) leaves the other
// tensors and their state untouched.
template <typename S>
class AdamW {
public:
    AdamW(double beta1, double beta2, double weight_decay, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

    void step_tensor(NamedTensor<S>& tensor, const Mat<S>& grad, double lr) {
        require_arg(tensor.value.same_shape(grad), "adamw: gradient shape mismatch for " + tensor.name);
        State& st = states_[tensor.name];
        if (st.m.size() == 0) {
            st.m = Mat<S>(grad.rows(), grad.cols());
            st.v = Mat<S>(grad.rows(), grad.cols());
        }
        st.t += 1;
        const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        const S bc1 = static_cast<S>(1.0 - std::pow(beta1_, st.t));
        const S bc2 = static_cast<S>(1.0 - std::pow(beta2_, st.t));
        const S lr_s = static_cast<S>(lr);
        const S wd = static_cast<S>(weight_decay_);
        const S eps = static_cast<S>(eps_);
        S* w = tensor.value.data();
        const S* g = grad.data();
        S* m = st.m.data();
        S* v = st.v.data();
        for (std::size_t i = 0; i < tensor.value.size(); ++i) {
            m[i] = b1 * m[i] + (S(1) - b1) * g[i];
            v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
            const S mhat = m[i] / bc1;
            const S vhat = v[i] / bc2;
            w[i] -= lr_s * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
        }
    }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double weight_decay() const { return weight_decay_; }

private:
    struct State {
        Mat<S> m, v;
        long t = 0;
    };
    double beta1_, beta2_, weight_decay_, eps_;
    std::unordered_map<std::string, State> states_;
};

enum class LrSchedule { cosine, constant };

inline const char* lr_schedule_name(LrSchedule s) {
    return s == LrSchedule::cosine ? "cosine" : "constant";
}

inline LrSchedule parse_lr_schedule(const std::string& name) {
    if (name == "cosine") return LrSchedule::cosine;
    if (name == "constant") return LrSchedule::constant;
    throw Error::invalid("unknown lr schedule: " + name);
}

// Linear-scaled base rate (base * batch / 256) modulated by a half cosine
// from 1 at step 0 to 0 at total_steps.
inline double lr_at(long step, long total_steps, double base_lr, int batch_size,
                    LrSchedule schedule) {
    require_arg(step >= 0 && step <= total_steps, "lr_at: step out of range");
    const double scaled = base_lr * static_cast<double>(batch_size) / 256.0;
    if (schedule == LrSchedule::constant) return scaled;
    if (total_steps == 0) return scaled;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return scaled * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace marlin
