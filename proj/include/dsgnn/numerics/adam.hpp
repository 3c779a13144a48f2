#pragma once

#include <cmath>
#include <map>
#include <string>

#include "dsgnn/numerics/param_bundle.hpp"

namespace dsgnn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. First/second moments are kept per bundle entry name.
class Adam {
public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) { validate(opts_); }

    static void validate(const AdamOptions& o) {
        if (!(o.lr > 0.0)) throw ConfigError("adam: learning rate must be > 0, got " + std::to_string(o.lr));
        if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
            throw ConfigError("adam: betas must lie in [0, 1)");
        }
        if (!(o.eps > 0.0)) throw ConfigError("adam: eps must be > 0");
    }

    /// Applies one update using the gradients currently held in `params`.
    void step(ParamBundle& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (auto& [name, e] : params) {
            auto& st = state_[name];
            if (st.m.empty()) {
                st.m = DenseArray(e.value.shape(), 0.0);
                st.v = DenseArray(e.value.shape(), 0.0);
            }
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                const double g = e.grad[i];
                st.m[i] = opts_.beta1 * st.m[i] + (1.0 - opts_.beta1) * g;
                st.v[i] = opts_.beta2 * st.v[i] + (1.0 - opts_.beta2) * g * g;
                const double mhat = st.m[i] / bc1;
                const double vhat = st.v[i] / bc2;
                e.value[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
            }
        }
    }

    long step_count() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return opts_; }

private:
    struct Moments {
        DenseArray m;
        DenseArray v;
    };
    AdamOptions opts_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

} // namespace dsgnn
