#pragma once

// View fusion, the per-cell estimation head, and the training objectives.

#include <cmath>
#include <string>
#include <vector>

#include "dsgnn/model/layers.hpp"

namespace dsgnn {

inline void check_unit_weight(double w, const char* name) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1], got " + std::to_string(w));
}

/// alpha * aod + (1 - alpha) * met.
inline Var fuse(const Var& aod, const Var& met, double alpha) {
    check_unit_weight(alpha, "alpha");
    return ops::add(ops::scale(aod, alpha), ops::scale(met, 1.0 - alpha));
}

/// Two 1x1 convolutions (d -> d -> 1) with ReLU between, written as per-cell dense layers.
inline void add_estimation_head(ParamBundle& p, const std::string& prefix, std::size_t d, std::uint64_t seed) {
    add_mlp2(p, prefix, d, d, 1, seed);
}

/// x: [cells, d] or [H, W, d] -> [cells].
inline Var estimate(Tape& t, ParamBundle& p, const std::string& prefix, const Var& x) {
    const Var flat = x.value().rank() == 3 ? ops::reshape(x, Shape{x.shape()[0] * x.shape()[1], x.shape()[2]}) : x;
    const Var out = mlp2(t, p, prefix, flat);
    return ops::reshape(out, Shape{out.shape()[0]});
}

/// ||S (S^T E) - E||_F: how well the supergrid projection reconstructs the semantics.
inline Var projection_residual(const Var& s, const Var& e) {
    return ops::l2_distance(ops::matmul(s, ops::matmul(ops::transpose(s), e)), e);
}

/// beta * residual(S_dyn, E_dyn) + (1 - beta) * residual(S_sta, E_sta).
inline Var recon_loss(const Var& s_dyn, const Var& s_sta, const Var& e_dyn, const Var& e_sta, double beta) {
    check_unit_weight(beta, "beta");
    return ops::add(ops::scale(projection_residual(s_dyn, e_dyn), beta),
                    ops::scale(projection_residual(s_sta, e_sta), 1.0 - beta));
}

/// gamma * aod + (1 - gamma) * met.
inline Var combine_recon(const Var& aod, const Var& met, double gamma) {
    check_unit_weight(gamma, "gamma");
    return ops::add(ops::scale(aod, gamma), ops::scale(met, 1.0 - gamma));
}

/// Mean absolute error of `estimate` ([cells]) against `truth` over the target cells only.
/// `truth` is indexed by target position (truth[i] belongs to targets[i]).
inline Var est_loss(const Var& estimate, const std::vector<double>& truth, const std::vector<std::size_t>& targets) {
    if (targets.empty()) throw ProtocolError("est_loss: empty target set");
    if (truth.size() != targets.size()) throw DimensionError("est_loss: truth and target lists differ in length");
    Tape& t = *estimate.tape();
    const Var picked = ops::gather_rows(estimate, targets);
    const Var diff = ops::sub(picked, t.constant(DenseArray(Shape{truth.size()}, truth)));
    return ops::mean(ops::abs(diff));
}

inline Var joint_loss(const Var& est, const Var& recon, double lambda) {
    check_unit_weight(lambda, "lambda");
    return ops::add(ops::scale(est, lambda), ops::scale(recon, 1.0 - lambda));
}

/// Plain-value version of the joint loss, for reporting.
inline double joint_loss_value(double est, double recon, double lambda) {
    check_unit_weight(lambda, "lambda");
    return lambda * est + (1.0 - lambda) * recon;
}

/// Mean over samples and target cells of |estimate - truth|.
/// estimates[b][i] and truths[b][i] refer to target cell i of sample b.
inline double mae_metric(const std::vector<std::vector<double>>& estimates, const std::vector<std::vector<double>>& truths) {
    if (estimates.empty()) throw ProtocolError("mae_metric: empty sample set");
    if (estimates.size() != truths.size()) throw DimensionError("mae_metric: estimate and truth sample counts differ");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < estimates.size(); ++b) {
        if (estimates[b].empty()) throw ProtocolError("mae_metric: empty target set");
        if (estimates[b].size() != truths[b].size()) throw DimensionError("mae_metric: sample sizes differ");
        for (std::size_t i = 0; i < estimates[b].size(); ++i) total += std::abs(estimates[b][i] - truths[b][i]);
        count += estimates[b].size();
    }
    return total / static_cast<double>(count);
}

} // namespace dsgnn
