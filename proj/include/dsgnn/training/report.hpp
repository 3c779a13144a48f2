#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dsgnn/training/trainer.hpp"

namespace dsgnn {

/// Round-trippable decimal rendering, so equal reports give equal bytes.
inline std::string fmt_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One row per fold plus a final `mean` row. Wall time is kept out so reruns compare equal.
inline std::string report_csv(const RunReport& r) {
    std::ostringstream o;
    o << "variant,seed,fold,init_test_mae,test_mae,best_val_mae,best_epoch,epochs_run\n";
    for (const auto& f : r.folds) {
        o << r.variant << ',' << r.config.seed << ',' << f.fold_id << ',' << fmt_exact(f.init_test_mae) << ','
          << fmt_exact(f.test_mae) << ',' << fmt_exact(f.best_val_mae) << ',' << f.best_epoch << ',' << f.epochs_run
          << '\n';
    }
    o << r.variant << ',' << r.config.seed << ",mean,," << fmt_exact(r.mean_mae) << ",,,\n";
    return o.str();
}

inline std::string loss_curve_csv(const RunReport& r) {
    std::ostringstream o;
    o << "fold,epoch,joint_loss,est_loss,recon_loss,val_mae\n";
    for (const auto& f : r.folds)
        for (const auto& e : f.curve) {
            o << f.fold_id << ',' << e.epoch << ',' << fmt_exact(e.joint) << ',' << fmt_exact(e.est) << ','
              << fmt_exact(e.recon) << ',' << fmt_exact(e.val_mae) << '\n';
        }
    return o.str();
}

inline std::string summary_text(const RunReport& r) {
    std::ostringstream o;
    o << "variant: " << r.variant << "\nseed: " << r.config.seed << "\n";
    for (const auto& f : r.folds) {
        o << "fold " << f.fold_id << ": test MAE " << fmt_exact(f.test_mae) << " (epoch " << f.best_epoch << " of "
          << f.epochs_run << ", initial " << fmt_exact(f.init_test_mae) << ")\n";
    }
    o << "mean MAE: " << fmt_exact(r.mean_mae) << "\n";
    char wall[64];
    std::snprintf(wall, sizeof wall, "%.2f", r.wall_seconds);
    o << "wall time: " << wall << " s\n\nconfig:\n" << config_echo(r.config);
    return o.str();
}

/// Comparison table keyed by variant: mean MAE then one column per fold.
inline std::string comparison_csv(const std::vector<RunReport>& reports) {
    std::ostringstream o;
    o << "variant,mean_mae";
    if (!reports.empty())
        for (const auto& f : reports.front().folds) o << ",fold_" << f.fold_id;
    o << '\n';
    for (const auto& r : reports) {
        o << r.variant << ',' << fmt_exact(r.mean_mae);
        for (const auto& f : r.folds) o << ',' << fmt_exact(f.test_mae);
        o << '\n';
    }
    return o.str();
}

} // namespace dsgnn
