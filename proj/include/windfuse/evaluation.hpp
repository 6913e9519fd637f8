#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "windfuse/gp.hpp"
#include "windfuse/types.hpp"

namespace windfuse {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

// Closed-form CRPS of a normal predictive distribution at outcome y.
double crps_gaussian(double mean, double sd, double y);

// CRPS by midpoint discretization of int (F(x) - 1{x >= y})^2 dx over
// [lo, hi] with m cells. Used for predictive distributions known only
// through their CDF (e.g. after a back-transform).
double crps_discretized(const std::function<double(double)>& cdf, double y, double lo, double hi,
                        int m = 2000);

struct LosocvConfig {
    StationClass held_out = StationClass::Met;
    bool refit_per_fold = true;   // false: hyperparameters from the full fit,
                                  // coefficients re-estimated per fold
    bool rmse_on_ms_scale = true;  // back-transform point predictions before RMSE
};

struct FoldScore {
    std::string station_id;
    long n_scored = 0;
    double rmse = 0.0;
    double crps = 0.0;
    bool ok = false;
    std::string error;
};

struct LosocvResult {
    double rmse = 0.0;  // pooled over all scored (fold, time) pairs
    double crps = 0.0;
    std::vector<FoldScore> folds;
    bool complete = false;  // every fold succeeded
    ModelFit fit;           // full-data fit
};

// Leave-one-station-out cross-validation over stations of the held-out
// class. A failed fold is recorded, not fatal; `complete` says whether any
// were. CRPS is always on the model (sqrt) scale.
LosocvResult losocv(const GpData& data, const GpConfig& config, const PcPriors& priors,
                    const LosocvConfig& cv);

struct ExtremeMetrics {
    double threshold = 0.0;  // empirical quantile of truth
    long n_pairs = 0;
    double rmse = 0.0;
    double bias = 0.0;       // mean(pred - truth)
    double pearson_r = 0.0;  // NaN when either side is constant on the subset
};

// Scores restricted to pairs whose truth exceeds its empirical quantile.
// Returns nothing when fewer than 3 pairs survive; callers should warn.
std::optional<ExtremeMetrics> extreme_metrics(const std::vector<double>& pred,
                                              const std::vector<double>& truth,
                                              double quantile = 0.95);

// Effect of leaving miscalibrated stations uncorrected: the same data fit
// with one shared nugget versus per-group nuggets, on a clean copy and on a
// copy whose suspect stations carry extra error. Four cross-validations.
struct GroupExperimentResult {
    LosocvResult clean_pooled;
    LosocvResult clean_grouped;
    LosocvResult dirty_pooled;
    LosocvResult dirty_grouped;
};

GroupExperimentResult uncorrected_group_experiment(const GpData& clean, const GpData& dirty,
                                                   const GpConfig& base, const PcPriors& priors,
                                                   const LosocvConfig& cv);

}  // namespace windfuse
