#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "windfuse/spline.hpp"
#include "windfuse/types.hpp"

namespace windfuse {

// Gridded Weibull parameter field (e.g. from a wind atlas raster exported to
// points). Coordinates are degrees.
struct GridPoint {
    double lon = 0.0;
    double lat = 0.0;
    WeibullParams params;
};

struct GridParamField {
    std::vector<GridPoint> points;
};

void validate_grid(const GridParamField& field);

// Inverse-distance-weighted interpolation of the field to a query point.
// Distances via great circles; a grid point closer than 1 m counts as an
// exact hit and is returned untouched.
WeibullParams idw_interpolate(const GridParamField& field, double lat, double lon,
                              double power = 2.0, int k_nearest = 4);

// One calibration row: interpolated grid parameters against parameters
// fitted from a trusted station's own record.
struct CalibRow {
    std::string station_id;
    WeibullParams grid;     // interpolated at the station
    WeibullParams fitted;   // MLE from the station's observations
    double dist_to_sea_km = 0.0;
};

// Shape link: fitted_shape ~ beta0 + beta1 * grid_shape, ordinary least
// squares.
struct ShapeCalibration {
    double beta0 = 0.0;
    double beta1 = 1.0;
    double sigma = 0.0;  // residual sd, denominator n - 2
    int n = 0;
    double predict(double grid_shape) const { return beta0 + beta1 * grid_shape; }
};

ShapeCalibration fit_shape_calibration(const std::vector<CalibRow>& rows);

enum class ScaleModelKind { Identity, Linear, LinearDist, Spline, SplineDist };

std::string to_string(ScaleModelKind kind);
ScaleModelKind scale_model_from_string(const std::string& s);

// Scale link: fitted_scale ~ f(grid_scale) [+ beta_d * dist_to_sea].
struct ScaleCalibration {
    ScaleModelKind kind = ScaleModelKind::SplineDist;
    PenalizedSplineFit fit;          // spline kinds
    double beta0 = 0.0, beta1 = 1.0; // identity / linear kinds
    double beta_dist = 0.0;
    double sigma = 0.0;
    int n = 0;
    bool gcv_fallback = false;
    double predict(double grid_scale, double dist_to_sea_km) const;
};

ScaleCalibration fit_scale_calibration(const std::vector<CalibRow>& rows,
                                       ScaleModelKind kind = ScaleModelKind::SplineDist,
                                       int nbasis = 6);

// Leave-one-out RMSE of predicted scale for each candidate model.
std::map<ScaleModelKind, double> leave_one_out_calibration(
    const std::vector<CalibRow>& rows, const std::vector<ScaleModelKind>& models);

// Empirical cumulative probabilities of the present values, plotting
// position (rank - 0.5) / n with ties sharing their average rank. Missing
// entries stay missing. min_present guards against series too short for a
// meaningful empirical CDF; lower it only for formula checks.
std::vector<std::optional<double>> empirical_percentiles(
    const std::vector<std::optional<double>>& values, size_t min_present = 10);

struct CorrectedSeries {
    std::string station_id;
    WeibullParams params;  // calibrated target distribution
    std::vector<std::optional<double>> percentiles;
    std::vector<std::optional<double>> corrected;
};

// Quantile-map a station record onto the calibrated Weibull distribution.
CorrectedSeries correct_series(const std::string& station_id,
                               const std::vector<std::optional<double>>& values,
                               const WeibullParams& target);

// Agreement between per-station empirical summaries and the summaries
// implied by calibrated Weibull parameters.
struct ValidationRow {
    double mae = 0.0;
    double pearson_r = 0.0;  // NaN when undefined (fewer than 2 stations or
                             // zero variance)
};

struct CalibrationValidation {
    ValidationRow mean, variance, p95;
    int n_stations = 0;
};

struct StationValidationInput {
    std::string station_id;
    std::vector<double> sample;  // present observed values
    WeibullParams calibrated;
};

CalibrationValidation validate_calibrated_distributions(
    const std::vector<StationValidationInput>& stations);

double weibull_variance(const WeibullParams& p);

}  // namespace windfuse
