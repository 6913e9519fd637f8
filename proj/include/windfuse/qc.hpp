#pragma once

#include <optional>
#include <string>
#include <vector>

#include "windfuse/dataset.hpp"

namespace windfuse {

struct NeighbourCheck {
    std::string neighbour_id;
    double distance_km = 0.0;
    double spearman_rho = 0.0;  // NaN when not computable
    bool ok = false;            // rho > rho_min
};

struct QcReport {
    std::string station_id;
    double frac_present = 0.0;
    std::vector<NeighbourCheck> neighbour_checks;
    bool passed = false;
    std::vector<std::string> fail_reasons;  // passed <=> empty
};

struct MissingDataResult {
    bool passed = false;
    double frac_present = 0.0;
};

// Pass iff present / axis-length >= threshold (default 0.9).
MissingDataResult missing_data_filter(const WindSeries& series, double threshold = 0.9);

// Average-tied ranks divided by the number of present values; results in
// (0, 1], missing entries preserved. Requires >= 2 present values; throws
// "degenerate ranks" when all present values are equal.
std::vector<std::optional<double>> rank_transform(const WindSeries& series);

// Spearman rank correlation over the common present time points (aligned by
// absolute time). Requires >= 3 common points ("insufficient overlap") and
// nonconstant common subsets ("degenerate ranks").
double spearman(const WindSeries& a, const WindSeries& b);

// Nearest-neighbour correlation filter. For each non-Met station, evaluates
// the nearest max(min_neighbours, 8) stations by great-circle distance and
// requires at least min_neighbours of them to have Spearman rho > rho_min.
// Met stations are exempt from removal (trust anchor). Neighbours whose
// correlation cannot be computed count as failed checks. Throws
// "insufficient neighbours" when the dataset has fewer than min_neighbours
// candidate neighbours. Reports are sorted by station id.
std::vector<QcReport> neighbour_filter(const Dataset& ds, int min_neighbours = 5,
                                       double rho_min = 0.5);

// Combined QC: missing-data threshold plus neighbour filter, one report per
// station with all fail reasons accumulated.
std::vector<QcReport> run_qc(const Dataset& ds, double missing_threshold = 0.9,
                             int min_neighbours = 5, double rho_min = 0.5);

struct PairCorrelation {
    std::string id_a, id_b;
    StationClass class_a, class_b;
    double distance_km = 0.0;
    double spearman_rho = 0.0;  // NaN when not computable
    double pearson_r = 0.0;     // NaN when not computable
};

// All pairwise correlations against distance. With increments=true the series
// are first differenced over consecutive present hours before correlating
// (the innovation diagnostic). Optional filter keeps only pairs whose class
// set matches.
std::vector<PairCorrelation> correlation_vs_distance(
    const Dataset& ds, bool increments = false,
    std::optional<std::pair<StationClass, StationClass>> pair_class_filter = std::nullopt);

}  // namespace windfuse
