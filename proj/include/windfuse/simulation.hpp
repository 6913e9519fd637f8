#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "windfuse/gp.hpp"
#include "windfuse/types.hpp"

namespace windfuse {

// Synthetic network: a Matern spatial field evolved as a stationary AR(1) in
// time, observed through class-dependent noise. Stations listed in junk_ids
// report pure noise with no trace of the field.
struct SimulationConfig {
    std::vector<StationRecord> layout;  // empty: generate the box layout below
    int n_met = 23;
    int n_pws = 19;
    int n_junk = 7;
    double box_lat0 = 51.5, box_lat1 = 55.5;
    double box_lon0 = -10.0, box_lon1 = -6.0;

    long n_times = 100;
    double phi = 200.0;
    double sigma_z = 0.7;
    double sigma_met = 0.2;
    double sigma_pws = 0.5;
    double rho = 0.8;
    double mean = 0.0;     // constant across space and time
    double junk_sd = 1.0;  // junk stations: iid draws with this sd

    std::set<std::string> junk_ids;  // filled when the layout is generated
    std::uint64_t seed = 1;
};

struct SimulatedDataset {
    std::vector<StationRecord> stations;
    Eigen::MatrixXd z;  // n x T latent field
    Eigen::MatrixXd y;  // n x T observed
    SimulationConfig config;  // as used: generated layout and junk ids filled in

    GpData to_gp_data() const;  // model-scale data, covariate zeroed
};

// Identical seeds give identical datasets on every platform.
SimulatedDataset simulate(const SimulationConfig& cfg);

// Alternative layout: reference stations uniform over the box, each consumer
// station dropped near a randomly chosen reference station (offset_deg sd on
// both axes, clipped to the box), junk anywhere. Real networks look like
// this: hobbyist sensors cluster in the towns the official stations serve.
// Assign the result to SimulationConfig::layout (and junk_ids) to hold one
// network fixed across study replicates.
std::vector<StationRecord> clustered_layout(const SimulationConfig& cfg, double offset_deg,
                                            std::uint64_t seed, std::set<std::string>* junk_ids);

// How suspect stations enter the fit: dropped, shared nugget, or per-group
// nuggets.
enum class FitStrategy { ReliableOnly, Pooled, Grouped };

std::string to_string(FitStrategy s);
FitStrategy fit_strategy_from_string(const std::string& s);

struct StudyConfig {
    SimulationConfig base;  // sigma_pws and seed overridden per cell
    std::vector<double> noise_levels = {0.3, 0.4, 0.5};
    std::vector<GpVariant> variants = {GpVariant::Igp, GpVariant::Ar1};
    std::vector<FitStrategy> strategies = {FitStrategy::ReliableOnly, FitStrategy::Pooled,
                                           FitStrategy::Grouped};
    int reps = 20;
    std::uint64_t seed = 1;
};

struct StudyCellResult {
    double sigma_pws = 0.0;
    GpVariant variant = GpVariant::Igp;
    FitStrategy strategy = FitStrategy::ReliableOnly;
    int rep = 0;
    bool ok = false;
    std::string error;
    double rmse = 0.0;  // model scale, reference stations held out one at a time
    double crps = 0.0;
    GpHyperParams hyper;  // fitted on the full replicate
};

// One replicate dataset is shared by all variant/strategy combinations of a
// (noise level, rep) pair, so comparisons are paired.
std::vector<StudyCellResult> run_simulation_study(const StudyConfig& study);

struct StudySummaryRow {
    double sigma_pws = 0.0;
    GpVariant variant = GpVariant::Igp;
    FitStrategy strategy = FitStrategy::ReliableOnly;
    int n_ok = 0;
    int n_total = 0;
    double rmse = 0.0;  // means over successful reps
    double crps = 0.0;
    double phi = 0.0;
    double sigma_z = 0.0;
    double rho = 0.0;  // NaN for IGP
    double sd_met = 0.0, sd_pws = 0.0, sd_junk = 0.0;
};

std::vector<StudySummaryRow> summarize_study(const std::vector<StudyCellResult>& cells);

}  // namespace windfuse
