#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "windfuse/types.hpp"

namespace windfuse {

// Validated collection of stations and aligned hourly series. values[i][j] is
// station i at hour t0 + j on the union time axis. Immutable after
// construction; safe to share read-only across threads.
struct Dataset {
    std::vector<StationRecord> stations;
    EpochHour t0 = 0;
    std::size_t n_times = 0;
    std::vector<std::vector<std::optional<double>>> values;  // n_stations x n_times

    std::size_t n_stations() const { return stations.size(); }

    EpochHour time_at(std::size_t j) const { return t0 + static_cast<EpochHour>(j); }

    // Index of a station id; throws if unknown.
    std::size_t station_index(const std::string& id) const;

    // Present-value count for one station over the union axis.
    std::size_t present_count(std::size_t station) const;

    // Extract one station's series on the union axis.
    WindSeries series(std::size_t station) const;

  private:
    friend Dataset validate_dataset(const std::vector<StationRecord>&,
                                    const std::vector<WindSeries>&);
    std::map<std::string, std::size_t> index_;
};

// Checks station uniqueness, coordinate ranges, series/station references and
// value invariants, then merges all series onto the union hourly axis
// [min t0, max end] with explicit missing marks where a series has no value.
//
// Throws std::invalid_argument with messages containing: "duplicate station
// id", "unknown station", "negative wind speed", "non-finite wind speed".
Dataset validate_dataset(const std::vector<StationRecord>& stations,
                         const std::vector<WindSeries>& series);

}  // namespace windfuse
