#pragma once

#include <optional>
#include <string>
#include <vector>

#include "windfuse/time_axis.hpp"

namespace windfuse {

// Observation-source classes. Met stations are the trusted reference network;
// A/B/C grade personal weather stations by sensor set-up; U is unknown rating.
enum class StationClass { Met, A, B, C, U };

constexpr int kNumClasses = 5;

StationClass station_class_from_string(const std::string& s);
std::string to_string(StationClass c);

struct StationRecord {
    std::string id;
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]
    StationClass cls = StationClass::U;
    std::optional<double> dist_to_sea_km;  // >= 0 when present
};

struct WeibullParams {
    double shape = 1.0;  // k > 0
    double scale = 1.0;  // lambda > 0, m/s
};

// Hourly wind-speed series. Missing entries are explicitly absent values,
// never sentinel numbers. step is fixed at 1 hour.
struct WindSeries {
    std::string station_id;
    EpochHour t0 = 0;
    std::vector<std::optional<double>> values;  // m/s, each >= 0 when present
};

}  // namespace windfuse
