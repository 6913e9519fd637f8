#pragma once

#include <string>
#include <vector>

#include "windfuse/dataset.hpp"
#include "windfuse/types.hpp"

namespace windfuse {

// Minimal CSV support for the documented schemas. Fields are comma-separated
// without quoting; leading/trailing whitespace is trimmed. Every row must have
// exactly the header's field count.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; throws if absent.
    std::size_t col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// stations.csv: id,lat,lon,class,dist_to_sea_km (dist may be empty)
std::vector<StationRecord> read_stations_csv(const std::string& path);
void write_stations_csv(const std::string& path, const std::vector<StationRecord>& stations);

// observations.csv: station_id,timestamp,wind_speed_ms (missing rows absent;
// duplicate station/timestamp rows rejected)
std::vector<WindSeries> read_observations_csv(const std::string& path);
void write_observations_csv(const std::string& path, const Dataset& ds);

// coastline.csv: lat,lon vertices
std::vector<std::pair<double, double>> read_coastline_csv(const std::string& path);

double parse_double(const std::string& s);

}  // namespace windfuse
