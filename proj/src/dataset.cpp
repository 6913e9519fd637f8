#include "windfuse/dataset.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace windfuse {

StationClass station_class_from_string(const std::string& s) {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "MET") return StationClass::Met;
    if (u == "A") return StationClass::A;
    if (u == "B") return StationClass::B;
    if (u == "C") return StationClass::C;
    if (u == "U") return StationClass::U;
    throw std::invalid_argument("unknown station class: " + s);
}

std::string to_string(StationClass c) {
    switch (c) {
        case StationClass::Met: return "MET";
        case StationClass::A: return "A";
        case StationClass::B: return "B";
        case StationClass::C: return "C";
        case StationClass::U: return "U";
    }
    return "?";
}

std::size_t Dataset::station_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown station: " + id);
    return it->second;
}

std::size_t Dataset::present_count(std::size_t station) const {
    std::size_t n = 0;
    for (const auto& v : values.at(station))
        if (v) ++n;
    return n;
}

WindSeries Dataset::series(std::size_t station) const {
    WindSeries s;
    s.station_id = stations.at(station).id;
    s.t0 = t0;
    s.values = values.at(station);
    return s;
}

Dataset validate_dataset(const std::vector<StationRecord>& stations,
                         const std::vector<WindSeries>& series) {
    if (stations.empty()) throw std::invalid_argument("no stations given");

    Dataset ds;
    ds.stations = stations;
    for (std::size_t i = 0; i < stations.size(); ++i) {
        const auto& st = stations[i];
        if (!ds.index_.emplace(st.id, i).second)
            throw std::invalid_argument("duplicate station id: " + st.id);
        if (!std::isfinite(st.lat) || !std::isfinite(st.lon) || st.lat < -90.0 ||
            st.lat > 90.0 || st.lon < -180.0 || st.lon > 180.0)
            throw std::invalid_argument("coordinates out of range for station " + st.id);
        if (st.dist_to_sea_km && (!std::isfinite(*st.dist_to_sea_km) || *st.dist_to_sea_km < 0))
            throw std::invalid_argument("invalid dist_to_sea_km for station " + st.id);
    }

    if (series.empty()) throw std::invalid_argument("no series given");

    EpochHour start = series.front().t0;
    EpochHour end = series.front().t0;
    for (const auto& s : series) {
        if (s.values.empty())
            throw std::invalid_argument("empty series for station " + s.station_id);
        if (ds.index_.find(s.station_id) == ds.index_.end())
            throw std::invalid_argument("unknown station in series: " + s.station_id);
        start = std::min(start, s.t0);
        end = std::max(end, s.t0 + static_cast<EpochHour>(s.values.size()) - 1);
        for (const auto& v : s.values) {
            if (!v) continue;
            if (!std::isfinite(*v))
                throw std::invalid_argument("non-finite wind speed for station " + s.station_id);
            if (*v < 0)
                throw std::invalid_argument("negative wind speed for station " + s.station_id);
        }
    }

    ds.t0 = start;
    ds.n_times = static_cast<std::size_t>(end - start + 1);
    ds.values.assign(stations.size(), std::vector<std::optional<double>>(ds.n_times));

    std::set<std::string> seen;
    for (const auto& s : series) {
        std::size_t i = ds.index_.at(s.station_id);
        if (!seen.insert(s.station_id).second)
            throw std::invalid_argument("multiple series for station " + s.station_id);
        std::size_t off = static_cast<std::size_t>(s.t0 - start);
        for (std::size_t j = 0; j < s.values.size(); ++j)
            ds.values[i][off + j] = s.values[j];
    }
    return ds;
}

}  // namespace windfuse
