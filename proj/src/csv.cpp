#include "windfuse/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace windfuse {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace

double parse_double(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("empty numeric field");
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("malformed numeric field: " + s);
    return v;
}

std::size_t CsvTable::col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("missing CSV column: " + name);
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
    t.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != t.header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(t.header.size()) +
                                     " fields, got " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

std::vector<StationRecord> read_stations_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const auto ci = t.col("id"), cla = t.col("lat"), clo = t.col("lon"),
               ccl = t.col("class"), cd = t.col("dist_to_sea_km");
    std::vector<StationRecord> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        StationRecord st;
        st.id = r[ci];
        st.lat = parse_double(r[cla]);
        st.lon = parse_double(r[clo]);
        st.cls = station_class_from_string(r[ccl]);
        if (!r[cd].empty()) st.dist_to_sea_km = parse_double(r[cd]);
        out.push_back(std::move(st));
    }
    return out;
}

void write_stations_csv(const std::string& path, const std::vector<StationRecord>& stations) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "id,lat,lon,class,dist_to_sea_km\n";
    char buf[128];
    for (const auto& st : stations) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%s,", st.id.c_str(), st.lat,
                      st.lon, to_string(st.cls).c_str());
        out << buf;
        if (st.dist_to_sea_km) {
            std::snprintf(buf, sizeof(buf), "%.17g", *st.dist_to_sea_km);
            out << buf;
        }
        out << "\n";
    }
}

std::vector<WindSeries> read_observations_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const auto cs = t.col("station_id"), ct = t.col("timestamp"), cw = t.col("wind_speed_ms");

    // Collect per-station (hour, value) points, reject duplicates.
    std::map<std::string, std::map<EpochHour, double>> pts;
    for (const auto& r : t.rows) {
        EpochHour h = parse_iso_hour(r[ct]);
        double w = parse_double(r[cw]);
        if (!pts[r[cs]].emplace(h, w).second)
            throw std::runtime_error("duplicate observation for station " + r[cs] +
                                     " at " + r[ct]);
    }

    std::vector<WindSeries> out;
    out.reserve(pts.size());
    for (const auto& [id, m] : pts) {
        WindSeries s;
        s.station_id = id;
        s.t0 = m.begin()->first;
        EpochHour last = m.rbegin()->first;
        s.values.assign(static_cast<std::size_t>(last - s.t0 + 1), std::nullopt);
        for (const auto& [h, w] : m) s.values[static_cast<std::size_t>(h - s.t0)] = w;
        out.push_back(std::move(s));
    }
    return out;
}

void write_observations_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "station_id,timestamp,wind_speed_ms\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.n_stations(); ++i) {
        for (std::size_t j = 0; j < ds.n_times; ++j) {
            if (!ds.values[i][j]) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", *ds.values[i][j]);
            out << ds.stations[i].id << ',' << format_iso_hour(ds.time_at(j)) << ','
                << buf << '\n';
        }
    }
}

std::vector<std::pair<double, double>> read_coastline_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const auto cla = t.col("lat"), clo = t.col("lon");
    std::vector<std::pair<double, double>> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows)
        out.emplace_back(parse_double(r[cla]), parse_double(r[clo]));
    return out;
}

}  // namespace windfuse
