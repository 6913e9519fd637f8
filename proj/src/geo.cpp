#include "windfuse/geo.hpp"

#include <cmath>
#include <stdexcept>

namespace windfuse {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double deg = M_PI / 180.0;
    const double dlat = (lat2 - lat1) * deg;
    const double dlon = (lon2 - lon1) * deg;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * deg) * std::cos(lat2 * deg) *
                         std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double min_dist_to_polyline_km(double lat, double lon,
                               const std::vector<std::pair<double, double>>& vertices) {
    if (vertices.empty()) throw std::invalid_argument("empty coastline polyline");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [vlat, vlon] : vertices)
        best = std::min(best, haversine_km(lat, lon, vlat, vlon));
    return best;
}

}  // namespace windfuse
