#pragma once

#include <utility>
#include <vector>

namespace windfuse {

// All distances in km on a 6371-km sphere.
inline constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Minimum great-circle distance from a point to the vertices of a polyline.
// Vertices are (lat, lon) pairs; the polyline should be densely sampled since
// segments are not interpolated.
double min_dist_to_polyline_km(double lat, double lon,
                               const std::vector<std::pair<double, double>>& vertices);

}  // namespace windfuse
