#include "windfuse/time_axis.hpp"

#include <cstdio>
#include <stdexcept>

namespace windfuse {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);             // [0, 399]
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;  // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;            // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int n[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return n[m - 1];
}

}  // namespace

EpochHour parse_iso_hour(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    char tail = '\0';
    int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &tail);
    if (n == 5) {  // no seconds field: "YYYY-MM-DDTHH:MMZ"
        se = 0;
        n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d%c", &y, &mo, &d, &h, &mi, &tail);
        if (n != 6 || tail != 'Z')
            throw std::invalid_argument("malformed timestamp: " + s);
    } else if (n != 7 || tail != 'Z') {
        throw std::invalid_argument("malformed timestamp: " + s);
    }
    if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h < 0 || h > 23)
        throw std::invalid_argument("invalid date/time fields in timestamp: " + s);
    if (mi != 0 || se != 0)
        throw std::invalid_argument("timestamp not aligned to the hour: " + s);
    return days_from_civil(y, mo, d) * 24 + h;
}

std::string format_iso_hour(EpochHour t) {
    std::int64_t days = t / 24;
    int h = static_cast<int>(t % 24);
    if (h < 0) {
        h += 24;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", y, m, d, h);
    return buf;
}

int hour_of_day(EpochHour t) {
    int h = static_cast<int>(((t % 24) + 24) % 24);
    return h == 0 ? 24 : h;
}

int hour_successor(int h) { return h % 24 + 1; }

}  // namespace windfuse
