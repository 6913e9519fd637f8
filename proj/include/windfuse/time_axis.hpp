#pragma once

#include <cstdint>
#include <string>

namespace windfuse {

// Timestamps are UTC hours since 1970-01-01T00:00:00Z ("epoch hours").
// All series are hourly; sub-hour information is rejected at parse time.
using EpochHour = std::int64_t;

// Parses "YYYY-MM-DDTHH:MM:SSZ" (seconds optional). Throws std::invalid_argument
// on malformed input or when minutes/seconds are nonzero (non-hour-aligned).
EpochHour parse_iso_hour(const std::string& s);

std::string format_iso_hour(EpochHour t);

// Hour-of-day index in {1,...,24}. Midnight (00:00 UTC) maps to 24 so the
// index set matches the diurnal cycle convention t in {1,...,24}; 01:00 -> 1,
// ..., 23:00 -> 23. The convention is arbitrary but must stay stable: the
// diurnal effect is invariant to consistent rotations.
int hour_of_day(EpochHour t);

// Cyclic successor: successor(24) == 1.
int hour_successor(int h);

}  // namespace windfuse
