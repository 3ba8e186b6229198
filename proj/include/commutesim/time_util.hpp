#pragma once

#include <optional>
#include <string>

namespace commutesim {

// Clock time as decimal minutes since midnight, 0.1-minute resolution.
struct TimeOfDay {
    double minutes = 0.0;

    TimeOfDay() = default;
    explicit TimeOfDay(double m) : minutes(m) {}

    bool valid() const { return minutes >= 0.0 && minutes < 1440.0; }
    bool operator==(const TimeOfDay& o) const { return minutes == o.minutes; }
};

// Round to the nearest multiple of `step` (half away from zero for positive values).
double quantize(double x, double step);

inline double quantize_tenth(double x) { return quantize(x, 0.1); }
inline double quantize_minute(double x) { return quantize(x, 1.0); }
inline double quantize_5min(double x) { return quantize(x, 5.0); }

// "08:23.6" (tenth shown only when nonzero), "09:00".
std::string format_hhmm(double minutes);

// Accepts "HH:MM", "H:MM", "HH:MM.m"; returns minutes since midnight or
// nullopt when the text does not parse or lies outside [0, 1440).
std::optional<double> parse_hhmm(const std::string& text);

}  // namespace commutesim
