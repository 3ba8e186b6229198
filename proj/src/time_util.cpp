#include "commutesim/time_util.hpp"

#include <cmath>
#include <cstdio>

namespace commutesim {

double quantize(double x, double step) {
    return std::floor(x / step + 0.5) * step;
}

std::string format_hhmm(double minutes) {
    double m = quantize_tenth(minutes);
    int whole = static_cast<int>(std::floor(m));
    int tenth = static_cast<int>(std::lround((m - whole) * 10.0));
    if (tenth == 10) {
        whole += 1;
        tenth = 0;
    }
    int hh = whole / 60;
    int mm = whole % 60;
    char buf[16];
    if (tenth == 0)
        std::snprintf(buf, sizeof(buf), "%02d:%02d", hh, mm);
    else
        std::snprintf(buf, sizeof(buf), "%02d:%02d.%d", hh, mm, tenth);
    return buf;
}

std::optional<double> parse_hhmm(const std::string& text) {
    int hh = 0, mm = 0, tenth = 0;
    int n = 0;
    if (std::sscanf(text.c_str(), "%d:%d.%d%n", &hh, &mm, &tenth, &n) == 3 &&
        n == static_cast<int>(text.size())) {
        if (tenth < 0 || tenth > 9) return std::nullopt;
    } else if (std::sscanf(text.c_str(), "%d:%d%n", &hh, &mm, &n) == 2 &&
               n == static_cast<int>(text.size())) {
        tenth = 0;
    } else {
        return std::nullopt;
    }
    if (hh < 0 || mm < 0 || mm > 59) return std::nullopt;
    double v = hh * 60.0 + mm + tenth / 10.0;
    if (v < 0.0 || v >= 1440.0) return std::nullopt;
    return v;
}

}  // namespace commutesim
