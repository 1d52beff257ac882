#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace coachai {

// All wall-clock values are UTC with one-second resolution.
using Timestamp = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;
using Date = std::chrono::sys_days;

// Local time of day, seconds since midnight.
struct TimeOfDay {
    int seconds = 0;

    static TimeOfDay hm(int hours, int minutes) { return {hours * 3600 + minutes * 60}; }
    friend auto operator<=>(const TimeOfDay&, const TimeOfDay&) = default;
};

inline Timestamp at(Date day, TimeOfDay tod) {
    return Timestamp{day} + Duration{tod.seconds};
}

inline Date date_of(Timestamp ts) {
    return std::chrono::floor<std::chrono::days>(ts);
}

inline Date make_date(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

// 0 = Sunday ... 6 = Saturday
inline unsigned weekday_index(Date day) {
    return std::chrono::weekday{day}.c_encoding();
}

// ISO-8601 "YYYY-MM-DDThh:mm:ssZ".
std::string format_timestamp(Timestamp ts);
// ISO-8601 "YYYY-MM-DD".
std::string format_date(Date day);
// "hh:mm".
std::string format_time_of_day(TimeOfDay tod);

// Accepts "YYYY-MM-DDThh:mm:ss[Z]" and "YYYY-MM-DD" (midnight).
Timestamp parse_timestamp(std::string_view text);
Date parse_date(std::string_view text);
TimeOfDay parse_time_of_day(std::string_view text);

// Accepts "<n>s", "<n>m", "<n>h", "<n>d" or a bare number of seconds.
Duration parse_duration(std::string_view text);

// Deterministic simulated clock or the system clock. now() never decreases.
class Clock {
public:
    enum class Mode { real, simulated };

    static Clock real();
    static Clock simulated(Timestamp start);

    Mode mode() const noexcept { return mode_; }
    Timestamp now();

    // Simulated only; refuses to move backwards.
    void advance_to(Timestamp t);
    void advance_by(Duration d) { advance_to(now_ + d); }

private:
    Clock(Mode mode, Timestamp start) : mode_(mode), now_(start) {}

    Mode mode_;
    Timestamp now_;
};

}  // namespace coachai
