#include "coachai/time.hpp"

#include <charconv>
#include <cstdio>

#include "coachai/error.hpp"

namespace coachai {

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t width, std::string_view whole) {
    int value = 0;
    if (pos + width > text.size())
        throw Error(ErrorKind::domain, "malformed time value '" + std::string(whole) + "'");
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, value);
    if (ec != std::errc{} || ptr != text.data() + pos + width)
        throw Error(ErrorKind::domain, "malformed time value '" + std::string(whole) + "'");
    return value;
}

void expect_char(std::string_view text, std::size_t pos, char c, std::string_view whole) {
    if (pos >= text.size() || text[pos] != c)
        throw Error(ErrorKind::domain, "malformed time value '" + std::string(whole) + "'");
}

}  // namespace

std::string format_date(Date day) {
    std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_time_of_day(TimeOfDay tod) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", tod.seconds / 3600, (tod.seconds / 60) % 60);
    return buf;
}

std::string format_timestamp(Timestamp ts) {
    const Date day = date_of(ts);
    const auto secs = (ts - Timestamp{day}).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "T%02lld:%02lld:%02lldZ", static_cast<long long>(secs / 3600),
                  static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60));
    return format_date(day) + buf;
}

Date parse_date(std::string_view text) {
    if (text.size() < 10)
        throw Error(ErrorKind::domain, "malformed date '" + std::string(text) + "'");
    const int y = read_int(text, 0, 4, text);
    expect_char(text, 4, '-', text);
    const int m = read_int(text, 5, 2, text);
    expect_char(text, 7, '-', text);
    const int d = read_int(text, 8, 2, text);
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw Error(ErrorKind::domain, "invalid calendar date '" + std::string(text) + "'");
    return Date{ymd};
}

TimeOfDay parse_time_of_day(std::string_view text) {
    const int h = read_int(text, 0, 2, text);
    expect_char(text, 2, ':', text);
    const int m = read_int(text, 3, 2, text);
    int s = 0;
    if (text.size() > 5) {
        expect_char(text, 5, ':', text);
        s = read_int(text, 6, 2, text);
    }
    if (h > 23 || m > 59 || s > 59)
        throw Error(ErrorKind::domain, "invalid time of day '" + std::string(text) + "'");
    return {h * 3600 + m * 60 + s};
}

Timestamp parse_timestamp(std::string_view text) {
    const Date day = parse_date(text.substr(0, std::min<std::size_t>(10, text.size())));
    if (text.size() == 10)
        return Timestamp{day};
    if (text[10] != 'T' && text[10] != ' ')
        throw Error(ErrorKind::domain, "malformed timestamp '" + std::string(text) + "'");
    std::string_view rest = text.substr(11);
    if (!rest.empty() && rest.back() == 'Z')
        rest.remove_suffix(1);
    if (rest.size() != 8 && rest.size() != 5)
        throw Error(ErrorKind::domain, "malformed timestamp '" + std::string(text) + "'");
    return at(day, parse_time_of_day(rest));
}

Duration parse_duration(std::string_view text) {
    if (text.empty())
        throw Error(ErrorKind::domain, "empty duration");
    long long unit = 1;
    switch (text.back()) {
        case 's': unit = 1; text.remove_suffix(1); break;
        case 'm': unit = 60; text.remove_suffix(1); break;
        case 'h': unit = 3600; text.remove_suffix(1); break;
        case 'd': unit = 86400; text.remove_suffix(1); break;
        default: break;
    }
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value < 0)
        throw Error(ErrorKind::domain, "malformed duration '" + std::string(text) + "'");
    return Duration{value * unit};
}

Clock Clock::real() {
    return Clock(Mode::real, std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

Clock Clock::simulated(Timestamp start) { return Clock(Mode::simulated, start); }

Timestamp Clock::now() {
    if (mode_ == Mode::real) {
        const auto wall = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
        if (wall > now_)
            now_ = wall;
    }
    return now_;
}

void Clock::advance_to(Timestamp t) {
    if (mode_ != Mode::simulated)
        throw Error(ErrorKind::invalid_state, "cannot advance a real clock");
    if (t < now_)
        throw Error(ErrorKind::domain, "clock regression from " + format_timestamp(now_) + " to " +
                                           format_timestamp(t));
    now_ = t;
}

}  // namespace coachai
