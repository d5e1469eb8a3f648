#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "promo/error.hpp"

namespace promo {

/// Calendar date with day arithmetic. No time of day.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days d) : days_(d) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}) {}

    /// Parses YYYY-MM-DD. Throws InvariantViolation on anything else.
    static Date parse(std::string_view s) {
        auto bad = [&] { return InvariantViolation("invalid date '" + std::string(s) + "'"); };
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
        int y = 0;
        unsigned m = 0, d = 0;
        auto num = [&](std::string_view part, auto& out) {
            auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
            if (ec != std::errc{} || p != part.data() + part.size()) throw bad();
        };
        num(s.substr(0, 4), y);
        num(s.substr(5, 2), m);
        num(s.substr(8, 2), d);
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (!ymd.ok()) throw bad();
        return Date{std::chrono::sys_days{ymd}};
    }

    std::string iso() const {
        const auto ymd = this->ymd();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    constexpr std::chrono::sys_days sys() const { return days_; }
    constexpr std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }

    constexpr int year() const { return static_cast<int>(ymd().year()); }
    constexpr unsigned month() const { return static_cast<unsigned>(ymd().month()); }
    constexpr unsigned day() const { return static_cast<unsigned>(ymd().day()); }

    // Monday = 1 ... Sunday = 7
    constexpr unsigned iso_weekday() const { return std::chrono::weekday{days_}.iso_encoding(); }

    // 1 = January 1st
    constexpr int day_of_year() const {
        const Date jan1{year(), 1, 1};
        return (*this - jan1) + 1;
    }

    /// ISO-8601 week number (1..53); the week belongs to the year of its Thursday.
    constexpr int iso_week() const {
        const Date thursday = *this + (4 - static_cast<int>(iso_weekday()));
        return (thursday.day_of_year() - 1) / 7 + 1;
    }

    /// Dec-Feb = 1 (winter), Mar-May = 2, Jun-Aug = 3, Sep-Nov = 4.
    constexpr int season() const { return static_cast<int>(month() % 12 / 3) + 1; }

    constexpr Date operator+(int days) const { return Date{days_ + std::chrono::days{days}}; }
    constexpr Date operator-(int days) const { return Date{days_ - std::chrono::days{days}}; }
    constexpr int operator-(Date other) const { return static_cast<int>((days_ - other.days_).count()); }
    constexpr Date& operator+=(int days) { days_ += std::chrono::days{days}; return *this; }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

} // namespace promo
