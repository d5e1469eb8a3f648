#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "promo/csv.hpp"
#include "promo/error.hpp"

namespace promo::metrics {

struct EvalReport {
    std::size_t n = 0;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape; // absent when some actual value is 0
    double wmape = 0.0;

    bool mape_undefined() const { return !mape.has_value(); }
};

/// MAE, RMSE, MAPE and WMAPE of `forecast` against `actual`.
/// MAPE is left empty if any actual is 0; WMAPE throws when the actuals sum to 0.
inline EvalReport evaluate(std::span<const double> actual, std::span<const double> forecast) {
    if (actual.size() != forecast.size())
        throw LengthMismatch(std::to_string(actual.size()) + " actual vs " + std::to_string(forecast.size()) +
                             " forecast values");
    if (actual.empty()) throw EmptyVectors("nothing to evaluate");

    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0, actual_sum = 0.0;
    bool zero_actual = false;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double a = actual[i], f = forecast[i];
        if (!std::isfinite(a) || !std::isfinite(f)) throw NonFiniteInput("non-finite value at index " + std::to_string(i));
        const double err = std::abs(f - a);
        abs_sum += err;
        sq_sum += err * err;
        actual_sum += a;
        if (a == 0.0) zero_actual = true;
        else pct_sum += err / std::abs(a);
    }
    if (actual_sum == 0.0) throw WmapeUndefined("actual values sum to zero");

    const double n = static_cast<double>(actual.size());
    EvalReport r;
    r.n = actual.size();
    r.mae = abs_sum / n;
    r.rmse = std::sqrt(sq_sum / n);
    if (!zero_actual) r.mape = pct_sum / n;
    r.wmape = abs_sum / actual_sum;
    return r;
}

inline double rmse_improvement(double before, double after) { return before - after; }

inline constexpr std::string_view kReportHeader = "category,indicator,MAE,RMSE,MAPE,WMAPE";

/// One report line: category,indicator,MAE,RMSE,MAPE,WMAPE (MAPE "NA" when undefined).
inline std::string report_row(std::string_view category, std::string_view indicator, const EvalReport& r) {
    std::string s(category);
    s += ',';
    s += indicator;
    s += ',' + csv::fmt_fixed(r.mae) + ',' + csv::fmt_fixed(r.rmse) + ',' + (r.mape ? csv::fmt_fixed(*r.mape) : "NA") +
         ',' + csv::fmt_fixed(r.wmape);
    return s;
}

} // namespace promo::metrics
