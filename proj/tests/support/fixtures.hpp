#pragma once

#include <cmath>
#include <string>

#include "promo/gbt.hpp"
#include "promo/hpo.hpp"
#include "promo/rng.hpp"

namespace fixtures {

/// Random regression problem: `n` rows, `f` features. `shape` picks the target:
/// 0 = smooth nonlinear, 1 = step function with interactions, 2 = linear + noise.
/// Some features are drawn from small discrete sets so ties occur.
inline promo::gbt::Dataset regression(std::uint64_t seed, std::size_t n, std::size_t f, int shape) {
    promo::Rng rng(seed);
    promo::gbt::Dataset d;
    for (std::size_t j = 0; j < f; ++j) d.feature_names.push_back("f" + std::to_string(j));
    std::vector<double> row(f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j)
            row[j] = (j % 3 == 2) ? static_cast<double>(rng.between(0, 4)) : rng.uniform(-2.0, 2.0);
        double y = 0.0;
        switch (shape) {
        case 0: y = std::sin(row[0] * 1.7) + 0.5 * row[1 % f] * row[1 % f]; break;
        case 1: y = (row[0] > 0.3 ? 3.0 : -1.0) + (row[2 % f] >= 2.0 ? 2.0 : 0.0) * (row[1 % f] < 0 ? 1.0 : -1.0); break;
        default: y = 1.5 * row[0] - 0.7 * row[1 % f] + 0.3 * rng.normal(); break;
        }
        d.add_row(row, y);
    }
    return d;
}

inline double train_rmse(const promo::gbt::Model& m, const promo::gbt::Dataset& d, std::size_t n_trees) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        const double e = m.predict(d.row(i), n_trees) - d.y[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(d.rows()));
}

} // namespace fixtures

namespace fixtures {

/// Splits a regression fixture into a fitting part and an identity-scaled
/// validation tail of `n_validation` rows.
struct HpoProblem {
    promo::gbt::Dataset train;
    promo::hpo::Validation validation;
};

inline HpoProblem hpo_problem(std::uint64_t seed, std::size_t n, std::size_t n_validation, int shape) {
    auto all = regression(seed, n, 4, shape);
    HpoProblem p;
    p.train.feature_names = all.feature_names;
    p.validation.x.feature_names = all.feature_names;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n - n_validation) {
            p.train.add_row(all.row(i), all.y[i]);
        } else {
            p.validation.x.add_row(all.row(i), 0.0);
            p.validation.actual.push_back(all.y[i]);
            p.validation.scale.push_back(1.0);
            p.validation.shift.push_back(0.0);
        }
    }
    return p;
}

} // namespace fixtures
