#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "promo/dataprep.hpp"
#include "promo/indicators.hpp"
#include "promo/synthdata.hpp"

using namespace promo;

namespace {

synth::GenConfig small_config() {
    synth::GenConfig cfg;
    cfg.n_stores = 3;
    cfg.products_per_group = 2;
    cfg.traffic_per_day = 12;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

TEST(Synth, SameSeedWritesIdenticalFiles) {
    const auto dir = std::filesystem::temp_directory_path() / "promo_synth_test";
    std::filesystem::remove_all(dir);
    auto cfg = small_config();
    synth::write(synth::generate(cfg), dir / "a");
    synth::write(synth::generate(cfg), dir / "b");
    for (auto name : {"catalog.csv", "receipts.csv", "promotions.csv", "stores.csv"}) {
        const auto a = slurp(dir / "a" / name);
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, slurp(dir / "b" / name)) << name;
    }
    cfg.seed = 43;
    synth::write(synth::generate(cfg), dir / "c");
    EXPECT_NE(slurp(dir / "a" / "receipts.csv"), slurp(dir / "c" / "receipts.csv"));

    // what was written loads back through the validating readers
    const auto paths = synth::DataPaths::in(dir / "a");
    const auto catalog = load_catalog(paths.catalog);
    const auto stores = load_stores(paths.stores);
    EXPECT_NO_THROW(load_receipts(paths.receipts, &catalog));
    EXPECT_NO_THROW(load_promotions(paths.promotions, &catalog, &stores));
    std::filesystem::remove_all(dir);
}

TEST(Synth, ReferencesAndDatesAreValid) {
    const auto cfg = small_config();
    const auto data = synth::generate(cfg);
    std::set<std::string> products, stores;
    for (const auto& p : data.catalog) products.insert(p.product_id);
    for (const auto& s : data.stores) {
        stores.insert(s.store_id);
        EXPECT_NO_THROW(validate_store(s));
    }
    EXPECT_EQ(products.size(), 6u);
    const Date first{cfg.first_year, 1, 1}, last{cfg.last_year, 12, 31};
    for (const auto& p : data.promotions) {
        EXPECT_TRUE(products.contains(p.product_id));
        EXPECT_TRUE(stores.contains(p.store_id));
        EXPECT_NO_THROW(validate_promotion(p));
        EXPECT_TRUE(first <= p.start_date && p.end_date <= last);
    }
    for (const auto& r : data.receipts) {
        EXPECT_TRUE(stores.contains(r.store_id));
        EXPECT_TRUE(first <= r.date && r.date <= last);
        EXPECT_NO_THROW(validate_receipt(r));
        for (const auto& l : r.lines) EXPECT_TRUE(products.contains(l.product_id));
    }
}

TEST(Synth, NoiseFreeIndicatorsMatchGeneratorTally) {
    auto cfg = small_config();
    cfg.noise = 0.0;
    const auto data = synth::generate(cfg);
    const ReceiptIndex index(data.receipts);
    std::size_t defined = 0;
    for (std::size_t i = 0; i < data.promotions.size(); ++i) {
        const auto& e = data.expected[i];
        if (e.n_hit_receipts == 0) {
            EXPECT_THROW(compute_indicators(data.promotions[i], index), NoHitReceipts);
            continue;
        }
        ++defined;
        const auto got = compute_indicators(data.promotions[i], index);
        for (std::size_t k = 0; k < kIndicatorCount; ++k) EXPECT_NEAR(got.values[k], e.values[k], 1e-6);
    }
    EXPECT_GE(static_cast<double>(defined), 0.95 * static_cast<double>(data.promotions.size()));
}

TEST(Synth, MostPromotionsHaveDefinedIndicators) {
    const auto data = synth::generate(small_config());
    std::size_t defined = 0;
    for (const auto& e : data.expected) defined += e.n_hit_receipts > 0;
    EXPECT_GE(static_cast<double>(defined), 0.95 * static_cast<double>(data.promotions.size()));
}

TEST(Synth, NullEffectLeavesAmountUnchanged) {
    auto cfg = small_config();
    cfg.elasticity = 0.0;
    cfg.noise = 0.0;
    cfg.seasonal_amplitude = 0.0;
    const auto data = synth::generate(cfg);
    const ReceiptIndex index(data.receipts);
    int compared = 0;
    for (const auto& p : data.promotions) {
        const auto m = dataprep::find_matching_period(p, data.promotions);
        if (!m || m->start_date < Date(cfg.first_year, 1, 1)) continue;
        EXPECT_EQ(compute_indicators(p, index)[IndicatorKind::AVG_AMOUNT],
                  compute_indicators(*m, index)[IndicatorKind::AVG_AMOUNT]);
        ++compared;
    }
    EXPECT_GT(compared, 100);
}

TEST(Synth, DiscountRaisesAmount) {
    const auto data = synth::generate(small_config());
    const ReceiptIndex index(data.receipts);
    // correlation within each (store, product) pair removes base-demand spread
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_pair;
    for (const auto& p : data.promotions) {
        try {
            const auto v = compute_indicators(p, index);
            auto& [x, y] = by_pair[dataprep::pair_key(p.store_id, p.product_id)];
            x.push_back(p.price_change);
            y.push_back(v[IndicatorKind::AVG_AMOUNT]);
        } catch (const NoHitReceipts&) {
        }
    }
    std::vector<double> all_x, all_y;
    int positive = 0;
    for (const auto& [k, xy] : by_pair) {
        positive += correlation(xy.first, xy.second) > 0.0;
        all_x.insert(all_x.end(), xy.first.begin(), xy.first.end());
        all_y.insert(all_y.end(), xy.second.begin(), xy.second.end());
    }
    EXPECT_GT(correlation(all_x, all_y), 0.0);
    EXPECT_GT(positive, static_cast<int>(by_pair.size()) * 3 / 4);
}

TEST(Synth, RejectsBadConfig) {
    auto cfg = small_config();
    cfg.n_stores = 0;
    EXPECT_THROW(synth::generate(cfg), InvalidConfig);
    cfg = small_config();
    cfg.last_year = cfg.first_year;
    EXPECT_THROW(synth::generate(cfg), InvalidConfig);
    cfg = small_config();
    cfg.elasticity = -1;
    EXPECT_THROW(synth::generate(cfg), InvalidConfig);
}
