#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include "httplib.h"
#include "json.hpp"

#include "promo/pipeline.hpp"

using namespace promo;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "promo_cli_test";

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run cli(const std::string& args) {
    const auto out = kDir / "stdout.txt", err = kDir / "stderr.txt";
    const std::string cmd = std::string(PROMO_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string conf() { return (kDir / "run.conf").string(); }

class CliEnv : public ::testing::Environment {
public:
    void SetUp() override {
        fs::remove_all(kDir);
        fs::create_directories(kDir);
        std::ofstream(conf()) << "# small run\n"
                              << "out = " << (kDir / "out").string() << "\n"
                              << "groups = dairy, fruits\n"
                              << "synth.n_stores = 3\n"
                              << "synth.products_per_group = 2\n"
                              << "hpo_budget = 1\n";
        ASSERT_EQ(cli("--config " + conf() + " synth").code, 0);
        ASSERT_EQ(cli("--config " + conf() + " train").code, 0);
    }
};

const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new CliEnv);

fs::path model(const std::string& group, const std::string& ind) {
    return kDir / "out" / "models" / "default" / group / (ind + ".model");
}

} // namespace

TEST(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    std::ofstream(kDir / "bad.conf") << "colour = red\n";
    auto r = cli("--config " + (kDir / "bad.conf").string() + " train");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown config key 'colour'"), std::string::npos);
    EXPECT_EQ(cli("--config " + conf() + " --budget 0 optimize").code, 2);
}

TEST(Cli, ModuleErrorsExitOne) {
    auto r = cli("--out " + (kDir / "empty").string() + " train");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("IoError"), std::string::npos);
}

TEST(Cli, TrainPrintsTheReport) {
    auto r = cli("--config " + conf() + " train");
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = lines_of(r.out);
    ASSERT_EQ(rows.size(), 13u);
    EXPECT_EQ(rows[0], "category,indicator,MAE,RMSE,MAPE,WMAPE");
    EXPECT_EQ(r.out, slurp(kDir / "out" / "reports" / "default_report.csv"));
}

TEST(Cli, ImportanceTopTen) {
    auto r = cli("importance --model " + model("dairy", "AVG_AMOUNT").string() + " --top-k 10");
    ASSERT_EQ(r.code, 0) << r.err;
    auto rows = lines_of(r.out);
    ASSERT_GE(rows.size(), 2u);
    EXPECT_LE(rows.size(), 11u);
    EXPECT_EQ(rows[1].substr(rows[1].find(',')), ",1");
    EXPECT_EQ(lines_of(cli("importance --model " + model("dairy", "AVG_AMOUNT").string() + " --top-k 2").out).size(), 3u);
}

TEST(Cli, ForecastMatchesModelAndRejectsMismatchedNames) {
    const auto m = pipeline::load_model(model("fruits", "AVG_BASKET").string());
    std::string header, row;
    for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
        header += (j ? "," : "") + m.feature_names[j];
        row += (j ? "," : "") + std::string(j % 3 ? "1" : "0.5");
    }
    std::ofstream(kDir / "rows.csv") << header << '\n' << row << '\n';
    auto r = cli("forecast --model " + model("fruits", "AVG_BASKET").string() + " --rows " + (kDir / "rows.csv").string());
    ASSERT_EQ(r.code, 0) << r.err;
    std::vector<std::string> file{header, row};
    EXPECT_EQ(r.out, csv::fmt(pipeline::cmd_forecast(m, file).at(0)) + "\n");

    std::ofstream(kDir / "bad_rows.csv") << "x" << header << '\n' << row << '\n';
    auto bad = cli("forecast --model " + model("fruits", "AVG_BASKET").string() + " --rows " +
                   (kDir / "bad_rows.csv").string());
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("FeatureMismatch"), std::string::npos);
}

TEST(Cli, ForecastDestandardizesWithStats) {
    const auto path = model("dairy", "AVG_AMOUNT");
    const auto m = pipeline::load_model(path.string());
    std::string header, row;
    for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
        header += (j ? "," : "") + m.feature_names[j];
        row += (j ? "," : "") + std::string("1");
    }
    std::ofstream(kDir / "ones.csv") << header << '\n' << row << '\n';
    auto stats_path = path;
    stats_path.replace_extension(".stats.csv");
    auto r = cli("forecast --model " + path.string() + " --rows " + (kDir / "ones.csv").string() + " --stats " +
                 stats_path.string() + " --store S01 --product P0101");
    ASSERT_EQ(r.code, 0) << r.err;
    std::vector<std::string> file{header, row};
    const auto stats = dataprep::parse_stats(csv::read_lines(stats_path.string()));
    EXPECT_EQ(r.out, csv::fmt(dataprep::destandardize(pipeline::cmd_forecast(m, file).at(0),
                                                      {"P0101", "S01", "dairy"}, stats)) +
                         "\n");
}

TEST(Cli, IndicatorsEmitsOneRowPerWindow) {
    auto r = cli("--config " + conf() + " indicators");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto promos = csv::read_lines((kDir / "out" / "data" / "promotions.csv").string());
    EXPECT_EQ(lines_of(r.out).size(), promos.size());
}

TEST(Cli, ServeAnswersForecasts) {
    const int port = 18000 + static_cast<int>(::getpid() % 2000);
    const auto pid_file = kDir / "serve.pid";
    const std::string cmd = std::string(PROMO_CLI) + " --config " + conf() + " serve --host 127.0.0.1 --port " +
                            std::to_string(port) + " > " + (kDir / "serve.log").string() + " 2>&1 & echo $! > " +
                            pid_file.string();
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    httplib::Client client("127.0.0.1", port);
    httplib::Result health;
    for (int i = 0; i < 100 && !health; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        health = client.Get("/health");
    }
    ASSERT_TRUE(health) << slurp(kDir / "serve.log");
    EXPECT_EQ(health->status, 200);
    nlohmann::json req{{"group", "fruits"},     {"store_id", "S01"},          {"promo_price", 1.99},
                       {"price_change", 0.3},   {"start_date", "2018-09-03"}, {"duration_days", 3},
                       {"internet", true}};
    auto r = client.Post("/forecast", req.dump(), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200) << r->body;
    EXPECT_EQ(nlohmann::json::parse(r->body)["indicators"].size(), 6u);
    const std::string kill = "kill $(cat " + pid_file.string() + ")";
    EXPECT_EQ(std::system(kill.c_str()), 0);
}
