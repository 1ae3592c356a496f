#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "slimstack/report_io.hpp"
#include "slimstack/scheduler.hpp"
#include "slimstack/selfcheck.hpp"

using namespace slimstack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "slimstack_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST(FmtDouble, SeventeenSignificantDigitsRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.7000000000000001}) {
        const std::string s = fmt_double(v);
        EXPECT_EQ(std::stod(s), v) << s;
    }
    EXPECT_EQ(fmt_double(0.5), "0.5");
    EXPECT_EQ(fmt_double(0.0), "0");
}

TEST(ReportIo, ScoresCsvDeterministicBytes) {
    const fs::path dir = scratch_dir("scores_csv");
    ScoreReport scores;
    scores.entries = {{"layer0", 64, 1e-3}, {"layer1", 64, 2e-2}};
    const Clustering clustering = kmeans_log({1e-3, 2e-2}, 2, 5);
    const SparsityPlan plan =
        assign_sparsities(clustering, {64, 64}, 0.6, 0.8, 0.7, {"layer0", "layer1"});
    const ConfigEcho cfg{{"seed", "5"}, {"target", "0.7"}};

    write_scores_csv((dir / "a.csv").string(), cfg, scores, clustering, plan);
    write_scores_csv((dir / "b.csv").string(), cfg, scores, clustering, plan);
    const std::string a = slurp(dir / "a.csv");
    EXPECT_EQ(a, slurp(dir / "b.csv"));
    EXPECT_NE(a.find("layer,params,score,log10_score,cluster,sparsity"), std::string::npos);
    EXPECT_NE(a.find("# config: seed=5"), std::string::npos);
    EXPECT_NE(a.find("layer0,64,"), std::string::npos);
}

TEST(ReportIo, PlanJsonRoundTrip) {
    const fs::path dir = scratch_dir("plan_json");
    const Clustering clustering = kmeans_log({1e-4, 2e-4, 1e-1, 2e-1}, 2, 9);
    const SparsityPlan plan = assign_sparsities(
        clustering, {10, 10, 10, 10}, 0.6, 0.8, 0.7, {"a", "b", "c", "d"});
    const std::string path = (dir / "plan.json").string();
    write_plan_json(path, {{"seed", "9"}}, plan, clustering);
    const SparsityPlan back = load_plan_json(path);
    ASSERT_EQ(back.names, plan.names);
    for (std::size_t i = 0; i < plan.values.size(); ++i) {
        EXPECT_DOUBLE_EQ(back.values[i], plan.values[i]);
    }
    EXPECT_DOUBLE_EQ(back.weighted_total, plan.weighted_total);
    EXPECT_DOUBLE_EQ(back.s_min, 0.6);
    EXPECT_DOUBLE_EQ(back.s_max, 0.8);
    EXPECT_DOUBLE_EQ(back.target, 0.7);
}

TEST(ReportIo, LoadPlanErrors) {
    const fs::path dir = scratch_dir("plan_errors");
    EXPECT_THROW(load_plan_json((dir / "nope.json").string()), std::runtime_error);
    std::ofstream((dir / "bad.json").string()) << "{ not json";
    EXPECT_THROW(load_plan_json((dir / "bad.json").string()), std::runtime_error);
}

TEST(ReportIo, CurveCsvShape) {
    const fs::path dir = scratch_dir("curve_csv");
    const std::string path = (dir / "curve.csv").string();
    write_curve_csv(path, {{"seed", "1"}}, {{0.5, 0.25}, {0.75, 0.125}});
    const std::string text = slurp(path);
    EXPECT_NE(text.find("sparsity,output_rel_error"), std::string::npos);
    EXPECT_NE(text.find("0.5,0.25"), std::string::npos);
    EXPECT_NE(text.find("0.75,0.125"), std::string::npos);
}

TEST(Selfcheck, AllChecksPass) {
    const std::vector<CheckResult> results = run_selfcheck(17);
    EXPECT_EQ(results.size(), 6u);
    for (const CheckResult& r : results) {
        EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
        EXPECT_FALSE(r.name.empty());
    }
}
