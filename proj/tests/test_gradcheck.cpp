#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "ynet/gradcheck.hpp"

using namespace ynet;

TEST(GradCheck, SuiteCoversEveryPrimitiveAndPasses) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradReport> reports = run_gradcheck_suite();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::set<std::string> ops;
  for (const auto& r : reports) {
    ops.insert(r.op);
    EXPECT_TRUE(r.pass()) << format_report(r);
    EXPECT_EQ(r.tol, 1e-4);
    for (const auto& g : r.groups) EXPECT_GT(g.checked, 0u) << r.op << "/" << g.name;
  }
  const std::set<std::string> expected{"conv2d", "abs", "trunc", "relu", "batch_norm", "scale",
                                       "avg_pool", "global_avg_pool", "fully_connected", "softmax_xent"};
  EXPECT_EQ(ops, expected);
  EXPECT_LT(secs, 60.0);
}

TEST(GradCheck, LinearOpIsNearlyExact) {
  for (const auto& r : run_gradcheck_suite()) {
    if (r.op == "fully_connected") EXPECT_LE(r.max_rel_error(), 1e-8) << format_report(r);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  // loss = sum x^3; true gradient 3x^2, supplied 2x^2
  std::vector<double> x{0.5, -1.25, 2.0};
  std::vector<double> wrong, right;
  for (double v : x) {
    wrong.push_back(2 * v * v);
    right.push_back(3 * v * v);
  }
  auto loss = [&x] {
    double s = 0.0;
    for (double v : x) s += v * v * v;
    return s;
  };
  const GradReport bad = check_gradients("cube", {GradGroup{"x", x, wrong, {}}}, loss);
  EXPECT_FALSE(bad.pass());
  EXPECT_GT(bad.max_rel_error(), 0.3);
  ASSERT_FALSE(bad.groups[0].worst.empty());
  const GradReport good = check_gradients("cube", {GradGroup{"x", x, right, {}}}, loss);
  EXPECT_TRUE(good.pass()) << format_report(good);
  EXPECT_EQ(x, (std::vector<double>{0.5, -1.25, 2.0}));  // values restored
}

TEST(GradCheck, SkipsElementsNearKinks) {
  std::vector<double> x{0.0, 1.0};
  auto loss = [&x] { return std::abs(x[0]) + std::abs(x[1]); };
  GradGroup g{"x", x, {0.0, 1.0}, [](double v) { return std::abs(v) < 1e-4; }};
  const GradReport r = check_gradients("abs", {g}, loss);
  EXPECT_EQ(r.groups[0].skipped, 1u);
  EXPECT_EQ(r.groups[0].checked, 1u);
  EXPECT_TRUE(r.pass());
}
