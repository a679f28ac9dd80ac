#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "metric_fixtures.hpp"
#include "oracles.hpp"
#include "retinareg/error.hpp"
#include "retinareg/metrics.hpp"

using namespace retinareg;
using retinareg::testing::uniform;

namespace {

std::vector<ControlPointErrors> random_error_sets(std::mt19937_64& rng, int n) {
  std::vector<ControlPointErrors> out;
  for (int i = 0; i < n; ++i) {
    if (rng() % 7 == 0) {
      out.push_back(failed_registration_errors(6));
      continue;
    }
    ControlPointErrors e;
    for (int k = 0; k < 6; ++k) e.errors.push_back(uniform(rng, 0, 12));
    out.push_back(e);
  }
  return out;
}

std::vector<Point2> random_points(std::mt19937_64& rng, int n, double size) {
  std::vector<Point2> p;
  for (int i = 0; i < n; ++i) p.push_back({uniform(rng, 0, size - 1), uniform(rng, 0, size - 1)});
  return p;
}

}  // namespace

TEST(MetricFixtures, HandComputedValues) {
  for (const auto& f : retinareg::testing::check_metric_fixtures()) EXPECT_TRUE(f.ok) << f.name << ": " << f.detail;
}

TEST(EuclideanErrors, PerPointDistances) {
  std::mt19937_64 rng(1);
  const Homography h = retinareg::testing::random_bounded_homography(rng, 200);
  const CorrespondenceSet c = retinareg::testing::six_points(1.5, -2.0);
  const auto e = euclidean_errors(h, c);
  ASSERT_EQ(e.errors.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    const Point2 p = retinareg::testing::project(h.matrix(), c[i].source);
    EXPECT_NEAR(e.errors[i], std::hypot(p.x - c[i].target.x, p.y - c[i].target.y), 1e-9);
  }
  EXPECT_THROW((void)euclidean_errors(h, CorrespondenceSet{}), Error);
}

TEST(EuclideanErrors, PointAtInfinityIsInfinite) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = 1.0;
  m(2, 2) = 0.0;
  m(0, 2) = 1.0;
  const CorrespondenceSet c{{{0.0, 5.0}, {0.0, 0.0}}, {{1.0, 5.0}, {0.0, 0.0}}};
  const auto e = euclidean_errors(Homography::from_matrix(m), c);
  EXPECT_TRUE(std::isinf(e.errors[0]));
  EXPECT_TRUE(e.failed());
}

TEST(SuccessRates, InfiniteThreshold) {
  const std::vector<ControlPointErrors> ok{retinareg::testing::errors_of({1e6, 3}), retinareg::testing::errors_of({0})};
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(success_rate_mae(ok, inf), 100.0);
  const std::vector<ControlPointErrors> with_fail{ok[0], failed_registration_errors(6)};
  EXPECT_EQ(success_rate_mae(with_fail, inf), 50.0);
}

TEST(SuccessRates, FourteenPerfectPairs) {
  std::vector<ControlPointErrors> pairs(14, retinareg::testing::errors_of({0.5, 1, 2, 2.5, 1, 0.2}));
  EXPECT_EQ(success_rate_me(pairs, 3), 100.0);
  EXPECT_EQ(success_rate_mae(pairs, 5), 100.0);
}

TEST(SuccessRates, MonotoneAndMaeBelowMe) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto sets = random_error_sets(rng, 1 + static_cast<int>(rng() % 30));
    const double e1 = uniform(rng, 0, 10), e2 = e1 + uniform(rng, 0, 5);
    EXPECT_LE(success_rate_me(sets, e1), success_rate_me(sets, e2));
    EXPECT_LE(success_rate_mae(sets, e1), success_rate_mae(sets, e2));
    EXPECT_LE(success_rate_mae(sets, e1), success_rate_me(sets, e1));
    for (double v : {success_rate_me(sets, e1), success_rate_mae(sets, e1)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
}

TEST(Repeatability, SymmetricUnderSwap) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Homography h = retinareg::testing::random_bounded_homography(rng, 256);
    auto a = random_points(rng, 40, 256), b = random_points(rng, 40, 256);
    // Seed true repeats so the value is not trivially zero.
    for (int i = 0; i < 15; ++i) b[i] = h.apply(a[i]);
    const double eps = uniform(rng, 1, 8);
    const double ab = repeatability(a, b, h, eps, {256, 256}, {256, 200});
    const double ba = repeatability(b, a, h.inverse(), eps, {256, 200}, {256, 256});
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(Repeatability, EmptySets) {
  EXPECT_EQ(repeatability({}, {}, Homography::identity(), 5, {10, 10}, {10, 10}), 0.0);
}

TEST(Mir, Examples) {
  EXPECT_EQ(matching_inlier_ratio(50, 100), 0.5);
  EXPECT_EQ(matching_inlier_ratio(0, 0), 0.0);
  try {
    (void)matching_inlier_ratio(3, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCounts);
  }
}

TEST(Mir, AgreesWithRegistrationMask) {
  RegistrationResult r;
  r.status = RegistrationStatus::kOk;
  r.homography = Homography::identity();
  r.matches.resize(8);
  r.inlier_mask = {true, false, true, true, false, false, true, true};
  const auto in = make_evaluation_input("x", "A-B", r, {50, 50}, {50, 50}, retinareg::testing::six_points(),
                                        Homography::identity());
  EXPECT_EQ(matching_inlier_ratio(in.num_inliers, in.num_matches), 5.0 / 8.0);
}

TEST(EvaluateDataset, PerfectPairAndEcho) {
  const std::vector<Point2> kps{{10, 10}, {30, 30}};
  const std::vector<PairEvaluationInput> in{retinareg::testing::fixture_pair(
      "only", "CF-FA", RegistrationStatus::kOk, Homography::identity(), 10, 10, kps)};
  EvalThresholds t{2.5, 7.0, 4.0, 6.0};
  const EvalReport r = evaluate_dataset(in, t);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].rep, 1.0);
  EXPECT_EQ(r.pairs[0].mir, 1.0);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["thresholds"]["sr_me"].get<double>(), 2.5);
  EXPECT_EQ(j["thresholds"]["sr_mae"].get<double>(), 7.0);
  EXPECT_EQ(j["thresholds"]["rep"].get<double>(), 4.0);
  EXPECT_EQ(j["thresholds"]["mir"].get<double>(), 6.0);
  EXPECT_EQ(j["aggregates"]["overall"]["sr_me"].get<double>(), 100.0);
  EXPECT_EQ(j["pairs"][0]["me"].get<double>(), 0.0);
  EXPECT_NE(r.to_table().find("(eps=2.5)"), std::string::npos);
}

TEST(EvaluateDataset, FailedPairSerializesNullErrors) {
  const std::vector<PairEvaluationInput> in{retinareg::testing::fixture_pair(
      "bad", "CF-FA", RegistrationStatus::kRansacFailed, std::nullopt, 7, 0, {})};
  const auto j = nlohmann::json::parse(evaluate_dataset(in, {}).to_json());
  EXPECT_TRUE(j["pairs"][0]["me"].is_null());
  EXPECT_EQ(j["pairs"][0]["status"], "RansacFailed");
}

TEST(EvaluateDataset, AggregatesEqualRecomputation) {
  std::mt19937_64 rng(4);
  std::vector<PairEvaluationInput> in;
  for (int i = 0; i < 20; ++i) {
    const std::string group = i % 3 == 0 ? "IR-OCT" : "CF-FA";
    const bool ok = rng() % 5 != 0;
    in.push_back(retinareg::testing::fixture_pair(
        "p" + std::to_string(i), group, ok ? RegistrationStatus::kOk : RegistrationStatus::kTooFewMatches,
        ok ? std::optional(Homography::translation(uniform(rng, -6, 6), uniform(rng, -6, 6))) : std::nullopt,
        20, rng() % 21, random_points(rng, 5, 200)));
  }
  const EvalReport r = evaluate_dataset(in, {});
  for (const auto& a : r.aggregates) {
    std::size_t n = 0, me = 0, mae = 0;
    double rep = 0, mir = 0;
    for (const auto& p : r.pairs) {
      if (a.group != "overall" && p.modality_pair != a.group) continue;
      ++n;
      me += p.mean_error <= 3.0;
      mae += p.max_error <= 5.0;
      rep += p.rep;
      mir += p.mir;
    }
    EXPECT_EQ(a.pairs, n);
    EXPECT_NEAR(a.sr_me, 100.0 * me / n, 1e-12);
    EXPECT_NEAR(a.sr_mae, 100.0 * mae / n, 1e-12);
    EXPECT_NEAR(a.mean_rep, rep / n, 1e-12);
    EXPECT_NEAR(a.mean_mir, mir / n, 1e-12);
  }
}

TEST(EvaluateDataset, MissingControlPoints) {
  auto p = retinareg::testing::fixture_pair("x", "A-B", RegistrationStatus::kOk, Homography::identity(), 1, 1, {});
  p.control_points.pop_back();
  try {
    (void)evaluate_dataset(std::vector<PairEvaluationInput>{p}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingAnnotation);
  }
}
