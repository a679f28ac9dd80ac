#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "retinareg/error.hpp"
#include "retinareg/losses.hpp"
#include "retinareg/toy_embedder.hpp"

using namespace retinareg;
using retinareg::testing::numeric_gradient;
using retinareg::testing::relative_error;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

LogitBatch random_logits(std::mt19937_64& rng, Eigen::Index b) {
  LogitBatch batch{random_matrix(rng, b, 2, 3.0), {}};
  for (Eigen::Index i = 0; i < b; ++i) batch.labels.push_back(rng() % 2 ? PatchClass::kVessel : PatchClass::kBackground);
  return batch;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd unflat(const Eigen::VectorXd& v, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), r, c);
}

StratifiedPool six_strata(std::size_t per) {
  StratifiedPool pool;
  std::size_t id = 0;
  for (PatchClass c : {PatchClass::kVessel, PatchClass::kBackground})
    for (Modality m : {Modality::kCF, Modality::kFA, Modality::kIR})
      for (std::size_t k = 0; k < per; ++k) pool[{c, m}].push_back(id++);
  return pool;
}

ToyDataset tiny_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ToyDataset d;
  const int n = 16, pairs = 12;
  d.detector_patches.resize(kPatchValues, n);
  for (int i = 0; i < n; ++i) {
    const PatchClass cls = i % 2 ? PatchClass::kBackground : PatchClass::kVessel;
    for (int k = 0; k < kPatchValues; ++k)
      d.detector_patches(k, i) = cls == PatchClass::kVessel && (k / 96) % 32 == 16 ? 0.2 : 0.7 + 0.1 * u(rng);
    d.detector_labels.push_back(cls);
    d.detector_modalities.push_back(Modality::kSynthA);
  }
  d.pair_a.resize(kPatchValues, pairs);
  for (Eigen::Index i = 0; i < d.pair_a.size(); ++i) d.pair_a.data()[i] = u(rng);
  d.pair_b = d.pair_a + 0.05 * random_matrix(rng, kPatchValues, pairs);
  d.val_detector_patches = d.detector_patches.leftCols(4);
  d.val_detector_labels.assign(d.detector_labels.begin(), d.detector_labels.begin() + 4);
  d.val_pair_a = d.pair_a.leftCols(4);
  d.val_pair_b = d.pair_b.leftCols(4);
  return d;
}

ToyTrainConfig tiny_config() {
  ToyTrainConfig cfg;
  cfg.batch_detector = 4;
  cfg.batch_descriptor = 4;
  cfg.hidden = 8;
  cfg.descriptor_dim = 4;
  cfg.epochs = 4;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Bce, UniformPredictionIsLn2) {
  for (PatchClass c : {PatchClass::kVessel, PatchClass::kBackground}) {
    const BceResult r = bce_detector_loss({Eigen::MatrixXd::Zero(3, 2), {c, c, c}});
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  }
}

TEST(Bce, ConfidentCorrectNearZero) {
  Eigen::MatrixXd l(1, 2);
  l << 50, -50;
  EXPECT_LT(bce_detector_loss({l, {PatchClass::kVessel}}).loss, 1e-20);
  EXPECT_NEAR(bce_detector_loss({l, {PatchClass::kBackground}}).loss, 100.0, 1e-9);
}

TEST(Bce, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const LogitBatch b = random_logits(rng, 7);
    const auto f = [&](const Eigen::VectorXd& x) { return bce_detector_loss({unflat(x, 7, 2), b.labels}).loss; };
    EXPECT_LE(relative_error(flat(bce_detector_loss(b).grad), numeric_gradient(f, flat(b.logits))), 1e-4);
  }
}

TEST(Bce, RejectsMismatchedLabels) {
  EXPECT_THROW((void)bce_detector_loss({Eigen::MatrixXd::Zero(2, 2), {PatchClass::kVessel}}), Error);
}

TEST(PairwiseDistances, Examples) {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(4, 4);
  const auto d = pairwise_distances(e, e);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(d(i, j), i == j ? 0.0 : std::sqrt(2.0), 1e-12);
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  EXPECT_NEAR(pairwise_distances(a, b)(0, 0), 5.0, 1e-12);
  EXPECT_EQ(code_of([] { (void)pairwise_distances(Eigen::MatrixXd(2, 3), Eigen::MatrixXd(2, 4)); }),
            ErrorCode::kDimensionMismatch);
}

TEST(PairwiseDistances, MatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_matrix(rng, 9, 5), y = random_matrix(rng, 6, 5);
    const auto d = pairwise_distances(x, y);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 6; ++j) EXPECT_NEAR(d(i, j), retinareg::testing::naive_distance(x, i, y, j), 1e-10);
  }
}

TEST(Mining, TwoPairs) {
  std::mt19937_64 rng(3);
  const DescriptorBatch b{random_matrix(rng, 2, 4), random_matrix(rng, 2, 4)};
  const auto m = hard_negative_mining(b);
  EXPECT_EQ(m.for_anchor, (std::vector<Eigen::Index>{1, 0}));
  EXPECT_EQ(m.for_positive, (std::vector<Eigen::Index>{1, 0}));
}

TEST(Mining, ConstructedNearestWrongPositive) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 2), p(5, 2);
  p << 0, 0, 10, 0, 0, 10, 0.5, 0.5, -10, 0;
  const auto m = hard_negative_mining({a, p});
  EXPECT_EQ(m.for_anchor[0], 3);
}

TEST(Mining, TiesToSmallestIndex) {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 3);
  const auto m = hard_negative_mining({z, z});
  EXPECT_EQ(m.for_anchor, (std::vector<Eigen::Index>{1, 0, 0, 0}));
  EXPECT_EQ(m.for_positive, (std::vector<Eigen::Index>{1, 0, 0, 0}));
}

TEST(Mining, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng() % 63);
    const DescriptorBatch batch{random_matrix(rng, b, 8), random_matrix(rng, b, 8)};
    const auto m = hard_negative_mining(batch);
    const auto fa = retinareg::testing::exhaustive_hardest(batch.anchors, batch.positives);
    const auto fp = retinareg::testing::exhaustive_hardest(batch.positives, batch.anchors);
    for (Eigen::Index i = 0; i < b; ++i) {
      EXPECT_EQ(static_cast<std::size_t>(m.for_anchor[i]), fa[i]);
      EXPECT_EQ(static_cast<std::size_t>(m.for_positive[i]), fp[i]);
    }
  }
}

TEST(Mining, BatchTooSmall) {
  EXPECT_EQ(code_of([] { (void)hard_negative_mining({Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 2)}); }),
            ErrorCode::kBatchTooSmall);
}

TEST(Quadruplet, HandEvaluatedExample) {
  // d(a,p) = 0.5, d(a,n_a) = 0.7, d(p,n_p) = 1.2 for pair 0.
  Eigen::MatrixXd a(2, 2), p(2, 2);
  a << 0, 0, 0, 100;
  p << 0.5, 0, 0, 100;
  const Eigen::Vector2d na(0.0, 0.7);
  a.row(1) = Eigen::RowVector2d(-0.7, 0.0);  // n_p for pair 0: |p0 - a1| = 1.2
  p.row(1) = na.transpose();                 // n_a for pair 0: |a0 - p1| = 0.7
  MinedNegatives mined{{1, 0}, {1, 0}};
  const QuadrupletResult r = quadruplet_loss({a, p}, mined, 1.0);
  const auto d = pairwise_distances(a, p);
  const double pair1 = std::max(0.0, 1.0 + d(1, 1) - d(1, 0)) + std::max(0.0, 1.0 + d(1, 1) - d(0, 1));
  EXPECT_NEAR(2.0 * r.loss - pair1, 1.1, 1e-12);
}

TEST(Quadruplet, SatisfiedMarginsGiveZero) {
  Eigen::MatrixXd a(3, 3);
  a << 0, 0, 0, 2, 0, 0, 0, 2, 0;
  const QuadrupletResult r = quadruplet_loss({a, a}, hard_negative_mining({a, a}), 1.0);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad_anchors.norm(), 0.0);
}

TEST(Quadruplet, BoundedByTwiceMarginPlusDistances) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const DescriptorBatch b{random_matrix(rng, 6, 4), random_matrix(rng, 6, 4)};
    const auto mined = hard_negative_mining(b);
    const auto r = quadruplet_loss(b, mined, 0.7);
    const auto d = pairwise_distances(b.anchors, b.positives);
    EXPECT_GE(r.loss, 0.0);
    EXPECT_LE(r.loss, 2.0 * (0.7 + d.diagonal().maxCoeff()) + 1e-12);
  }
}

TEST(Quadruplet, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 10; ++t) {
    const DescriptorBatch b{random_matrix(rng, 5, 3), random_matrix(rng, 5, 3)};
    const auto mined = hard_negative_mining(b);
    if (!retinareg::testing::away_from_kinks(b, mined, 1.0)) continue;
    ++checked;
    const auto r = quadruplet_loss(b, mined, 1.0);
    const auto fa = [&](const Eigen::VectorXd& x) { return quadruplet_loss({unflat(x, 5, 3), b.positives}, mined, 1.0).loss; };
    const auto fp = [&](const Eigen::VectorXd& x) { return quadruplet_loss({b.anchors, unflat(x, 5, 3)}, mined, 1.0).loss; };
    EXPECT_LE(relative_error(flat(r.grad_anchors), numeric_gradient(fa, flat(b.anchors))), 1e-4);
    EXPECT_LE(relative_error(flat(r.grad_positives), numeric_gradient(fp, flat(b.positives))), 1e-4);
  }
  EXPECT_EQ(checked, 10);
}

TEST(Multitask, WeightedSum) {
  std::mt19937_64 rng(7);
  const LogitBatch det = random_logits(rng, 6);
  const DescriptorBatch desc{random_matrix(rng, 6, 4), random_matrix(rng, 6, 4)};
  const double bce = bce_detector_loss(det).loss;
  const double quad = quadruplet_loss(desc, hard_negative_mining(desc), 1.0).loss;
  EXPECT_NEAR(multitask_loss(det, desc, LossConfig{}).loss, bce + quad, 1e-12);
  LossConfig only_desc{1.0, 0.0, 2.5};
  EXPECT_EQ(multitask_loss(det, desc, only_desc).loss, 2.5 * quad);
  LossConfig scaled{1.0, 0.3, 0.7};
  const auto r = multitask_loss(det, desc, scaled);
  EXPECT_NEAR(r.loss, 0.3 * bce + 0.7 * quad, 1e-12);
  EXPECT_NEAR((r.grad_logits - 0.3 * bce_detector_loss(det).grad).norm(), 0.0, 1e-12);
}

TEST(Sampler, BalancedStrata) {
  const StratifiedPool pool = six_strata(200);
  const auto ids = balanced_batch_sampler(pool, 576, 1);
  ASSERT_EQ(ids.size(), 576u);
  for (const auto& [key, members] : pool) {
    const std::set<std::size_t> s(members.begin(), members.end());
    const auto n = std::count_if(ids.begin(), ids.end(), [&](std::size_t id) { return s.count(id) > 0; });
    EXPECT_EQ(n, 96);
  }
  EXPECT_EQ(std::set<std::size_t>(ids.begin(), ids.end()).size(), 576u);
}

TEST(Sampler, SmallStrataDrawWithReplacement) {
  const auto ids = balanced_batch_sampler(six_strata(3), 48, 2);
  EXPECT_EQ(ids.size(), 48u);
}

TEST(Sampler, DeterministicAndSeedSensitive) {
  const StratifiedPool pool = six_strata(50);
  EXPECT_EQ(balanced_batch_sampler(pool, 60, 9), balanced_batch_sampler(pool, 60, 9));
  EXPECT_NE(balanced_batch_sampler(pool, 60, 9), balanced_batch_sampler(pool, 60, 10));
}

TEST(Sampler, Errors) {
  StratifiedPool pool = six_strata(5);
  EXPECT_EQ(code_of([&] { (void)balanced_batch_sampler(pool, 50, 0); }), ErrorCode::kIndivisibleBatch);
  pool.begin()->second.clear();
  EXPECT_EQ(code_of([&] { (void)balanced_batch_sampler(pool, 48, 0); }), ErrorCode::kEmptyStratum);
}

TEST(ToyEmbedder, ZeroParameters) {
  const ToyEmbedder net;
  std::mt19937_64 rng(8);
  const Eigen::VectorXd patch = random_matrix(rng, kPatchValues, 1).col(0);
  const auto out = net.forward_patch(Eigen::VectorXd::Zero(net.parameter_count()), patch);
  EXPECT_EQ(out.logits, Eigen::Vector2d::Zero());
  EXPECT_EQ(out.descriptor.size(), 32);
  EXPECT_EQ(out.descriptor.norm(), 0.0);
}

TEST(ToyEmbedder, IdenticalPatchesIdenticalOutputs) {
  const ToyEmbedder net(16, 8);
  const Eigen::VectorXd params = net.init_params(1);
  std::mt19937_64 rng(9);
  const Eigen::VectorXd patch = random_matrix(rng, kPatchValues, 1).col(0);
  Eigen::MatrixXd batch(kPatchValues, 2);
  batch << patch, patch;
  const auto c = net.forward(params, batch);
  EXPECT_EQ(c.logits.row(0), c.logits.row(1));
  EXPECT_EQ(c.descriptors.row(0), c.descriptors.row(1));
  EXPECT_NEAR(c.descriptors.row(0).norm(), 1.0, 1e-12);
}

TEST(ToyEmbedder, JacobianVectorProducts) {
  const ToyEmbedder net(8, 4);
  std::mt19937_64 rng(10);
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd params = net.init_params(t + 20);
    const Eigen::MatrixXd input = random_matrix(rng, kPatchValues, 3);
    const Eigen::MatrixXd wl = random_matrix(rng, 3, 2), wd = random_matrix(rng, 3, 4);
    const auto f = [&](const Eigen::VectorXd& p) {
      const auto c = net.forward(p, input);
      return (c.logits.array() * wl.array()).sum() + (c.descriptors.array() * wd.array()).sum();
    };
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
    net.backward(params, net.forward(params, input), wl, wd, grad);
    for (int k = 0; k < 4; ++k) {
      const Eigen::VectorXd v = random_matrix(rng, params.size(), 1).col(0).normalized();
      const double h = 1e-6;
      const double numeric = (f(params + h * v) - f(params - h * v)) / (2 * h);
      const double analytic = grad.dot(v);
      EXPECT_LE(std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}), 1e-4);
    }
  }
}

TEST(ToyEmbedder, ParamsFileRoundTrip) {
  const ToyEmbedder net(8, 4);
  const Eigen::VectorXd params = net.init_params(5);
  const auto path = (retinareg::testing::scratch_dir("toy_params") / "p.bin").string();
  save_toy_params(net, params, path);
  int hidden = 0, dim = 0;
  EXPECT_EQ(load_toy_params(path, &hidden, &dim), params);
  EXPECT_EQ(hidden, 8);
  EXPECT_EQ(dim, 4);
}

TEST(ToyTrain, ZeroLearningRateFlatCurve) {
  ToyTrainConfig cfg = tiny_config();
  cfg.learning_rate = 0.0;
  const auto r = toy_train(tiny_dataset(1), cfg, LossConfig{});
  ASSERT_FALSE(r.curve.empty());
  for (const auto& e : r.curve) {
    EXPECT_NEAR(e.train_loss, r.curve.front().train_loss, 1e-12);
    EXPECT_NEAR(e.val_loss, r.curve.front().val_loss, 1e-12);
  }
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(ToyTrain, DeterministicGivenSeed) {
  ToyTrainConfig cfg = tiny_config();
  cfg.learning_rate = 1e-3;
  const ToyDataset d = tiny_dataset(2);
  const auto a = toy_train(d, cfg, LossConfig{}), b = toy_train(d, cfg, LossConfig{});
  EXPECT_EQ(loss_curve_csv(a.curve), loss_curve_csv(b.curve));
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.curve.size(), 4u);
  EXPECT_LT(a.curve.back().train_loss, a.curve.front().train_loss);
}

TEST(ToyTrain, EmptyDataset) {
  EXPECT_EQ(code_of([] { (void)toy_train(ToyDataset{}, tiny_config(), LossConfig{}); }), ErrorCode::kEmptyDataset);
}
