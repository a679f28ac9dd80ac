#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "retinareg/image.hpp"

namespace retinareg {

enum class PatchClass : int { kVessel = 0, kBackground = 1 };

/// B x 2 detector logits (column 0 = vessel) with class labels.
struct LogitBatch {
  Eigen::MatrixXd logits;
  std::vector<PatchClass> labels;
};

/// Row i of `anchors` and row i of `positives` form positive pair i.
struct DescriptorBatch {
  Eigen::MatrixXd anchors;
  Eigen::MatrixXd positives;

  Eigen::Index size() const { return anchors.rows(); }
};

struct LossConfig {
  double margin = 1.0;
  double lambda_det = 1.0;
  double lambda_desc = 1.0;

  void validate() const;
};

struct BceResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // B x 2
};

/// Mean softmax cross-entropy over the two classes, with its analytic
/// gradient (softmax - onehot) / B.
BceResult bce_detector_loss(const LogitBatch& batch);

/// N x M Euclidean distances via the Gram expansion, clamped at zero before
/// the square root. Throws DimensionMismatch.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct MinedNegatives {
  std::vector<Eigen::Index> for_anchor;    // index into positives, != i
  std::vector<Eigen::Index> for_positive;  // index into anchors, != i
};

/// In-batch hardest negatives in both directions; ties go to the smaller
/// index. Throws BatchTooSmall for B < 2.
MinedNegatives hard_negative_mining(const DescriptorBatch& batch);

struct QuadrupletResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_anchors;
  Eigen::MatrixXd grad_positives;
};

/// Bidirectional quadruplet hinge loss averaged over the batch:
///   max(0, m + d(a,p) - d(a,n_a)) + max(0, m + d(p,a) - d(p,n_p)).
/// Mined indices are treated as constants; the gradient of a zero distance
/// is taken as zero.
QuadrupletResult quadruplet_loss(const DescriptorBatch& batch, const MinedNegatives& mined,
                                 double margin);

struct MultitaskResult {
  double loss = 0.0;
  double detector_loss = 0.0;
  double descriptor_loss = 0.0;
  Eigen::MatrixXd grad_logits;
  Eigen::MatrixXd grad_anchors;
  Eigen::MatrixXd grad_positives;
};

/// lambda_det * BCE + lambda_desc * quadruplet (with fresh in-batch mining).
MultitaskResult multitask_loss(const LogitBatch& det, const DescriptorBatch& desc,
                               const LossConfig& cfg);

struct StratumKey {
  PatchClass cls;
  Modality modality;

  auto operator<=>(const StratumKey&) const = default;
};

/// Sample ids grouped by (class, modality).
using StratifiedPool = std::map<StratumKey, std::vector<std::size_t>>;

/// Draws batch_size / |strata| ids per stratum, without replacement unless a
/// stratum is smaller than its quota. Throws EmptyStratum, IndivisibleBatch.
std::vector<std::size_t> balanced_batch_sampler(const StratifiedPool& pool,
                                                std::size_t batch_size, std::uint64_t seed);

}  // namespace retinareg
