#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retinareg/geometry.hpp"
#include "retinareg/matching.hpp"

namespace retinareg {

/// Per-control-point transfer errors of one registered pair; all +inf when
/// the registration produced no homography.
struct ControlPointErrors {
  std::vector<double> errors;

  double mean() const;
  double max() const;
  bool failed() const;
};

/// D_j = |H_pred(p_j) - q_j|. Points mapped to infinity get +inf.
/// Throws EmptyInput.
ControlPointErrors euclidean_errors(const Homography& h_pred, std::span<const Correspondence> control);

ControlPointErrors failed_registration_errors(std::size_t count);

/// Percentage of pairs whose mean error is <= eps. Throws EmptyInput.
double success_rate_me(std::span<const ControlPointErrors> pairs, double eps);
/// Percentage of pairs whose maximum error is <= eps. Throws EmptyInput.
double success_rate_mae(std::span<const ControlPointErrors> pairs, double eps);

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

/// Symmetric detector repeatability. Keypoints of A are mapped into B by
/// h_gt and kept when inside B; keypoints of B are mapped into A by the
/// inverse and kept when inside A. A kept point is repeated when the nearest
/// kept point of the other image lies within eps in the other image's frame.
/// Returns (repeated_a + repeated_b) / (kept_a + kept_b), or 0 if nothing is kept.
double repeatability(std::span<const Point2> kps_a, std::span<const Point2> kps_b,
                     const Homography& h_gt, double eps, ImageSize size_a, ImageSize size_b);

/// inliers / matches, 0 when there are no matches. Throws InvalidCounts.
double matching_inlier_ratio(std::size_t num_inliers, std::size_t num_matches);

struct EvalThresholds {
  double sr_me = 3.0;
  double sr_mae = 5.0;
  double rep = 5.0;
  double mir = 5.0;  // RANSAC reprojection threshold the MIR was measured at
};

/// Everything needed to score one registered pair.
struct PairEvaluationInput {
  std::string pair_id;
  std::string modality_pair;  // e.g. "CF-FA"
  RegistrationStatus status = RegistrationStatus::kTooFewMatches;
  std::optional<Homography> h_pred;
  std::size_t num_matches = 0;
  std::size_t num_inliers = 0;
  std::vector<Point2> keypoints_a;
  std::vector<Point2> keypoints_b;
  ImageSize size_a;
  ImageSize size_b;
  CorrespondenceSet control_points;
  Homography h_gt;
};

/// Builds the evaluation input from a registration result.
PairEvaluationInput make_evaluation_input(std::string pair_id, std::string modality_pair,
                                          const RegistrationResult& result, ImageSize size_a,
                                          ImageSize size_b, CorrespondenceSet control_points,
                                          const Homography& h_gt);

struct PairRecord {
  std::string pair_id;
  std::string modality_pair;
  RegistrationStatus status = RegistrationStatus::kTooFewMatches;
  double mean_error = 0.0;  // +inf on failure
  double max_error = 0.0;
  double rep = 0.0;
  double mir = 0.0;
  std::size_t num_matches = 0;
  std::size_t num_inliers = 0;
};

struct Aggregate {
  std::string group;  // modality pair or "overall"
  std::size_t pairs = 0;
  double sr_me = 0.0;   // percent
  double sr_mae = 0.0;  // percent
  double mean_rep = 0.0;
  double mean_mir = 0.0;
};

struct EvalReport {
  EvalThresholds thresholds;
  std::vector<PairRecord> pairs;
  std::vector<Aggregate> aggregates;  // per modality pair (sorted), then "overall"

  std::string to_json() const;
  /// Aligned table: SR_ME, SR_MAE, Rep, MIR as percentages with one decimal.
  std::string to_table() const;
};

PairRecord score_pair(const PairEvaluationInput& input, const EvalThresholds& thresholds);

/// Aggregates records per modality pair and overall.
std::vector<Aggregate> aggregate_records(std::span<const PairRecord> records,
                                         const EvalThresholds& thresholds);

/// Throws MissingAnnotation when a pair does not carry exactly 6 control points.
EvalReport evaluate_dataset(std::span<const PairEvaluationInput> inputs,
                            const EvalThresholds& thresholds);

}  // namespace retinareg
