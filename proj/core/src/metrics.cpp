#include "retinareg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <json.hpp>

#include "retinareg/error.hpp"

namespace retinareg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

bool inside(const Point2& p, ImageSize s) {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= s.width - 1.0 && p.y <= s.height - 1.0;
}

// Projects `from` into the other frame and keeps the points that land inside.
std::vector<Point2> project_inside(std::span<const Point2> from, const Homography& h,
                                   ImageSize target) {
  std::vector<Point2> out;
  for (const auto& p : from) {
    try {
      const Point2 q = h.apply(p);
      if (inside(q, target)) out.push_back(q);
    } catch (const Error&) {
    }
  }
  return out;
}

std::size_t count_repeated(const std::vector<Point2>& projected, const std::vector<Point2>& others,
                           double eps) {
  std::size_t n = 0;
  for (const auto& p : projected) {
    for (const auto& q : others) {
      if (distance(p, q) <= eps) {
        ++n;
        break;
      }
    }
  }
  return n;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

double ControlPointErrors::mean() const {
  if (errors.empty()) return kInf;
  double s = 0.0;
  for (double e : errors) s += e;
  return s / static_cast<double>(errors.size());
}

double ControlPointErrors::max() const {
  if (errors.empty()) return kInf;
  return *std::max_element(errors.begin(), errors.end());
}

bool ControlPointErrors::failed() const {
  return std::any_of(errors.begin(), errors.end(), [](double e) { return !std::isfinite(e); });
}

ControlPointErrors euclidean_errors(const Homography& h_pred,
                                    std::span<const Correspondence> control) {
  if (control.empty()) throw Error(ErrorCode::kEmptyInput, "no control points");
  ControlPointErrors out;
  out.errors.reserve(control.size());
  for (const auto& c : control) {
    try {
      out.errors.push_back(distance(h_pred.apply(c.source), c.target));
    } catch (const Error&) {
      out.errors.push_back(kInf);
    }
  }
  return out;
}

ControlPointErrors failed_registration_errors(std::size_t count) {
  return {std::vector<double>(count, kInf)};
}

double success_rate_me(std::span<const ControlPointErrors> pairs, double eps) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no pairs to score");
  const auto hits = std::count_if(pairs.begin(), pairs.end(),
                                  [eps](const ControlPointErrors& e) { return !e.failed() && e.mean() <= eps; });
  return percent(static_cast<std::size_t>(hits), pairs.size());
}

double success_rate_mae(std::span<const ControlPointErrors> pairs, double eps) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no pairs to score");
  const auto hits = std::count_if(pairs.begin(), pairs.end(),
                                  [eps](const ControlPointErrors& e) { return !e.failed() && e.max() <= eps; });
  return percent(static_cast<std::size_t>(hits), pairs.size());
}

double repeatability(std::span<const Point2> kps_a, std::span<const Point2> kps_b,
                     const Homography& h_gt, double eps, ImageSize size_a, ImageSize size_b) {
  const Homography inv = h_gt.inverse();
  // a -> B frame, kept if inside B; b -> A frame, kept if inside A.
  const auto a_in_b = project_inside(kps_a, h_gt, size_b);
  const auto b_in_a = project_inside(kps_b, inv, size_a);
  // Counterparts are the kept points of the other image in their own frame.
  std::vector<Point2> kept_b, kept_a;
  for (const auto& b : kps_b) {
    try {
      if (inside(inv.apply(b), size_a)) kept_b.push_back(b);
    } catch (const Error&) {
    }
  }
  for (const auto& a : kps_a) {
    try {
      if (inside(h_gt.apply(a), size_b)) kept_a.push_back(a);
    } catch (const Error&) {
    }
  }
  const std::size_t total = a_in_b.size() + b_in_a.size();
  if (total == 0) return 0.0;
  const std::size_t repeated = count_repeated(a_in_b, kept_b, eps) + count_repeated(b_in_a, kept_a, eps);
  return static_cast<double>(repeated) / static_cast<double>(total);
}

double matching_inlier_ratio(std::size_t num_inliers, std::size_t num_matches) {
  if (num_inliers > num_matches) {
    throw Error(ErrorCode::kInvalidCounts, "more inliers than matches");
  }
  if (num_matches == 0) return 0.0;
  return static_cast<double>(num_inliers) / static_cast<double>(num_matches);
}

PairEvaluationInput make_evaluation_input(std::string pair_id, std::string modality_pair,
                                          const RegistrationResult& result, ImageSize size_a,
                                          ImageSize size_b, CorrespondenceSet control_points,
                                          const Homography& h_gt) {
  PairEvaluationInput in;
  in.pair_id = std::move(pair_id);
  in.modality_pair = std::move(modality_pair);
  in.status = result.status;
  in.h_pred = result.homography;
  in.num_matches = result.matches.size();
  in.num_inliers = result.inlier_count();
  for (const auto& k : result.keypoints_a) in.keypoints_a.push_back(k.pos);
  for (const auto& k : result.keypoints_b) in.keypoints_b.push_back(k.pos);
  in.size_a = size_a;
  in.size_b = size_b;
  in.control_points = std::move(control_points);
  in.h_gt = h_gt;
  return in;
}

PairRecord score_pair(const PairEvaluationInput& input, const EvalThresholds& thresholds) {
  PairRecord r;
  r.pair_id = input.pair_id;
  r.modality_pair = input.modality_pair;
  r.status = input.status;
  const ControlPointErrors errs =
      (input.status == RegistrationStatus::kOk && input.h_pred)
          ? euclidean_errors(*input.h_pred, input.control_points)
          : failed_registration_errors(input.control_points.size());
  r.mean_error = errs.mean();
  r.max_error = errs.max();
  r.rep = repeatability(input.keypoints_a, input.keypoints_b, input.h_gt, thresholds.rep,
                        input.size_a, input.size_b);
  r.num_matches = input.num_matches;
  r.num_inliers = input.num_inliers;
  r.mir = matching_inlier_ratio(input.num_inliers, input.num_matches);
  return r;
}

std::vector<Aggregate> aggregate_records(std::span<const PairRecord> records,
                                         const EvalThresholds& thresholds) {
  std::map<std::string, std::vector<const PairRecord*>> groups;
  for (const auto& r : records) groups[r.modality_pair].push_back(&r);
  std::vector<const PairRecord*> all;
  for (const auto& r : records) all.push_back(&r);

  const auto summarize = [&](const std::string& name, const std::vector<const PairRecord*>& rs) {
    Aggregate a;
    a.group = name;
    a.pairs = rs.size();
    if (rs.empty()) return a;
    std::size_t me = 0, mae = 0;
    double rep = 0.0, mir = 0.0;
    for (const auto* r : rs) {
      // A failed registration is a miss even at an infinite threshold.
      const bool scored = std::isfinite(r->max_error);
      if (scored && r->mean_error <= thresholds.sr_me) ++me;
      if (scored && r->max_error <= thresholds.sr_mae) ++mae;
      rep += r->rep;
      mir += r->mir;
    }
    a.sr_me = percent(me, rs.size());
    a.sr_mae = percent(mae, rs.size());
    a.mean_rep = rep / static_cast<double>(rs.size());
    a.mean_mir = mir / static_cast<double>(rs.size());
    return a;
  };

  std::vector<Aggregate> out;
  for (const auto& [name, rs] : groups) out.push_back(summarize(name, rs));
  out.push_back(summarize("overall", all));
  return out;
}

EvalReport evaluate_dataset(std::span<const PairEvaluationInput> inputs,
                            const EvalThresholds& thresholds) {
  if (inputs.empty()) throw Error(ErrorCode::kEmptyInput, "no pairs to evaluate");
  EvalReport report;
  report.thresholds = thresholds;
  for (const auto& in : inputs) {
    if (in.control_points.size() != 6) {
      throw Error(ErrorCode::kMissingAnnotation,
                  "pair " + in.pair_id + " needs 6 control points, has " +
                      std::to_string(in.control_points.size()));
    }
    report.pairs.push_back(score_pair(in, thresholds));
  }
  report.aggregates = aggregate_records(report.pairs, thresholds);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["thresholds"] = {{"sr_me", thresholds.sr_me},
                     {"sr_mae", thresholds.sr_mae},
                     {"rep", thresholds.rep},
                     {"mir", thresholds.mir}};
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    nlohmann::ordered_json r;
    r["pair_id"] = p.pair_id;
    r["modality_pair"] = p.modality_pair;
    r["status"] = std::string(to_string(p.status));
    r["me"] = number_or_null(p.mean_error);
    r["mae"] = number_or_null(p.max_error);
    r["rep"] = p.rep;
    r["mir"] = p.mir;
    r["matches"] = p.num_matches;
    r["inliers"] = p.num_inliers;
    j["pairs"].push_back(r);
  }
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& a : aggregates) {
    agg[a.group] = {{"pairs", a.pairs},
                    {"sr_me", a.sr_me},
                    {"sr_mae", a.sr_mae},
                    {"rep", a.mean_rep},
                    {"mir", a.mean_mir}};
  }
  j["aggregates"] = agg;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::size_t width = 7;
  for (const auto& a : aggregates) width = std::max(width, a.group.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %5s %13s %14s %10s %10s\n", static_cast<int>(width),
                "Group", "N", "SR_ME", "SR_MAE", "Rep", "MIR");
  out += buf;
  const auto eps_label = [](double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "(eps=%g)", v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof(buf), "%-*s %5s %13s %14s %10s %10s\n", static_cast<int>(width), "",
                "", eps_label(thresholds.sr_me).c_str(), eps_label(thresholds.sr_mae).c_str(),
                eps_label(thresholds.rep).c_str(), eps_label(thresholds.mir).c_str());
  out += buf;
  for (const auto& a : aggregates) {
    std::snprintf(buf, sizeof(buf), "%-*s %5zu %13.1f %14.1f %10.1f %10.1f\n",
                  static_cast<int>(width), a.group.c_str(), a.pairs, a.sr_me, a.sr_mae,
                  100.0 * a.mean_rep, 100.0 * a.mean_mir);
    out += buf;
  }
  return out;
}

}  // namespace retinareg
