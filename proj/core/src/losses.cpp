#include "retinareg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "retinareg/error.hpp"

namespace retinareg {

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw Error(ErrorCode::kConfigError, "margin must be > 0");
  if (!(lambda_det >= 0.0) || !(lambda_desc >= 0.0)) {
    throw Error(ErrorCode::kConfigError, "loss weights must be >= 0");
  }
}

BceResult bce_detector_loss(const LogitBatch& batch) {
  const Eigen::Index b = batch.logits.rows();
  if (b < 1 || batch.logits.cols() != 2 || static_cast<Eigen::Index>(batch.labels.size()) != b) {
    throw Error(ErrorCode::kDimensionMismatch, "logit batch must be B x 2 with B labels");
  }
  BceResult out;
  out.grad.resize(b, 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double z0 = batch.logits(i, 0), z1 = batch.logits(i, 1);
    const double zmax = std::max(z0, z1);
    const double lse = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
    const int label = static_cast<int>(batch.labels[i]);
    total += lse - batch.logits(i, label);
    for (int c = 0; c < 2; ++c) {
      const double p = std::exp(batch.logits(i, c) - lse);
      out.grad(i, c) = (p - (c == label ? 1.0 : 0.0)) / static_cast<double>(b);
    }
  }
  out.loss = total / static_cast<double>(b);
  return out;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) throw Error(ErrorCode::kDimensionMismatch, "descriptor dims differ");
  const Eigen::VectorXd xn = x.rowwise().squaredNorm();
  const Eigen::VectorXd yn = y.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * x * y.transpose();
  d.colwise() += xn;
  d.rowwise() += yn.transpose();
  return d.cwiseMax(0.0).cwiseSqrt();
}

MinedNegatives hard_negative_mining(const DescriptorBatch& batch) {
  const Eigen::Index b = batch.size();
  if (b < 2) throw Error(ErrorCode::kBatchTooSmall, "hard negative mining needs B >= 2");
  if (batch.positives.rows() != b || batch.positives.cols() != batch.anchors.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "anchor and positive blocks differ in shape");
  }
  // d(i, j) = d(a_i, p_j): rows mine for anchors, columns for positives.
  const Eigen::MatrixXd d = pairwise_distances(batch.anchors, batch.positives);
  MinedNegatives out;
  out.for_anchor.resize(b);
  out.for_positive.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index best_a = -1, best_p = -1;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (best_a < 0 || d(i, j) < d(i, best_a)) best_a = j;
      if (best_p < 0 || d(j, i) < d(best_p, i)) best_p = j;
    }
    out.for_anchor[i] = best_a;
    out.for_positive[i] = best_p;
  }
  return out;
}

namespace {

// Distance and its gradient with respect to x.
double dist_with_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& grad) {
  grad = x - y;
  const double d = grad.norm();
  if (d > 0.0) {
    grad /= d;
  } else {
    grad.setZero();
  }
  return d;
}

}  // namespace

QuadrupletResult quadruplet_loss(const DescriptorBatch& batch, const MinedNegatives& mined,
                                 double margin) {
  const Eigen::Index b = batch.size();
  if (static_cast<Eigen::Index>(mined.for_anchor.size()) != b ||
      static_cast<Eigen::Index>(mined.for_positive.size()) != b) {
    throw Error(ErrorCode::kDimensionMismatch, "mined indices do not match the batch");
  }
  QuadrupletResult out;
  out.grad_anchors = Eigen::MatrixXd::Zero(b, batch.anchors.cols());
  out.grad_positives = Eigen::MatrixXd::Zero(b, batch.positives.cols());
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::VectorXd g_ap, g_an, g_pn;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index na = mined.for_anchor[i], np = mined.for_positive[i];
    if (na < 0 || na >= b || np < 0 || np >= b) {
      throw Error(ErrorCode::kOutOfBounds, "mined index outside the batch");
    }
    const Eigen::VectorXd a = batch.anchors.row(i).transpose();
    const Eigen::VectorXd p = batch.positives.row(i).transpose();
    const Eigen::VectorXd neg_a = batch.positives.row(na).transpose();
    const Eigen::VectorXd neg_p = batch.anchors.row(np).transpose();

    const double d_ap = dist_with_grad(a, p, g_ap);      // d/da; d/dp = -g_ap
    const double d_an = dist_with_grad(a, neg_a, g_an);  // d/da; d/dn = -g_an
    const double d_pn = dist_with_grad(p, neg_p, g_pn);  // d/dp; d/dn = -g_pn

    const double t1 = margin + d_ap - d_an;
    const double t2 = margin + d_ap - d_pn;
    if (t1 > 0.0) {
      total += t1;
      out.grad_anchors.row(i) += inv_b * (g_ap - g_an).transpose();
      out.grad_positives.row(i) -= inv_b * g_ap.transpose();
      out.grad_positives.row(na) += inv_b * g_an.transpose();
    }
    if (t2 > 0.0) {
      total += t2;
      out.grad_anchors.row(i) += inv_b * g_ap.transpose();
      out.grad_positives.row(i) += inv_b * (-g_ap - g_pn).transpose();
      out.grad_anchors.row(np) += inv_b * g_pn.transpose();
    }
  }
  out.loss = total * inv_b;
  return out;
}

MultitaskResult multitask_loss(const LogitBatch& det, const DescriptorBatch& desc,
                               const LossConfig& cfg) {
  cfg.validate();
  const BceResult bce = bce_detector_loss(det);
  const QuadrupletResult quad = quadruplet_loss(desc, hard_negative_mining(desc), cfg.margin);
  MultitaskResult out;
  out.detector_loss = bce.loss;
  out.descriptor_loss = quad.loss;
  out.loss = cfg.lambda_det * bce.loss + cfg.lambda_desc * quad.loss;
  out.grad_logits = cfg.lambda_det * bce.grad;
  out.grad_anchors = cfg.lambda_desc * quad.grad_anchors;
  out.grad_positives = cfg.lambda_desc * quad.grad_positives;
  return out;
}

std::vector<std::size_t> balanced_batch_sampler(const StratifiedPool& pool,
                                                std::size_t batch_size, std::uint64_t seed) {
  if (pool.empty()) throw Error(ErrorCode::kEmptyStratum, "no strata in pool");
  for (const auto& [key, ids] : pool) {
    if (ids.empty()) {
      throw Error(ErrorCode::kEmptyStratum,
                  "stratum (" + std::to_string(static_cast<int>(key.cls)) + ", " +
                      std::string(to_string(key.modality)) + ") is empty");
    }
  }
  if (batch_size == 0 || batch_size % pool.size() != 0) {
    throw Error(ErrorCode::kIndivisibleBatch,
                "batch size " + std::to_string(batch_size) + " not divisible by " +
                    std::to_string(pool.size()) + " strata");
  }
  const std::size_t quota = batch_size / pool.size();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (const auto& [key, ids] : pool) {
    if (ids.size() >= quota) {
      std::vector<std::size_t> shuffled = ids;
      for (std::size_t k = 0; k < quota; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, shuffled.size() - 1);
        std::swap(shuffled[k], shuffled[pick(rng)]);
        out.push_back(shuffled[k]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
      for (std::size_t k = 0; k < quota; ++k) out.push_back(ids[pick(rng)]);
    }
  }
  return out;
}

}  // namespace retinareg
