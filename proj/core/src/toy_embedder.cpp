#include "retinareg/toy_embedder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "retinareg/error.hpp"

namespace retinareg {
namespace {

using MapM = Eigen::Map<const Eigen::MatrixXd>;
using MapV = Eigen::Map<const Eigen::VectorXd>;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

// Consecutive [begin, end) chunks of at least two items; a trailing single
// item joins the previous chunk.
std::vector<std::pair<Eigen::Index, Eigen::Index>> chunk_ranges(Eigen::Index n, std::size_t chunk) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  const auto step = static_cast<Eigen::Index>(std::max<std::size_t>(chunk, 2));
  for (Eigen::Index b = 0; b < n; b += step) out.emplace_back(b, std::min(n, b + step));
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& ids) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(ids[k]));
  return out;
}

// Per-patch zero mean and unit variance, so intensity offsets between
// modalities never reach the first layer.
Eigen::MatrixXd standardize_patches(const Eigen::MatrixXd& input) {
  constexpr double kVarianceFloor = 1e-4;
  Eigen::MatrixXd out(input.rows(), input.cols());
  for (Eigen::Index i = 0; i < input.cols(); ++i) {
    const double mean = input.col(i).mean();
    const Eigen::ArrayXd centred = input.col(i).array() - mean;
    const double var = centred.square().mean();
    out.col(i) = (centred / std::sqrt(var + kVarianceFloor)).matrix();
  }
  return out;
}

}  // namespace

ToyEmbedder::ToyEmbedder(int hidden, int descriptor_dim) : hidden_(hidden), dim_(descriptor_dim) {
  if (hidden < 1 || descriptor_dim < 2) {
    throw Error(ErrorCode::kConfigError, "toy embedder needs hidden >= 1 and descriptor_dim >= 2");
  }
  const Eigen::Index h = hidden, d = descriptor_dim;
  off_w1_ = 0;
  off_b1_ = off_w1_ + h * kPatchValues;
  off_w2_ = off_b1_ + h;
  off_b2_ = off_w2_ + h * h;
  off_wd_ = off_b2_ + h;
  off_bd_ = off_wd_ + 2 * h;
  off_we_ = off_bd_ + 2;
  off_be_ = off_we_ + d * h;
  total_ = off_be_ + d;
}

Eigen::VectorXd ToyEmbedder::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(total_);
  const auto fill = [&](Eigen::Index off, Eigen::Index count, double fan_in) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < count; ++i) p(off + i) = n(rng);
  };
  fill(off_w1_, hidden_ * static_cast<Eigen::Index>(kPatchValues), kPatchValues);
  fill(off_w2_, hidden_ * hidden_, hidden_);
  fill(off_wd_, 2 * hidden_, hidden_);
  fill(off_we_, dim_ * hidden_, hidden_);
  return p;
}

ToyEmbedder::Cache ToyEmbedder::forward(const Eigen::VectorXd& params,
                                        const Eigen::MatrixXd& input) const {
  if (params.size() != total_) throw Error(ErrorCode::kDimensionMismatch, "parameter count");
  if (input.rows() != kPatchValues) throw Error(ErrorCode::kDimensionMismatch, "patch size");
  const double* p = params.data();
  const MapM w1(p + off_w1_, hidden_, kPatchValues), w2(p + off_w2_, hidden_, hidden_);
  const MapM wd(p + off_wd_, 2, hidden_), we(p + off_we_, dim_, hidden_);
  const MapV b1(p + off_b1_, hidden_), b2(p + off_b2_, hidden_), bd(p + off_bd_, 2),
      be(p + off_be_, dim_);

  Cache c;
  c.input = standardize_patches(input);
  c.z1 = (w1 * c.input).colwise() + b1;
  c.h1 = relu(c.z1);
  c.z2 = (w2 * c.h1).colwise() + b2;
  c.h2 = relu(c.z2);
  c.logits = ((wd * c.h2).colwise() + bd).transpose();
  c.embed = (we * c.h2).colwise() + be;
  c.embed_norm = c.embed.colwise().norm().transpose();
  c.descriptors.resize(input.cols(), dim_);
  for (Eigen::Index i = 0; i < input.cols(); ++i) {
    if (c.embed_norm(i) > 0.0) {
      c.descriptors.row(i) = c.embed.col(i).transpose() / c.embed_norm(i);
    } else {
      c.descriptors.row(i).setZero();
    }
  }
  return c;
}

void ToyEmbedder::backward(const Eigen::VectorXd& params, const Cache& c,
                           const Eigen::MatrixXd& grad_logits,
                           const Eigen::MatrixXd& grad_descriptors, Eigen::VectorXd& grad) const {
  if (grad.size() != total_) grad = Eigen::VectorXd::Zero(total_);
  const double* p = params.data();
  const MapM w2(p + off_w2_, hidden_, hidden_);
  const MapM wd(p + off_wd_, 2, hidden_), we(p + off_we_, dim_, hidden_);
  double* g = grad.data();
  Eigen::Map<Eigen::MatrixXd> gw1(g + off_w1_, hidden_, kPatchValues), gw2(g + off_w2_, hidden_, hidden_);
  Eigen::Map<Eigen::MatrixXd> gwd(g + off_wd_, 2, hidden_), gwe(g + off_we_, dim_, hidden_);
  Eigen::Map<Eigen::VectorXd> gb1(g + off_b1_, hidden_), gb2(g + off_b2_, hidden_),
      gbd(g + off_bd_, 2), gbe(g + off_be_, dim_);

  const Eigen::MatrixXd dlogits = grad_logits.transpose();  // 2 x B
  Eigen::MatrixXd de(dim_, c.input.cols());
  for (Eigen::Index i = 0; i < c.input.cols(); ++i) {
    const double n = c.embed_norm(i);
    if (n > 0.0) {
      const Eigen::VectorXd u = c.embed.col(i) / n;
      const Eigen::VectorXd du = grad_descriptors.row(i).transpose();
      de.col(i) = (du - u * u.dot(du)) / n;
    } else {
      de.col(i).setZero();
    }
  }
  gwd.noalias() += dlogits * c.h2.transpose();
  gbd += dlogits.rowwise().sum();
  gwe.noalias() += de * c.h2.transpose();
  gbe += de.rowwise().sum();
  const Eigen::MatrixXd dz2 = (wd.transpose() * dlogits + we.transpose() * de).cwiseProduct(relu_mask(c.z2));
  gw2.noalias() += dz2 * c.h1.transpose();
  gb2 += dz2.rowwise().sum();
  const Eigen::MatrixXd dz1 = (w2.transpose() * dz2).cwiseProduct(relu_mask(c.z1));
  gw1.noalias() += dz1 * c.input.transpose();
  gb1 += dz1.rowwise().sum();
}

ToyEmbedder::Output ToyEmbedder::forward_patch(const Eigen::VectorXd& params,
                                               const Eigen::VectorXd& patch) const {
  const Cache c = forward(params, patch);
  return {c.logits.row(0).transpose(), c.descriptors.row(0).transpose()};
}

void ToyTrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kConfigError, "learning_rate must be >= 0");
  if (epochs < 1 || batch_detector < 1 || batch_descriptor < 2 || patience < 1) {
    throw Error(ErrorCode::kConfigError, "epochs, batch sizes and patience must be positive");
  }
}

double evaluate_multitask(const ToyEmbedder& net, const Eigen::VectorXd& params,
                          const Eigen::MatrixXd& det_patches,
                          const std::vector<PatchClass>& det_labels,
                          const Eigen::MatrixXd& pair_a, const Eigen::MatrixXd& pair_b,
                          std::size_t chunk, const LossConfig& loss_cfg) {
  double det = 0.0;
  if (det_patches.cols() > 0) {
    const auto c = net.forward(params, det_patches);
    det = bce_detector_loss({c.logits, det_labels}).loss;
  }
  double desc = 0.0;
  if (pair_a.cols() >= 2) {
    const Eigen::MatrixXd da = net.forward(params, pair_a).descriptors;
    const Eigen::MatrixXd db = net.forward(params, pair_b).descriptors;
    for (const auto& [b, e] : chunk_ranges(pair_a.cols(), chunk)) {
      DescriptorBatch batch{da.middleRows(b, e - b), db.middleRows(b, e - b)};
      desc += quadruplet_loss(batch, hard_negative_mining(batch), loss_cfg.margin).loss *
              static_cast<double>(e - b);
    }
    desc /= static_cast<double>(pair_a.cols());
  }
  return loss_cfg.lambda_det * det + loss_cfg.lambda_desc * desc;
}

ToyTrainResult toy_train(const ToyDataset& data, const ToyTrainConfig& cfg,
                         const LossConfig& loss_cfg) {
  cfg.validate();
  loss_cfg.validate();
  if (data.detector_patches.cols() == 0 || data.pair_a.cols() < 2) {
    throw Error(ErrorCode::kEmptyDataset,
                "training needs detector patches and at least two positive pairs");
  }
  if (data.pair_a.cols() != data.pair_b.cols() ||
      static_cast<std::size_t>(data.detector_patches.cols()) != data.detector_labels.size() ||
      data.detector_labels.size() != data.detector_modalities.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "inconsistent toy dataset");
  }

  StratifiedPool pool;
  for (std::size_t i = 0; i < data.detector_labels.size(); ++i) {
    pool[{data.detector_labels[i], data.detector_modalities[i]}].push_back(i);
  }

  const ToyEmbedder net(cfg.hidden, cfg.descriptor_dim);
  Eigen::VectorXd params = net.init_params(cfg.seed);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad(params.size());
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const bool has_val = data.val_detector_patches.cols() > 0 || data.val_pair_a.cols() >= 2;
  ToyTrainResult result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(data.pair_a.cols()));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& [b, e] : chunk_ranges(static_cast<Eigen::Index>(order.size()), cfg.batch_descriptor)) {
      const std::vector<std::size_t> pair_ids(order.begin() + b, order.begin() + e);
      const auto det_ids = balanced_batch_sampler(pool, cfg.batch_detector, rng());
      std::vector<PatchClass> det_labels;
      det_labels.reserve(det_ids.size());
      for (auto id : det_ids) det_labels.push_back(data.detector_labels[id]);

      const auto cd = net.forward(params, gather_columns(data.detector_patches, det_ids));
      const auto ca = net.forward(params, gather_columns(data.pair_a, pair_ids));
      const auto cb = net.forward(params, gather_columns(data.pair_b, pair_ids));
      const MultitaskResult loss =
          multitask_loss({cd.logits, det_labels}, {ca.descriptors, cb.descriptors}, loss_cfg);

      grad.setZero();
      net.backward(params, cd, loss.grad_logits,
                   Eigen::MatrixXd::Zero(cd.logits.rows(), net.descriptor_dim()), grad);
      net.backward(params, ca, Eigen::MatrixXd::Zero(ca.logits.rows(), 2), loss.grad_anchors, grad);
      net.backward(params, cb, Eigen::MatrixXd::Zero(cb.logits.rows(), 2), loss.grad_positives, grad);

      ++step;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      params.array() -= cfg.learning_rate * (m.array() / bc1) /
                        ((v.array() / bc2).sqrt() + cfg.epsilon);
    }

    EpochLoss entry;
    entry.epoch = epoch;
    entry.train_loss = evaluate_multitask(net, params, data.detector_patches, data.detector_labels,
                                          data.pair_a, data.pair_b, cfg.batch_descriptor, loss_cfg);
    entry.val_loss = has_val ? evaluate_multitask(net, params, data.val_detector_patches,
                                                  data.val_detector_labels, data.val_pair_a,
                                                  data.val_pair_b, cfg.batch_descriptor, loss_cfg)
                             : entry.train_loss;
    result.curve.push_back(entry);
    if (entry.val_loss < best_val) {
      best_val = entry.val_loss;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::string loss_curve_csv(const std::vector<EpochLoss>& curve) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[128];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
    out += buf;
  }
  return out;
}

namespace {
constexpr char kParamsMagic[4] = {'T', 'O', 'Y', 'P'};
constexpr std::uint8_t kParamsVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_u64(const std::vector<std::uint8_t>& b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}
}  // namespace

void save_toy_params(const ToyEmbedder& net, const Eigen::VectorXd& params,
                     const std::string& path) {
  if (params.size() != net.parameter_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector does not fit the network");
  }
  std::vector<std::uint8_t> bytes(std::begin(kParamsMagic), std::end(kParamsMagic));
  bytes.push_back(kParamsVersion);
  put_u64(bytes, static_cast<std::uint64_t>(net.hidden()));
  put_u64(bytes, static_cast<std::uint64_t>(net.descriptor_dim()));
  put_u64(bytes, static_cast<std::uint64_t>(params.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) put_u64(bytes, std::bit_cast<std::uint64_t>(params(i)));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

Eigen::VectorXd load_toy_params(const std::string& path, int* hidden, int* descriptor_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  const std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 5 + 3 * 8;
  if (b.size() < kHeader || std::memcmp(b.data(), kParamsMagic, 4) != 0 || b[4] != kParamsVersion) {
    throw Error(ErrorCode::kFormatError, path + " is not a toy parameter file");
  }
  const auto h = static_cast<int>(get_u64(b, 5));
  const auto d = static_cast<int>(get_u64(b, 13));
  const auto n = get_u64(b, 21);
  const ToyEmbedder net(h, d);
  if (n != static_cast<std::uint64_t>(net.parameter_count()) || b.size() != kHeader + 8 * n) {
    throw Error(ErrorCode::kFormatError, "parameter payload does not match header");
  }
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) p(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(get_u64(b, kHeader + 8 * i));
  if (hidden) *hidden = h;
  if (descriptor_dim) *descriptor_dim = d;
  return p;
}

}  // namespace retinareg
