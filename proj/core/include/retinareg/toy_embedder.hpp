#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "retinareg/image.hpp"
#include "retinareg/losses.hpp"

namespace retinareg {

inline constexpr int kPatchSize = 32;
inline constexpr int kPatchValues = kPatchSize * kPatchSize * 3;

/// Two-layer MLP with a detector head (2 logits) and a descriptor head
/// (L2-normalized D-vector). All parameters live in one flat vector so the
/// optimizer and gradient checks can treat them uniformly.
class ToyEmbedder {
 public:
  explicit ToyEmbedder(int hidden = 64, int descriptor_dim = 32);

  int hidden() const { return hidden_; }
  int descriptor_dim() const { return dim_; }
  Eigen::Index parameter_count() const { return total_; }

  /// He-style Gaussian initialisation, seeded.
  Eigen::VectorXd init_params(std::uint64_t seed) const;

  struct Cache {
    Eigen::MatrixXd input;  // kPatchValues x B, each patch standardized
    Eigen::MatrixXd z1, h1, z2, h2;
    Eigen::MatrixXd embed;  // D x B, before normalization
    Eigen::VectorXd embed_norm;
    Eigen::MatrixXd logits;       // B x 2
    Eigen::MatrixXd descriptors;  // B x D
  };

  /// Patches are the columns of `input`; each is standardized to zero mean
  /// and unit variance before the first layer.
  Cache forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& input) const;

  /// Accumulates into `grad` the parameter gradient given upstream
  /// gradients for the logits (B x 2) and descriptors (B x D).
  void backward(const Eigen::VectorXd& params, const Cache& cache,
                const Eigen::MatrixXd& grad_logits, const Eigen::MatrixXd& grad_descriptors,
                Eigen::VectorXd& grad) const;

  struct Output {
    Eigen::Vector2d logits;
    Eigen::VectorXd descriptor;
  };
  /// Single patch, values in (y, x, channel) order.
  Output forward_patch(const Eigen::VectorXd& params, const Eigen::VectorXd& patch) const;

 private:
  int hidden_;
  int dim_;
  Eigen::Index off_w1_, off_b1_, off_w2_, off_b2_, off_wd_, off_bd_, off_we_, off_be_, total_;
};

struct ToyTrainConfig {
  double learning_rate = 1e-4;
  int epochs = 20;
  std::size_t batch_detector = 576;
  std::size_t batch_descriptor = 288;
  int patience = 5;
  int hidden = 64;
  int descriptor_dim = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Patch tensors for training and validation; each column is one flattened
/// 32x32x3 patch.
struct ToyDataset {
  Eigen::MatrixXd detector_patches;
  std::vector<PatchClass> detector_labels;
  std::vector<Modality> detector_modalities;
  Eigen::MatrixXd pair_a;
  Eigen::MatrixXd pair_b;

  Eigen::MatrixXd val_detector_patches;
  std::vector<PatchClass> val_detector_labels;
  Eigen::MatrixXd val_pair_a;
  Eigen::MatrixXd val_pair_b;
};

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct ToyTrainResult {
  Eigen::VectorXd params;  // parameters at best_epoch
  int best_epoch = 0;
  std::vector<EpochLoss> curve;
};

/// Multitask loss of `params` over a whole split. Descriptor pairs are
/// evaluated in consecutive chunks of `chunk` pairs (mining inside each).
double evaluate_multitask(const ToyEmbedder& net, const Eigen::VectorXd& params,
                          const Eigen::MatrixXd& det_patches,
                          const std::vector<PatchClass>& det_labels,
                          const Eigen::MatrixXd& pair_a, const Eigen::MatrixXd& pair_b,
                          std::size_t chunk, const LossConfig& loss_cfg);

/// Adam on the multitask loss with balanced detector batches and early
/// stopping on validation loss. Loss-curve entries are full-split losses
/// measured after each epoch. Throws EmptyDataset.
ToyTrainResult toy_train(const ToyDataset& data, const ToyTrainConfig& cfg,
                         const LossConfig& loss_cfg);

/// "epoch,train_loss,val_loss" with 9 significant digits.
std::string loss_curve_csv(const std::vector<EpochLoss>& curve);

void save_toy_params(const ToyEmbedder& net, const Eigen::VectorXd& params,
                     const std::string& path);
Eigen::VectorXd load_toy_params(const std::string& path, int* hidden = nullptr,
                                int* descriptor_dim = nullptr);

}  // namespace retinareg
