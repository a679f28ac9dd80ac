#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "retinareg/dataset.hpp"
#include "retinareg/error.hpp"
#include "retinareg/features.hpp"
#include "retinareg/matching.hpp"
#include "retinareg/metrics.hpp"
#include "retinareg/synth.hpp"
#include "retinareg/toy_embedder.hpp"

namespace retinareg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 2,
  kExitConfig = 3,
  kExitProcessing = 4,
  kExitTooFewMatches = 5,
  kExitRansacFailed = 6,
};

/// Exit code for a library error.
int exit_code_for(ErrorCode code);

enum class Backend { kReference, kFile };

struct PipelineConfig {
  std::size_t n_max = 4000;
  double nms_radius = 4.0;
  double min_confidence = 0.0;
  double ransac_threshold = 5.0;
  std::size_t ransac_max_iterations = 5000;
  double ransac_confidence = 0.9999;
  Backend backend = Backend::kReference;
  int descriptor_dim = 128;
  EvalThresholds thresholds;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  RegistrationConfig registration() const;
  ReferenceExtractorConfig extractor() const;
};

/// Strict JSON parsing: unknown keys and wrong types are ConfigError.
/// Missing keys keep their defaults.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string pipeline_config_json(const PipelineConfig& cfg);

/// Style cycle: pair i uses styles[i % n] for A and styles[(i + 1) % n] for B.
/// Without one, every pair uses synth.side_a and synth.side_b.
struct SynthDatasetConfig {
  SynthConfig synth;
  std::vector<SideStyle> style_cycle;
};

SynthDatasetConfig parse_synth_config(const std::string& json_text);
SynthDatasetConfig load_synth_config(const std::string& path);
std::string synth_config_json(const SynthDatasetConfig& cfg);

struct TrainConfig {
  ToyTrainConfig train;
  LossConfig loss;
  double val_fraction = 0.2;
};

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_json(const TrainConfig& cfg);

/// One entry of a dataset manifest; paths are resolved against the
/// manifest's directory.
struct ManifestPair {
  std::string id;
  std::string image_a;
  std::string image_b;
  std::string annotations_a;
  std::string annotations_b;
  std::string features_a;  // optional, used by the file backend
  std::string features_b;
  std::string h_gt;        // optional; else derived from control points
};

/// Throws SchemaError for malformed manifests and for an empty pair list.
std::vector<ManifestPair> load_manifest(const std::string& path);

/// Detector and descriptor pools of every annotated image in a manifest.
TrainingPools load_dataset_pools(const std::string& manifest_path, std::uint64_t seed);

struct ExtractArgs {
  std::string image;
  Modality modality = Modality::kCF;
  std::optional<Backend> backend;
  std::optional<std::string> config;
  std::string out;
};

struct RegisterArgs {
  std::string input_a;  // PNG image or DFMP feature map
  std::string input_b;
  Modality modality_a = Modality::kCF;
  Modality modality_b = Modality::kCF;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_max;
  std::optional<Backend> backend;
  std::optional<std::string> overlay;
  std::string out;  // prefix
};

struct EvaluateArgs {
  std::string manifest;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_max;
  std::optional<Backend> backend;
  std::string out;  // prefix
};

struct SynthArgs {
  std::optional<std::string> config;
  std::size_t count = 10;
  std::optional<std::uint64_t> seed;
  std::string out;  // directory
};

struct TrainToyArgs {
  std::string dataset;  // manifest path or directory holding manifest.json
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::string out;  // prefix
};

// Each command reports failures on `err` and returns an exit code.
int cmd_extract(const ExtractArgs& args, std::ostream& err);
int cmd_register(const RegisterArgs& args, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& err);
int cmd_train_toy(const TrainToyArgs& args, std::ostream& err);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace retinareg::cli
