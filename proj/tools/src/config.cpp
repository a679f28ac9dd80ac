#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "retinareg/error.hpp"
#include "retinareg_cli/cli.hpp"

namespace retinareg::cli {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfigError, msg); }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_object(const std::string& text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(what + ": " + e.what());
  }
  if (!j.is_object()) config_error(what + " must be a JSON object");
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) config_error(std::string(key) + " must be a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) config_error(std::string(key) + " must be an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
      config_error(std::string(key) + " must be non-negative");
    }
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) config_error(std::string(key) + " must be a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) config_error(std::string(key) + " must be a string");
    out = v.get<T>();
  }
}

const json* sub_object(const json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) config_error(std::string(key) + " must be an object");
  return &j.at(key);
}

Modality read_modality(const json& j, const char* key, Modality fallback) {
  std::string name(to_string(fallback));
  read(j, key, name);
  const auto m = parse_modality(name);
  if (!m) config_error("unknown modality '" + name + "'");
  return *m;
}

Backend parse_backend(const std::string& name) {
  if (name == "reference") return Backend::kReference;
  if (name == "file") return Backend::kFile;
  config_error("backend must be 'reference' or 'file'");
}

const char* backend_name(Backend b) { return b == Backend::kReference ? "reference" : "file"; }

SideStyle parse_style(const json& j, SideStyle s, const std::string& where) {
  check_keys(j, {"modality", "invert", "gamma", "blur_sigma", "noise_sigma", "gradient_amplitude", "noise_seed"},
             where);
  s.modality = read_modality(j, "modality", s.modality);
  read(j, "invert", s.invert);
  read(j, "gamma", s.gamma);
  read(j, "blur_sigma", s.blur_sigma);
  read(j, "noise_sigma", s.noise_sigma);
  read(j, "gradient_amplitude", s.gradient_amplitude);
  if (j.contains("noise_seed") && !j.at("noise_seed").is_null()) {
    std::uint64_t seed = 0;
    read(j, "noise_seed", seed);
    s.noise_seed = seed;
  }
  return s;
}

ordered_json style_json(const SideStyle& s) {
  ordered_json j;
  j["modality"] = std::string(to_string(s.modality));
  j["invert"] = s.invert;
  j["gamma"] = s.gamma;
  j["blur_sigma"] = s.blur_sigma;
  j["noise_sigma"] = s.noise_sigma;
  j["gradient_amplitude"] = s.gradient_amplitude;
  j["noise_seed"] = s.noise_seed ? ordered_json(*s.noise_seed) : ordered_json(nullptr);
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  if (n_max == 0) config_error("n_max must be positive");
  if (!(nms_radius >= 1.0)) config_error("nms_radius must be >= 1");
  if (!std::isfinite(min_confidence)) config_error("min_confidence must be finite");
  if (descriptor_dim <= 0) config_error("descriptor_dim must be positive");
  if (!(thresholds.sr_me > 0 && thresholds.sr_mae > 0 && thresholds.rep > 0 && thresholds.mir > 0)) {
    config_error("thresholds must be positive");
  }
  registration().ransac.validate();
}

RegistrationConfig PipelineConfig::registration() const {
  RegistrationConfig r;
  r.n_max = n_max;
  r.nms_radius = nms_radius;
  r.min_confidence = min_confidence;
  r.ransac.reproj_threshold = ransac_threshold;
  r.ransac.max_iterations = ransac_max_iterations;
  r.ransac.confidence = ransac_confidence;
  r.ransac.seed = seed;
  return r;
}

ReferenceExtractorConfig PipelineConfig::extractor() const {
  ReferenceExtractorConfig e;
  e.descriptor_dim = descriptor_dim;
  return e;
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  const json j = parse_object(json_text, "pipeline config");
  check_keys(j, {"n_max", "nms_radius", "min_confidence", "ransac", "backend", "descriptor_dim", "thresholds", "seed"},
             "pipeline config");
  PipelineConfig c;
  read(j, "n_max", c.n_max);
  read(j, "nms_radius", c.nms_radius);
  read(j, "min_confidence", c.min_confidence);
  if (const json* r = sub_object(j, "ransac")) {
    check_keys(*r, {"threshold", "max_iterations", "confidence"}, "ransac");
    read(*r, "threshold", c.ransac_threshold);
    read(*r, "max_iterations", c.ransac_max_iterations);
    read(*r, "confidence", c.ransac_confidence);
  }
  if (j.contains("backend")) {
    std::string name;
    read(j, "backend", name);
    c.backend = parse_backend(name);
  }
  read(j, "descriptor_dim", c.descriptor_dim);
  if (const json* t = sub_object(j, "thresholds")) {
    check_keys(*t, {"sr_me", "sr_mae", "rep", "mir"}, "thresholds");
    read(*t, "sr_me", c.thresholds.sr_me);
    read(*t, "sr_mae", c.thresholds.sr_mae);
    read(*t, "rep", c.thresholds.rep);
    read(*t, "mir", c.thresholds.mir);
  }
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(read_text(path));
}

std::string pipeline_config_json(const PipelineConfig& c) {
  ordered_json j;
  j["n_max"] = c.n_max;
  j["nms_radius"] = c.nms_radius;
  j["min_confidence"] = c.min_confidence;
  j["ransac"] = {{"threshold", c.ransac_threshold},
                 {"max_iterations", c.ransac_max_iterations},
                 {"confidence", c.ransac_confidence}};
  j["backend"] = backend_name(c.backend);
  j["descriptor_dim"] = c.descriptor_dim;
  j["thresholds"] = {{"sr_me", c.thresholds.sr_me},
                     {"sr_mae", c.thresholds.sr_mae},
                     {"rep", c.thresholds.rep},
                     {"mir", c.thresholds.mir}};
  j["seed"] = c.seed;
  return j.dump(2);
}

// ---------------------------------------------------------------------------

SynthDatasetConfig parse_synth_config(const std::string& json_text) {
  const json j = parse_object(json_text, "synth config");
  check_keys(j,
             {"width", "height", "roots", "branch_depth", "segment_length_min", "segment_length_max",
              "vessel_width_min", "vessel_width_max", "branch_angle_min_deg", "branch_angle_max_deg",
              "background", "vessel_contrast", "side_a", "side_b", "style_cycle", "max_rotation_deg",
              "scale_min", "scale_max", "max_translation", "max_perspective", "border_margin", "seed"},
             "synth config");
  SynthDatasetConfig d;
  SynthConfig& c = d.synth;
  read(j, "width", c.width);
  read(j, "height", c.height);
  read(j, "roots", c.roots);
  read(j, "branch_depth", c.branch_depth);
  read(j, "segment_length_min", c.segment_length_min);
  read(j, "segment_length_max", c.segment_length_max);
  read(j, "vessel_width_min", c.vessel_width_min);
  read(j, "vessel_width_max", c.vessel_width_max);
  read(j, "branch_angle_min_deg", c.branch_angle_min_deg);
  read(j, "branch_angle_max_deg", c.branch_angle_max_deg);
  read(j, "background", c.background);
  read(j, "vessel_contrast", c.vessel_contrast);
  if (const json* s = sub_object(j, "side_a")) c.side_a = parse_style(*s, c.side_a, "side_a");
  if (const json* s = sub_object(j, "side_b")) c.side_b = parse_style(*s, c.side_b, "side_b");
  if (j.contains("style_cycle")) {
    const json& cycle = j.at("style_cycle");
    if (!cycle.is_array() || cycle.size() < 2) config_error("style_cycle must list at least two styles");
    for (const auto& s : cycle) {
      if (!s.is_object()) config_error("style_cycle entries must be objects");
      d.style_cycle.push_back(parse_style(s, SideStyle{}, "style_cycle"));
    }
  }
  read(j, "max_rotation_deg", c.max_rotation_deg);
  read(j, "scale_min", c.scale_min);
  read(j, "scale_max", c.scale_max);
  read(j, "max_translation", c.max_translation);
  read(j, "max_perspective", c.max_perspective);
  read(j, "border_margin", c.border_margin);
  read(j, "seed", c.seed);
  c.validate();
  for (const auto& s : d.style_cycle) {
    SynthConfig probe = c;
    probe.side_a = s;
    probe.validate();
  }
  return d;
}

SynthDatasetConfig load_synth_config(const std::string& path) {
  return parse_synth_config(read_text(path));
}

std::string synth_config_json(const SynthDatasetConfig& d) {
  const SynthConfig& c = d.synth;
  ordered_json j;
  j["width"] = c.width;
  j["height"] = c.height;
  j["roots"] = c.roots;
  j["branch_depth"] = c.branch_depth;
  j["segment_length_min"] = c.segment_length_min;
  j["segment_length_max"] = c.segment_length_max;
  j["vessel_width_min"] = c.vessel_width_min;
  j["vessel_width_max"] = c.vessel_width_max;
  j["branch_angle_min_deg"] = c.branch_angle_min_deg;
  j["branch_angle_max_deg"] = c.branch_angle_max_deg;
  j["background"] = c.background;
  j["vessel_contrast"] = c.vessel_contrast;
  j["side_a"] = style_json(c.side_a);
  j["side_b"] = style_json(c.side_b);
  if (!d.style_cycle.empty()) {
    ordered_json cycle = ordered_json::array();
    for (const auto& s : d.style_cycle) cycle.push_back(style_json(s));
    j["style_cycle"] = cycle;
  }
  j["max_rotation_deg"] = c.max_rotation_deg;
  j["scale_min"] = c.scale_min;
  j["scale_max"] = c.scale_max;
  j["max_translation"] = c.max_translation;
  j["max_perspective"] = c.max_perspective;
  j["border_margin"] = c.border_margin;
  j["seed"] = c.seed;
  return j.dump(2);
}

// ---------------------------------------------------------------------------

TrainConfig parse_train_config(const std::string& json_text) {
  const json j = parse_object(json_text, "train config");
  check_keys(j,
             {"learning_rate", "epochs", "batch_detector", "batch_descriptor", "patience", "hidden",
              "descriptor_dim", "beta1", "beta2", "epsilon", "seed", "margin", "lambda_det", "lambda_desc",
              "val_fraction"},
             "train config");
  TrainConfig c;
  read(j, "learning_rate", c.train.learning_rate);
  read(j, "epochs", c.train.epochs);
  read(j, "batch_detector", c.train.batch_detector);
  read(j, "batch_descriptor", c.train.batch_descriptor);
  read(j, "patience", c.train.patience);
  read(j, "hidden", c.train.hidden);
  read(j, "descriptor_dim", c.train.descriptor_dim);
  read(j, "beta1", c.train.beta1);
  read(j, "beta2", c.train.beta2);
  read(j, "epsilon", c.train.epsilon);
  read(j, "seed", c.train.seed);
  read(j, "margin", c.loss.margin);
  read(j, "lambda_det", c.loss.lambda_det);
  read(j, "lambda_desc", c.loss.lambda_desc);
  read(j, "val_fraction", c.val_fraction);
  c.train.validate();
  c.loss.validate();
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) config_error("val_fraction must lie in [0, 1)");
  return c;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config(read_text(path)); }

std::string train_config_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.train.learning_rate;
  j["epochs"] = c.train.epochs;
  j["batch_detector"] = c.train.batch_detector;
  j["batch_descriptor"] = c.train.batch_descriptor;
  j["patience"] = c.train.patience;
  j["hidden"] = c.train.hidden;
  j["descriptor_dim"] = c.train.descriptor_dim;
  j["beta1"] = c.train.beta1;
  j["beta2"] = c.train.beta2;
  j["epsilon"] = c.train.epsilon;
  j["seed"] = c.train.seed;
  j["margin"] = c.loss.margin;
  j["lambda_det"] = c.loss.lambda_det;
  j["lambda_desc"] = c.loss.lambda_desc;
  j["val_fraction"] = c.val_fraction;
  return j.dump(2);
}

}  // namespace retinareg::cli
