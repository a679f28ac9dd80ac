#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "retinareg/error.hpp"
#include "retinareg_cli/cli.hpp"

namespace retinareg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  return in.gcount() == 4 && std::equal(magic.begin(), magic.end(), kFeatureMapMagic);
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + parent.string());
}

PipelineConfig resolve_config(const std::optional<std::string>& path, const std::optional<std::uint64_t>& seed,
                              const std::optional<std::size_t>& n_max, const std::optional<Backend>& backend) {
  PipelineConfig cfg = path ? load_pipeline_config(*path) : PipelineConfig{};
  if (seed) cfg.seed = *seed;
  if (n_max) cfg.n_max = *n_max;
  if (backend) cfg.backend = *backend;
  cfg.validate();
  return cfg;
}

struct LoadedInput {
  DenseFeatureMap features;
  std::optional<ImageBuffer> image;  // raw input, when an image was given
};

LoadedInput load_input(const std::string& path, Modality modality, const PipelineConfig& cfg) {
  LoadedInput in;
  if (is_feature_file(path)) {
    in.features = load_feature_map(path);
    return in;
  }
  if (cfg.backend == Backend::kFile) {
    throw Error(ErrorCode::kConfigError, path + " is not a feature map but backend is 'file'");
  }
  in.image = read_png(path);
  in.features = reference_extract(preprocess_image(*in.image, modality), cfg.extractor());
  return in;
}

double sample_bilinear(const ImageBuffer& gray, double x, double y) {
  if (x < 0 || y < 0 || x > gray.width() - 1 || y > gray.height() - 1) return 0.0;
  const int x0 = std::min(static_cast<int>(x), gray.width() - 2 < 0 ? 0 : gray.width() - 2);
  const int y0 = std::min(static_cast<int>(y), gray.height() - 2 < 0 ? 0 : gray.height() - 2);
  const int x1 = std::min(x0 + 1, gray.width() - 1), y1 = std::min(y0 + 1, gray.height() - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * gray.at(x0, y0) + fx * gray.at(x1, y0)) +
         fy * ((1 - fx) * gray.at(x0, y1) + fx * gray.at(x1, y1));
}

// Checkerboard of A and B warped into A's frame.
ImageBuffer checkerboard_overlay(const ImageBuffer& a, const ImageBuffer& b, const Homography& h_ab) {
  constexpr int kTile = 32;
  const ImageBuffer ga = to_gray(a), gb = to_gray(b);
  ImageBuffer out(ga.width(), ga.height(), 1);
  for (int y = 0; y < ga.height(); ++y) {
    for (int x = 0; x < ga.width(); ++x) {
      if (((x / kTile) + (y / kTile)) % 2 == 0) {
        out.at(x, y) = ga.at(x, y);
        continue;
      }
      double v = 0.0;
      try {
        const Point2 q = h_ab.apply({static_cast<double>(x), static_cast<double>(y)});
        v = sample_bilinear(gb, q.x, q.y);
      } catch (const Error&) {
      }
      out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

ordered_json homography_json(const Homography& h) {
  const auto& m = h.matrix();
  ordered_json rows = ordered_json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

ordered_json registration_json(const RegistrationResult& r, const PipelineConfig& cfg) {
  ordered_json j;
  j["status"] = std::string(to_string(r.status));
  j["seed"] = r.seed;
  j["num_keypoints_a"] = r.keypoints_a.size();
  j["num_keypoints_b"] = r.keypoints_b.size();
  j["num_matches"] = r.matches.size();
  j["num_inliers"] = r.inlier_count();
  j["mir"] = matching_inlier_ratio(r.inlier_count(), r.matches.size());
  j["ransac_iterations"] = r.ransac_iterations;
  j["homography"] = r.homography ? homography_json(*r.homography) : ordered_json(nullptr);
  ordered_json matches = ordered_json::array();
  for (std::size_t i = 0; i < r.matches.size(); ++i) {
    const Match& m = r.matches[i];
    const Point2 pa = r.keypoints_a[m.idx_a].pos, pb = r.keypoints_b[m.idx_b].pos;
    matches.push_back(ordered_json{{"a", m.idx_a},
                                   {"b", m.idx_b},
                                   {"xa", pa.x},
                                   {"ya", pa.y},
                                   {"xb", pb.x},
                                   {"yb", pb.y},
                                   {"distance", m.distance},
                                   {"inlier", i < r.inlier_mask.size() && r.inlier_mask[i]}});
  }
  j["matches"] = std::move(matches);
  j["config"] = ordered_json::parse(pipeline_config_json(cfg));
  return j;
}

int status_exit(RegistrationStatus s) {
  switch (s) {
    case RegistrationStatus::kOk:
      return kExitOk;
    case RegistrationStatus::kTooFewMatches:
      return kExitTooFewMatches;
    case RegistrationStatus::kRansacFailed:
      return kExitRansacFailed;
  }
  return kExitProcessing;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitProcessing;
  }
}

std::string resolve(const fs::path& base, const std::string& rel) {
  if (rel.empty()) return rel;
  const fs::path p(rel);
  return p.is_absolute() ? p.string() : (base / p).string();
}

std::string manifest_path_of(const std::string& dataset) {
  std::error_code ec;
  if (fs::is_directory(dataset, ec)) return (fs::path(dataset) / "manifest.json").string();
  return dataset;
}

struct LoadedPair {
  AnnotationSet ann_a, ann_b;
};

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError:
    case ErrorCode::kFormatError:
      return kExitIo;
    case ErrorCode::kConfigError:
    case ErrorCode::kSchemaError:
    case ErrorCode::kBoundsError:
    case ErrorCode::kMissingAnnotation:
    case ErrorCode::kMissingLink:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kEmptyStratum:
    case ErrorCode::kIndivisibleBatch:
    case ErrorCode::kInvalidArgument:
      return kExitConfig;
    default:
      return kExitProcessing;
  }
}

std::vector<ManifestPair> load_manifest(const std::string& path) {
  const std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || !j.contains("pairs") || !j.at("pairs").is_array()) {
    throw Error(ErrorCode::kSchemaError, "manifest needs a 'pairs' array");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "pairs" && key != "config") throw Error(ErrorCode::kSchemaError, "unknown manifest key '" + key + "'");
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestPair> pairs;
  for (const auto& e : j.at("pairs")) {
    if (!e.is_object()) throw Error(ErrorCode::kSchemaError, "manifest pairs must be objects");
    ManifestPair p;
    const auto field = [&](const char* key, std::string& out, bool required) {
      if (!e.contains(key)) {
        if (required) throw Error(ErrorCode::kSchemaError, std::string("manifest pair lacks '") + key + "'");
        return;
      }
      if (!e.at(key).is_string()) throw Error(ErrorCode::kSchemaError, std::string(key) + " must be a string");
      out = e.at(key).get<std::string>();
    };
    for (const auto& [key, value] : e.items()) {
      static const std::array<std::string, 8> known{"id", "image_a", "image_b", "annotations_a",
                                                    "annotations_b", "features_a", "features_b", "h_gt"};
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw Error(ErrorCode::kSchemaError, "unknown manifest pair key '" + key + "'");
      }
    }
    field("id", p.id, true);
    field("annotations_a", p.annotations_a, true);
    field("annotations_b", p.annotations_b, true);
    field("image_a", p.image_a, false);
    field("image_b", p.image_b, false);
    field("features_a", p.features_a, false);
    field("features_b", p.features_b, false);
    field("h_gt", p.h_gt, false);
    const bool has_images = !p.image_a.empty() && !p.image_b.empty();
    const bool has_features = !p.features_a.empty() && !p.features_b.empty();
    if (!has_images && !has_features) {
      throw Error(ErrorCode::kSchemaError, "pair " + p.id + " needs images or feature maps");
    }
    for (std::string* s : {&p.image_a, &p.image_b, &p.annotations_a, &p.annotations_b, &p.features_a,
                           &p.features_b, &p.h_gt}) {
      *s = resolve(base, *s);
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw Error(ErrorCode::kSchemaError, "manifest lists no pairs");
  return pairs;
}

TrainingPools load_dataset_pools(const std::string& manifest_path, std::uint64_t seed) {
  const auto pairs = load_manifest(manifest_path);
  std::vector<AnnotationSet> annotations;
  std::map<std::string, ImageBuffer> images;
  const auto add = [&](const std::string& ann_path, const std::string& image_path) {
    AnnotationSet a = load_annotations(ann_path);
    if (images.contains(a.image)) return;
    if (image_path.empty()) throw Error(ErrorCode::kSchemaError, "training needs images for " + a.image);
    images.emplace(a.image, preprocess_image(read_png(image_path), a.modality));
    annotations.push_back(std::move(a));
  };
  for (const auto& p : pairs) {
    add(p.annotations_a, p.image_a);
    add(p.annotations_b, p.image_b);
  }
  return build_training_pools(annotations, images, seed);
}

// ---------------------------------------------------------------------------

int cmd_extract(const ExtractArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    PipelineConfig cfg = args.config ? load_pipeline_config(*args.config) : PipelineConfig{};
    if (args.backend) cfg.backend = *args.backend;
    cfg.validate();
    ensure_parent(args.out);
    if (cfg.backend == Backend::kFile) {
      (void)load_feature_map(args.image);
      write_text(args.out, read_text(args.image));
      return static_cast<int>(kExitOk);
    }
    const ImageBuffer img = read_png(args.image);
    const DenseFeatureMap fm = reference_extract(preprocess_image(img, args.modality), cfg.extractor());
    save_feature_map(fm, args.out);
    return static_cast<int>(kExitOk);
  });
}

int cmd_register(const RegisterArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    const PipelineConfig cfg = resolve_config(args.config, args.seed, args.n_max, args.backend);
    const LoadedInput a = load_input(args.input_a, args.modality_a, cfg);
    const LoadedInput b = load_input(args.input_b, args.modality_b, cfg);
    if (args.overlay && (!a.image || !b.image)) {
      throw Error(ErrorCode::kConfigError, "--overlay needs image inputs");
    }
    const RegistrationResult r = register_pair(a.features, b.features, cfg.registration());

    ensure_parent(args.out);
    write_text(args.out + ".json", registration_json(r, cfg).dump(2) + "\n");
    if (r.homography) {
      write_homography(*r.homography, args.out + ".h.txt");
      if (args.overlay) {
        ensure_parent(*args.overlay);
        write_png(checkerboard_overlay(*a.image, *b.image, *r.homography), *args.overlay);
      }
    } else {
      err << "registration failed: " << to_string(r.status) << '\n';
    }
    return status_exit(r.status);
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    const PipelineConfig cfg = resolve_config(args.config, args.seed, args.n_max, args.backend);
    const auto pairs = load_manifest(args.manifest);

    std::vector<PairEvaluationInput> inputs;
    inputs.reserve(pairs.size());
    for (const auto& p : pairs) {
      const AnnotationSet ann_a = load_annotations(p.annotations_a);
      const AnnotationSet ann_b = load_annotations(p.annotations_b);
      if (ann_a.control_points.size() != 6 || ann_b.control_points.size() != 6) {
        throw Error(ErrorCode::kMissingAnnotation, "pair " + p.id + " needs 6 control points per image");
      }
      const CorrespondenceSet control = control_point_pairs(ann_a, ann_b);
      const Homography h_gt = p.h_gt.empty() ? ground_truth_homography(control) : read_homography(p.h_gt);

      const bool use_files = cfg.backend == Backend::kFile;
      if (use_files && (p.features_a.empty() || p.features_b.empty())) {
        throw Error(ErrorCode::kSchemaError, "pair " + p.id + " lacks feature maps for the file backend");
      }
      if (!use_files && (p.image_a.empty() || p.image_b.empty())) {
        throw Error(ErrorCode::kSchemaError, "pair " + p.id + " lacks images");
      }
      const LoadedInput a = load_input(use_files ? p.features_a : p.image_a, ann_a.modality, cfg);
      const LoadedInput b = load_input(use_files ? p.features_b : p.image_b, ann_b.modality, cfg);
      const RegistrationResult r = register_pair(a.features, b.features, cfg.registration());
      err << p.id << ": " << to_string(r.status) << '\n';

      const std::string group = std::string(to_string(ann_a.modality)) + "-" + std::string(to_string(ann_b.modality));
      inputs.push_back(make_evaluation_input(p.id, group, r,
                                             {static_cast<double>(a.features.source_w),
                                              static_cast<double>(a.features.source_h)},
                                             {static_cast<double>(b.features.source_w),
                                              static_cast<double>(b.features.source_h)},
                                             control, h_gt));
    }
    const EvalReport report = evaluate_dataset(inputs, cfg.thresholds);

    ordered_json j;
    j["report"] = ordered_json::parse(report.to_json());
    j["config"] = ordered_json::parse(pipeline_config_json(cfg));
    ensure_parent(args.out);
    write_text(args.out + ".json", j.dump(2) + "\n");
    write_text(args.out + ".txt", report.to_table());
    return static_cast<int>(kExitOk);
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    SynthDatasetConfig cfg = args.config ? load_synth_config(*args.config) : SynthDatasetConfig{};
    if (args.seed) cfg.synth.seed = *args.seed;
    cfg.synth.validate();
    if (args.count == 0) throw Error(ErrorCode::kConfigError, "count must be positive");

    std::error_code ec;
    fs::create_directories(args.out, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + args.out);
    const fs::path dir(args.out);

    std::mt19937_64 seeds(cfg.synth.seed);
    ordered_json manifest_pairs = ordered_json::array();
    for (std::size_t i = 0; i < args.count; ++i) {
      SynthConfig pc = cfg.synth;
      pc.seed = seeds();
      if (!cfg.style_cycle.empty()) {
        pc.side_a = cfg.style_cycle[i % cfg.style_cycle.size()];
        pc.side_b = cfg.style_cycle[(i + 1) % cfg.style_cycle.size()];
      }
      const SynthPair pair = synth_generate(pc);

      char stem[32];
      std::snprintf(stem, sizeof stem, "pair_%03zu", i);
      const std::string id(stem);
      const std::string img_a = id + "_a.png", img_b = id + "_b.png";
      const std::string ann_a_name = id + "_a.json", ann_b_name = id + "_b.json";
      const std::string h_name = id + ".h.txt";

      AnnotationSet a, b;
      a.image = img_a;
      b.image = img_b;
      a.modality = pc.side_a.modality;
      b.modality = pc.side_b.modality;
      a.acquisition = id + "/a";
      b.acquisition = id + "/b";
      a.split = b.split = "test";
      a.width = b.width = pc.width;
      a.height = b.height = pc.height;
      PairLink link_a{img_b, {}}, link_b{img_a, {}};
      for (std::size_t k = 0; k < pair.keypoints.size(); ++k) {
        a.keypoints.push_back({pair.keypoints[k].source, PatchClass::kVessel});
        b.keypoints.push_back({pair.keypoints[k].target, PatchClass::kVessel});
        link_a.index_map.emplace_back(k, k);
        link_b.index_map.emplace_back(k, k);
      }
      a.links.push_back(std::move(link_a));
      b.links.push_back(std::move(link_b));
      for (const auto& c : pair.control_points) {
        a.control_points.push_back(c.source);
        b.control_points.push_back(c.target);
      }

      write_png(pair.image_a, (dir / img_a).string());
      write_png(pair.image_b, (dir / img_b).string());
      save_annotations(a, (dir / ann_a_name).string());
      save_annotations(b, (dir / ann_b_name).string());
      write_homography(pair.h_gt, (dir / h_name).string());
      manifest_pairs.push_back(ordered_json{{"id", id},
                                            {"image_a", img_a},
                                            {"image_b", img_b},
                                            {"annotations_a", ann_a_name},
                                            {"annotations_b", ann_b_name},
                                            {"h_gt", h_name}});
    }
    ordered_json manifest;
    manifest["pairs"] = std::move(manifest_pairs);
    manifest["config"] = ordered_json::parse(synth_config_json(cfg));
    write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    return static_cast<int>(kExitOk);
  });
}

int cmd_train_toy(const TrainToyArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig cfg = args.config ? load_train_config(*args.config) : TrainConfig{};
    if (args.seed) cfg.train.seed = *args.seed;
    if (args.learning_rate) cfg.train.learning_rate = *args.learning_rate;
    cfg.train.validate();

    const TrainingPools pools = load_dataset_pools(manifest_path_of(args.dataset), cfg.train.seed);
    for (const auto& w : pools.warnings) err << "warning: " << w << '\n';
    const ToyDataset data = to_toy_dataset(pools, cfg.val_fraction, cfg.train.seed);
    const ToyTrainResult result = toy_train(data, cfg.train, cfg.loss);

    ensure_parent(args.out);
    save_toy_params(ToyEmbedder(cfg.train.hidden, cfg.train.descriptor_dim), result.params, args.out + ".params");
    write_text(args.out + ".csv", loss_curve_csv(result.curve));
    ordered_json j;
    j["best_epoch"] = result.best_epoch;
    j["epochs_run"] = result.curve.size();
    j["detector_patches"] = data.detector_patches.cols();
    j["descriptor_pairs"] = data.pair_a.cols();
    j["val_detector_patches"] = data.val_detector_patches.cols();
    j["val_descriptor_pairs"] = data.val_pair_a.cols();
    j["warnings"] = pools.warnings;
    j["config"] = ordered_json::parse(train_config_json(cfg));
    write_text(args.out + ".json", j.dump(2) + "\n");
    return static_cast<int>(kExitOk);
  });
}

}  // namespace retinareg::cli
