#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "retinareg/dataset.hpp"
#include "retinareg/error.hpp"

namespace retinareg {
namespace {

using nlohmann::json;

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorCode::kSchemaError, msg); }

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) schema(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema(std::string("field '") + key + "' must be finite");
  return d;
}

std::string string_field(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) schema(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Point2 point(const json& j) { return {number(j, "x"), number(j, "y")}; }

void check_bounds(const Point2& p, const AnnotationSet& a, const char* what) {
  const bool neg = p.x < 0.0 || p.y < 0.0;
  const bool over = (a.width && p.x > *a.width - 1.0) || (a.height && p.y > *a.height - 1.0);
  if (neg || over) {
    throw Error(ErrorCode::kBoundsError, std::string(what) + " (" + std::to_string(p.x) + ", " +
                                             std::to_string(p.y) + ") lies outside the image");
  }
}

}  // namespace

AnnotationSet parse_annotations(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) schema("annotation document must be an object");

  AnnotationSet a;
  a.image = string_field(j, "image");
  const std::string mod = string_field(j, "modality");
  const auto m = parse_modality(mod);
  if (!m) schema("unknown modality '" + mod + "'");
  a.modality = *m;
  a.acquisition = string_field(j, "acquisition");
  if (j.contains("split")) a.split = string_field(j, "split");
  if (j.contains("width")) a.width = static_cast<int>(number(j, "width"));
  if (j.contains("height")) a.height = static_cast<int>(number(j, "height"));

  const json& kps = require(j, "keypoints");
  if (!kps.is_array()) schema("'keypoints' must be an array");
  for (const auto& k : kps) {
    AnnotatedKeypoint kp;
    kp.pos = point(k);
    const std::string cls = string_field(k, "class");
    if (cls == "vessel") {
      kp.cls = PatchClass::kVessel;
    } else if (cls == "background") {
      kp.cls = PatchClass::kBackground;
    } else {
      schema("keypoint class must be 'vessel' or 'background'");
    }
    check_bounds(kp.pos, a, "keypoint");
    a.keypoints.push_back(kp);
  }

  const json& cps = require(j, "control_points");
  if (!cps.is_array()) schema("'control_points' must be an array");
  for (const auto& c : cps) {
    a.control_points.push_back(point(c));
    check_bounds(a.control_points.back(), a, "control point");
  }
  const bool need_six = a.split == "test" || !a.control_points.empty();
  if (need_six && a.control_points.size() != 6) {
    schema("expected 6 control points, got " + std::to_string(a.control_points.size()));
  }

  const json& links = require(j, "links");
  if (!links.is_array()) schema("'links' must be an array");
  for (const auto& l : links) {
    PairLink link;
    link.other = string_field(l, "other");
    const json& im = require(l, "index_map");
    if (!im.is_array()) schema("'index_map' must be an array");
    for (const auto& e : im) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
        schema("index_map entries must be [i, j] with non-negative integers");
      }
      const auto i = e[0].get<std::size_t>();
      if (i >= a.keypoints.size()) schema("index_map refers to keypoint " + std::to_string(i));
      link.index_map.emplace_back(i, e[1].get<std::size_t>());
    }
    a.links.push_back(std::move(link));
  }
  return a;
}

AnnotationSet load_annotations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str());
}

std::string annotations_to_json(const AnnotationSet& a) {
  nlohmann::ordered_json j;
  j["image"] = a.image;
  j["modality"] = std::string(to_string(a.modality));
  j["acquisition"] = a.acquisition;
  if (!a.split.empty()) j["split"] = a.split;
  if (a.width) j["width"] = *a.width;
  if (a.height) j["height"] = *a.height;
  j["keypoints"] = nlohmann::ordered_json::array();
  for (const auto& k : a.keypoints) {
    j["keypoints"].push_back({{"x", k.pos.x},
                              {"y", k.pos.y},
                              {"class", k.cls == PatchClass::kVessel ? "vessel" : "background"}});
  }
  j["control_points"] = nlohmann::ordered_json::array();
  for (const auto& c : a.control_points) j["control_points"].push_back({{"x", c.x}, {"y", c.y}});
  j["links"] = nlohmann::ordered_json::array();
  for (const auto& l : a.links) {
    nlohmann::ordered_json map = nlohmann::ordered_json::array();
    for (const auto& [i, k] : l.index_map) map.push_back({i, k});
    j["links"].push_back({{"other", l.other}, {"index_map", map}});
  }
  return j.dump(2) + "\n";
}

void save_annotations(const AnnotationSet& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out << annotations_to_json(a);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

CorrespondenceSet control_point_pairs(const AnnotationSet& a, const AnnotationSet& b) {
  if (a.control_points.size() != b.control_points.size()) {
    schema("linked images carry different numbers of control points");
  }
  CorrespondenceSet out;
  for (std::size_t i = 0; i < a.control_points.size(); ++i) {
    out.push_back({a.control_points[i], b.control_points[i]});
  }
  return out;
}

}  // namespace retinareg
