// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metric_fixtures.hpp"
#include "oracles.hpp"
#include "retinareg/dataset.hpp"
#include "retinareg/features.hpp"
#include "retinareg/geometry.hpp"
#include "retinareg/keypoints.hpp"
#include "retinareg/losses.hpp"
#include "retinareg/matching.hpp"
#include "retinareg/metrics.hpp"
#include "retinareg/parallel.hpp"
#include "retinareg/synth.hpp"
#include "retinareg/toy_embedder.hpp"
#include "retinareg_cli/cli.hpp"

using namespace retinareg;
namespace fs = std::filesystem;
namespace rt = retinareg::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "retinareg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "  [retinareg %s exited %d]\n%s", args[1].c_str(), code, err.str().c_str());
  return code;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd unflat(const Eigen::VectorXd& v, Eigen::Index offset, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data() + offset, r, c);
}

// ---------------------------------------------------------------------------

Outcome dlt_exactness() {
  std::mt19937_64 rng(2024);
  std::vector<std::pair<Homography, CorrespondenceSet>> cases;
  for (int i = 0; i < 1000; ++i) {
    const Homography h = rt::random_bounded_homography(rng);
    CorrespondenceSet c;
    for (const Point2 p : {Point2{40, 30}, Point2{470, 60}, Point2{450, 480}, Point2{20, 440}}) {
      const Point2 q{p.x + rt::uniform(rng, -15, 15), p.y + rt::uniform(rng, -15, 15)};
      c.push_back({q, h.apply(q)});
    }
    cases.emplace_back(h, c);
  }
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& [h, c] : cases) worst = std::max(worst, corner_transfer_error(estimate_homography_dlt(c), h, 512, 512));
  const double t = seconds_since(t0);
  return {worst < 1e-6 && t < 1.0, fmt("1000 homographies, worst corner error %.2e px, %.3f s", worst, t)};
}

Outcome ransac_robustness() {
  const auto t0 = Clock::now();
  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 500);
    std::normal_distribution<double> noise(0.0, 0.5);
    const Homography h = rt::random_bounded_homography(rng);
    CorrespondenceSet pairs;
    for (int i = 0; i < 100; ++i) {
      const Point2 p{rt::uniform(rng, 0, 511), rt::uniform(rng, 0, 511)};
      const Point2 q = h.apply(p);
      pairs.push_back({p, {q.x + noise(rng), q.y + noise(rng)}});
    }
    for (int i = 0; i < 100; ++i)
      pairs.push_back({{rt::uniform(rng, 0, 511), rt::uniform(rng, 0, 511)}, {rt::uniform(rng, 0, 511), rt::uniform(rng, 0, 511)}});
    std::shuffle(pairs.begin(), pairs.end(), rng);
    RansacConfig cfg;
    cfg.reproj_threshold = 5.0;
    cfg.seed = seed;
    const double e = corner_transfer_error(ransac_homography(pairs, cfg).homography, h, 512, 512);
    worst = std::max(worst, e);
    good += e <= 1.0;
  }
  const double t = seconds_since(t0);
  return {good >= 99 && t < 10.0, fmt("%d/100 runs within 1 px (worst %.3f px), %.2f s", good, worst, t)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  double worst_bce = 0, worst_quad = 0, worst_multi = 0, worst_toy = 0;
  int n_bce = 0, n_quad = 0, n_multi = 0, n_toy = 0;

  while (n_bce < 50) {
    const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng() % 16);
    LogitBatch batch{random_matrix(rng, b, 2, 3.0), {}};
    for (Eigen::Index i = 0; i < b; ++i) batch.labels.push_back(rng() % 2 ? PatchClass::kVessel : PatchClass::kBackground);
    const auto f = [&](const Eigen::VectorXd& x) { return bce_detector_loss({unflat(x, 0, b, 2), batch.labels}).loss; };
    worst_bce = std::max(worst_bce, rt::relative_error(flat(bce_detector_loss(batch).grad), rt::numeric_gradient(f, flat(batch.logits))));
    ++n_bce;
  }

  while (n_quad < 50) {
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng() % 9), d = 2 + static_cast<Eigen::Index>(rng() % 7);
    const double m = rt::uniform(rng, 0.2, 1.5);
    const DescriptorBatch batch{random_matrix(rng, b, d), random_matrix(rng, b, d)};
    const auto mined = hard_negative_mining(batch);
    if (!rt::away_from_kinks(batch, mined, m)) continue;
    const auto r = quadruplet_loss(batch, mined, m);
    const auto f = [&](const Eigen::VectorXd& x) {
      return quadruplet_loss({unflat(x, 0, b, d), unflat(x, b * d, b, d)}, mined, m).loss;
    };
    Eigen::VectorXd x(2 * b * d), g(2 * b * d);
    x << flat(batch.anchors), flat(batch.positives);
    g << flat(r.grad_anchors), flat(r.grad_positives);
    worst_quad = std::max(worst_quad, rt::relative_error(g, rt::numeric_gradient(f, x)));
    ++n_quad;
  }

  while (n_multi < 50) {
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng() % 7), d = 2 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::Index bl = 1 + static_cast<Eigen::Index>(rng() % 8);
    const LossConfig cfg{rt::uniform(rng, 0.5, 1.5), rt::uniform(rng, 0.0, 2.0), rt::uniform(rng, 0.0, 2.0)};
    LogitBatch det{random_matrix(rng, bl, 2, 2.0), {}};
    for (Eigen::Index i = 0; i < bl; ++i) det.labels.push_back(rng() % 2 ? PatchClass::kVessel : PatchClass::kBackground);
    const DescriptorBatch desc{random_matrix(rng, b, d), random_matrix(rng, b, d)};
    if (!rt::away_from_kinks(desc, hard_negative_mining(desc), cfg.margin)) continue;
    const auto r = multitask_loss(det, desc, cfg);
    const auto f = [&](const Eigen::VectorXd& x) {
      return multitask_loss({unflat(x, 0, bl, 2), det.labels}, {unflat(x, bl * 2, b, d), unflat(x, bl * 2 + b * d, b, d)}, cfg)
          .loss;
    };
    Eigen::VectorXd x(bl * 2 + 2 * b * d), g(x.size());
    x << flat(det.logits), flat(desc.anchors), flat(desc.positives);
    g << flat(r.grad_logits), flat(r.grad_anchors), flat(r.grad_positives);
    worst_multi = std::max(worst_multi, rt::relative_error(g, rt::numeric_gradient(f, x)));
    ++n_multi;
  }

  // Full network: directional derivatives of a random linear read-out of both
  // heads, at the default width.
  const ToyEmbedder net;
  while (n_toy < 50) {
    const Eigen::VectorXd params = net.init_params(rng());
    Eigen::MatrixXd input = random_matrix(rng, kPatchValues, 3).array().abs().min(1.0);
    const auto c = net.forward(params, input);
    if (std::min(c.z1.cwiseAbs().minCoeff(), c.z2.cwiseAbs().minCoeff()) < 1e-5) continue;
    const Eigen::MatrixXd wl = random_matrix(rng, 3, 2), wd = random_matrix(rng, 3, net.descriptor_dim());
    const auto f = [&](const Eigen::VectorXd& p) {
      const auto cc = net.forward(p, input);
      return (cc.logits.array() * wl.array()).sum() + (cc.descriptors.array() * wd.array()).sum();
    };
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
    net.backward(params, c, wl, wd, grad);
    const Eigen::VectorXd v = random_matrix(rng, params.size(), 1).col(0).normalized();
    const double h = 1e-6;
    const double numeric = (f(params + h * v) - f(params - h * v)) / (2 * h);
    const double analytic = grad.dot(v);
    worst_toy = std::max(worst_toy, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    ++n_toy;
  }
  const double t = seconds_since(t0);
  const double worst = std::max({worst_bce, worst_quad, worst_multi, worst_toy});
  return {worst <= 1e-4 && t < 30.0,
          fmt("50 points each; worst rel. error BCE %.1e, quadruplet %.1e, multitask %.1e, embedder %.1e; %.2f s",
              worst_bce, worst_quad, worst_multi, worst_toy, t)};
}

Outcome mining_oracle() {
  std::mt19937_64 rng(99);
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index b = 2 + t % 63, d = 1 + static_cast<Eigen::Index>(rng() % 32);
    const DescriptorBatch batch{random_matrix(rng, b, d), random_matrix(rng, b, d)};
    const auto m = hard_negative_mining(batch);
    const auto fa = rt::exhaustive_hardest(batch.anchors, batch.positives);
    const auto fp = rt::exhaustive_hardest(batch.positives, batch.anchors);
    bool same = true;
    for (Eigen::Index i = 0; i < b; ++i)
      same = same && static_cast<std::size_t>(m.for_anchor[i]) == fa[i] && static_cast<std::size_t>(m.for_positive[i]) == fp[i];
    exact += same;
  }
  return {exact == 100, fmt("%d/100 batches (B = 2..64) identical to exhaustive search", exact)};
}

Outcome nms_oracle() {
  std::mt19937_64 rng(5);
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    const int w = 1 + static_cast<int>(rng() % 64), h = 1 + static_cast<int>(rng() % 64);
    const int levels = t % 3 == 0 ? 4 : 100000;
    Grid2D g(w, h);
    for (auto& v : g.values) v = static_cast<double>(rng() % levels) / levels;
    const double radius = rt::uniform(rng, 1.0, 6.0);
    const double min_conf = t % 2 ? 0.3 : -1.0;
    const std::size_t limit = t % 5 == 0 ? 10 : 1000000;
    const auto got = nms(g, radius, min_conf, limit);
    const auto want = rt::brute_force_nms(g, radius, min_conf, limit);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].pos.x == want[i].pos.x && got[i].pos.y == want[i].pos.y && got[i].confidence == want[i].confidence;
    exact += same;
  }
  // Separation on real pipeline output.
  double closest = 1e9;
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const SynthPair pair = synth_generate(cfg);
    for (const auto* img : {&pair.image_a, &pair.image_b}) {
      const auto kps = extract_keypoints(confidence_heatmap(reference_extract(preprocess_image(*img, Modality::kSynthA))), 4000, 0.0, 4.0);
      total += kps.size();
      for (std::size_t i = 0; i < kps.size(); ++i)
        for (std::size_t j = i + 1; j < kps.size(); ++j) closest = std::min(closest, distance(kps[i].pos, kps[j].pos));
    }
  }
  return {exact == 100 && closest > 4.0,
          fmt("%d/100 heatmaps identical to brute force; %zu pipeline keypoints on 20 images, min separation %.2f px",
              exact, total, closest)};
}

Outcome bicubic_properties() {
  std::mt19937_64 rng(31);
  bool constant_exact = true;
  double ramp_err = 0.0, commute_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int gw = 1 + static_cast<int>(rng() % 20), gh = 1 + static_cast<int>(rng() % 20);
    const double c = rt::uniform(rng, -10, 10);
    for (double v : upsample_bicubic(Grid2D(gw, gh, c), 4, 4 * gw, 4 * gh).values) constant_exact = constant_exact && v == c;

    Grid2D ramp(12, 10);
    const double a = rt::uniform(rng, -3, 3), b = rt::uniform(rng, -3, 3), k = rt::uniform(rng, -3, 3);
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 12; ++i) ramp(i, j) = a * i + b * j + k;
    const Grid2D up = upsample_bicubic(ramp, 4, 48, 40);
    for (int y = 6; y < 34; ++y)
      for (int x = 6; x < 42; ++x) {
        const double u = (x + 0.5) / 4 - 0.5, v = (y + 0.5) / 4 - 0.5;
        ramp_err = std::max(ramp_err, std::abs(up(x, y) - (a * u + b * v + k)));
      }

    DenseFeatureMap fm = DenseFeatureMap::allocate(4 * gw - static_cast<int>(rng() % 4), 4 * gh, 4, 2);
    Grid2D vessel(fm.grid_w, fm.grid_h), background(fm.grid_w, fm.grid_h);
    for (int gy = 0; gy < fm.grid_h; ++gy)
      for (int gx = 0; gx < fm.grid_w; ++gx) {
        vessel(gx, gy) = fm.detector_logits[2 * fm.cell_index(gx, gy)] = static_cast<float>(rt::uniform(rng, -5, 5));
        background(gx, gy) = fm.detector_logits[2 * fm.cell_index(gx, gy) + 1] = static_cast<float>(rt::uniform(rng, -5, 5));
      }
    const Grid2D hv = upsample_bicubic(vessel, 4, fm.source_w, fm.source_h);
    const Grid2D hb = upsample_bicubic(background, 4, fm.source_w, fm.source_h);
    const Grid2D heat = confidence_heatmap(fm);
    for (std::size_t i = 0; i < heat.values.size(); ++i)
      commute_err = std::max(commute_err, std::abs(heat.values[i] - (hv.values[i] - hb.values[i])));
  }
  return {constant_exact && ramp_err <= 1e-6 && commute_err <= 1e-6,
          fmt("constant %s; ramp max error %.1e; difference/upsample commutation max error %.1e",
              constant_exact ? "exact" : "NOT exact", ramp_err, commute_err)};
}

Outcome end_to_end(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path data = work / "e2e";
  if (cli_run({"synth", "--count", "50", "--seed", "1", "--out", data.string()}) != 0) return {false, "synth failed"};
  if (cli_run({"evaluate", (data / "manifest.json").string(), "--out", (work / "e2e_report").string()}) != 0)
    return {false, "evaluate failed"};
  const double t = seconds_since(t0);
  const auto j = nlohmann::json::parse(slurp(work / "e2e_report.json"));
  const auto& all = j["report"]["aggregates"]["overall"];
  const double me = all["sr_me"].get<double>(), mae = all["sr_mae"].get<double>();
  return {me >= 90.0 && mae >= 80.0 && t < 120.0,
          fmt("50 pairs: SR_ME(3) %.1f%%, SR_MAE(5) %.1f%%, Rep %.1f%%, MIR %.1f%%; %.1f s", me, mae,
              100 * all["rep"].get<double>(), 100 * all["mir"].get<double>(), t)};
}

Outcome metric_formulas() {
  int ok = 0;
  std::string failed;
  const auto fixtures = rt::check_metric_fixtures();
  for (const auto& f : fixtures) {
    ok += f.ok;
    if (!f.ok) failed += " [" + f.name + "]";
  }
  std::mt19937_64 rng(8);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<ControlPointErrors> sets;
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      if (rng() % 8 == 0) {
        sets.push_back(failed_registration_errors(6));
        continue;
      }
      ControlPointErrors e;
      for (int k = 0; k < 6; ++k) e.errors.push_back(rt::uniform(rng, 0, 12));
      sets.push_back(e);
    }
    const double e1 = rt::uniform(rng, 0, 10), e2 = e1 + rt::uniform(rng, 0, 5);
    violations += success_rate_me(sets, e1) > success_rate_me(sets, e2);
    violations += success_rate_mae(sets, e1) > success_rate_mae(sets, e2);
    violations += success_rate_mae(sets, e1) > success_rate_me(sets, e1);
  }
  return {ok == static_cast<int>(fixtures.size()) && fixtures.size() == 5 && violations == 0,
          fmt("%d/5 fixtures exact%s; %d property violations over 1000 random error sets", ok, failed.c_str(), violations)};
}

Outcome toy_training(const fs::path& work) {
  const auto t0 = Clock::now();
  const std::string styles = R"({"style_cycle": [
    {"modality": "CF", "blur_sigma": 0.5, "noise_sigma": 0.02},
    {"modality": "FA", "invert": true, "gamma": 0.7, "blur_sigma": 0.5, "noise_sigma": 0.02},
    {"modality": "IR", "gamma": 1.3, "blur_sigma": 1.5, "noise_sigma": 0.02}]})";
  spit(work / "styles.json", styles);
  spit(work / "train.json", R"({"learning_rate": 1e-4, "epochs": 20, "patience": 5, "batch_detector": 48,
    "batch_descriptor": 24, "margin": 1.0, "lambda_det": 1.0, "lambda_desc": 1.0, "val_fraction": 0.2, "seed": 3})");
  const fs::path train = work / "toy_train", held = work / "toy_heldout";
  if (cli_run({"synth", "--config", (work / "styles.json").string(), "--count", "60", "--seed", "21", "--out", train.string()}) != 0 ||
      cli_run({"synth", "--config", (work / "styles.json").string(), "--count", "10", "--seed", "22", "--out", held.string()}) != 0) {
    return {false, "synth failed"};
  }
  if (cli_run({"train-toy", train.string(), "--config", (work / "train.json").string(), "--out", (work / "toy").string()}) != 0)
    return {false, "train-toy failed"};

  std::istringstream csv(slurp(work / "toy.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<double> losses;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string epoch, loss;
    std::getline(row, epoch, ',');
    std::getline(row, loss, ',');
    losses.push_back(std::stod(loss));
  }
  if (losses.empty()) return {false, "empty loss curve"};
  const double drop = 1.0 - losses.back() / losses.front();

  int hidden = 0, dim = 0;
  const Eigen::VectorXd params = load_toy_params((work / "toy.params").string(), &hidden, &dim);
  const ToyEmbedder net(hidden, dim);
  const TrainingPools pools = cli::load_dataset_pools((held / "manifest.json").string(), 0);
  std::map<std::string, std::vector<std::size_t>> by_pair;
  for (std::size_t k = 0; k < pools.descriptor.size(); ++k) by_pair[pools.descriptor[k].first.source_id].push_back(k);
  std::size_t matches = 0, correct = 0;
  for (const auto& [id, ks] : by_pair) {
    Eigen::MatrixXd a(kPatchValues, static_cast<Eigen::Index>(ks.size())), b(a.rows(), a.cols());
    for (std::size_t t = 0; t < ks.size(); ++t) {
      a.col(static_cast<Eigen::Index>(t)) = patch_vector(pools.descriptor[ks[t]].first);
      b.col(static_cast<Eigen::Index>(t)) = patch_vector(pools.descriptor[ks[t]].second);
    }
    const auto da = net.forward(params, a).descriptors, db = net.forward(params, b).descriptors;
    DescriptorSet sa(ks.size(), dim), sb(ks.size(), dim);
    for (std::size_t t = 0; t < ks.size(); ++t)
      for (int k = 0; k < dim; ++k) {
        sa.row(t)[k] = static_cast<float>(da(static_cast<Eigen::Index>(t), k));
        sb.row(t)[k] = static_cast<float>(db(static_cast<Eigen::Index>(t), k));
      }
    for (const auto& m : mutual_nn_match(sa, sb)) {
      ++matches;
      correct += m.idx_a == m.idx_b;
    }
  }
  const double precision = matches ? static_cast<double>(correct) / matches : 0.0;
  const double t = seconds_since(t0);
  return {drop >= 0.5 && precision >= 0.9 && t < 120.0,
          fmt("loss %.3f -> %.3f (%.0f%% drop over %zu epochs); held-out mutual-NN precision %.3f (%zu/%zu, %zu pairs); %.1f s",
              losses.front(), losses.back(), 100 * drop, losses.size(), precision, correct, matches, by_pair.size(), t)};
}

Outcome determinism(const fs::path& work) {
  const fs::path data = work / "det";
  if (cli_run({"synth", "--count", "5", "--seed", "7", "--out", data.string()}) != 0) return {false, "synth failed"};
  std::vector<std::string> outputs;
  int mismatches = 0, runs = 0;
  for (const std::size_t threads : {0u, 1u, 4u, 0u}) {
    set_thread_count(threads);
    const fs::path prefix = work / ("det_" + std::to_string(runs++));
    if (cli_run({"register", (data / "pair_000_a.png").string(), (data / "pair_000_b.png").string(), "--modality-a",
                 "SYNTH_A", "--modality-b", "SYNTH_B", "--out", (prefix.string() + "_reg")}) != 0 ||
        cli_run({"evaluate", (data / "manifest.json").string(), "--out", (prefix.string() + "_eval")}) != 0) {
      set_thread_count(0);
      return {false, "command failed"};
    }
    const std::string blob = slurp(prefix.string() + "_reg.json") + slurp(prefix.string() + "_reg.h.txt") +
                             slurp(prefix.string() + "_eval.json") + slurp(prefix.string() + "_eval.txt");
    if (!outputs.empty() && blob != outputs.front()) ++mismatches;
    outputs.push_back(blob);
  }
  set_thread_count(0);
  return {mismatches == 0, fmt("register + evaluate outputs across 4 runs (default, 1, 4, default threads): %d mismatches",
                               mismatches)};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / ("retinareg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"DLT exactness", dlt_exactness},
      {"RANSAC robustness", ransac_robustness},
      {"Gradient suite", gradient_suite},
      {"Mining oracle", mining_oracle},
      {"NMS oracle", nms_oracle},
      {"Bicubic properties", bicubic_properties},
      {"End-to-end synthetic registration", [&] { return end_to_end(work); }},
      {"Metric formulas", metric_formulas},
      {"Toy training", [&] { return toy_training(work); }},
      {"Determinism", [&] { return determinism(work); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work);
  std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
  return failures == 0 ? 0 : 1;
}
