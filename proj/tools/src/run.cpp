#include <map>
#include <string>
#include <vector>
#include <ostream>

#include <CLI11.hpp>

#include "retinareg_cli/cli.hpp"

namespace retinareg::cli {
namespace {

const std::map<std::string, Backend> kBackends{{"reference", Backend::kReference}, {"file", Backend::kFile}};

std::vector<std::string> modality_names() {
  std::vector<std::string> names;
  for (Modality x : {Modality::kCF, Modality::kFA, Modality::kIR, Modality::kOCT, Modality::kOCTA,
                     Modality::kSynthA, Modality::kSynthB}) {
    names.emplace_back(to_string(x));
  }
  return names;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal retinal image registration"};
  app.require_subcommand(1);
  const auto modalities = modality_names();

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Compute a dense feature map");
  extract->add_option("image", ex.image, "Input PNG (or feature map with --backend file)")->required();
  std::string ex_modality = "CF", rg_modality_a = "CF", rg_modality_b = "CF";
  extract->add_option("--modality", ex_modality, "Image modality")
      ->check(CLI::IsMember(modalities, CLI::ignore_case));
  extract->add_option("--backend", ex.backend, "reference or file")
      ->transform(CLI::CheckedTransformer(kBackends, CLI::ignore_case));
  extract->add_option("--config", ex.config, "Pipeline config JSON");
  extract->add_option("--out", ex.out, "Output feature map")->required();

  RegisterArgs rg;
  auto* reg = app.add_subcommand("register", "Register image B onto image A");
  reg->add_option("input_a", rg.input_a, "Image or feature map A")->required();
  reg->add_option("input_b", rg.input_b, "Image or feature map B")->required();
  reg->add_option("--modality-a", rg_modality_a, "Modality of A")
      ->check(CLI::IsMember(modalities, CLI::ignore_case));
  reg->add_option("--modality-b", rg_modality_b, "Modality of B")
      ->check(CLI::IsMember(modalities, CLI::ignore_case));
  reg->add_option("--config", rg.config, "Pipeline config JSON");
  reg->add_option("--seed", rg.seed, "RANSAC seed");
  reg->add_option("--n-max", rg.n_max, "Keypoints per image");
  reg->add_option("--backend", rg.backend, "reference or file")
      ->transform(CLI::CheckedTransformer(kBackends, CLI::ignore_case));
  reg->add_option("--overlay", rg.overlay, "Checkerboard overlay PNG");
  reg->add_option("--out", rg.out, "Output prefix")->required();

  EvaluateArgs ev;
  auto* eval = app.add_subcommand("evaluate", "Register and score every pair of a manifest");
  eval->add_option("manifest", ev.manifest, "Dataset manifest JSON")->required();
  eval->add_option("--config", ev.config, "Pipeline config JSON");
  eval->add_option("--seed", ev.seed, "RANSAC seed");
  eval->add_option("--n-max", ev.n_max, "Keypoints per image");
  eval->add_option("--backend", ev.backend, "reference or file")
      ->transform(CLI::CheckedTransformer(kBackends, CLI::ignore_case));
  eval->add_option("--out", ev.out, "Output prefix")->required();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic registration dataset");
  synth->add_option("--config", sy.config, "Synthesis config JSON");
  synth->add_option("--count", sy.count, "Number of pairs");
  synth->add_option("--seed", sy.seed, "Dataset seed");
  synth->add_option("--out", sy.out, "Output directory")->required();

  TrainToyArgs tt;
  auto* train = app.add_subcommand("train-toy", "Train the toy embedder on an annotated dataset");
  train->add_option("dataset", tt.dataset, "Manifest or dataset directory")->required();
  train->add_option("--config", tt.config, "Training config JSON");
  train->add_option("--seed", tt.seed, "Training seed");
  train->add_option("--lr", tt.learning_rate, "Learning rate override");
  train->add_option("--out", tt.out, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitConfig;
  }

  ex.modality = *parse_modality(ex_modality);
  rg.modality_a = *parse_modality(rg_modality_a);
  rg.modality_b = *parse_modality(rg_modality_b);

  if (*extract) return cmd_extract(ex, err);
  if (*reg) return cmd_register(rg, err);
  if (*eval) return cmd_evaluate(ev, err);
  if (*synth) return cmd_synth(sy, err);
  return cmd_train_toy(tt, err);
}

}  // namespace retinareg::cli
