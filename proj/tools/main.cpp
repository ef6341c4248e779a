#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "sgg/anonymizer.hpp"
#include "sgg/eval.hpp"
#include "sgg/synthetic.hpp"
#include "sgg/training.hpp"

namespace fs = std::filesystem;
using namespace sgg;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return nlohmann::json::parse(is);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << j.dump(2) << "\n";
}

struct MakeDatasetArgs {
  std::string spec, out;
  int samples = -1;
};

int make_dataset(const MakeDatasetArgs& a) {
  SyntheticSpec spec = a.spec.empty() ? SyntheticSpec{} : synthetic_spec_from_json(read_json(a.spec));
  if (a.samples >= 0) spec.samples = a.samples;
  write_dataset(spec, a.out);
  std::printf("wrote %d samples to %s\n", spec.samples, a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, out, config, modulation;
  int steps = -1, batch = -1, log_every = 50;
  long long seed = -1;
  bool resume = false;
};

int train_cmd(const TrainArgs& a) {
  const fs::path out(a.out);
  fs::create_directories(out);
  const fs::path ck = out / "checkpoint.bin";
  TrainState state;
  if (a.resume && fs::exists(ck)) {
    state = load_checkpoint(ck);
    if (a.steps >= 0) state.config.steps = a.steps;
    std::printf("resuming at step %llu\n", static_cast<unsigned long long>(state.step));
  } else {
    GeneratorConfig g = GeneratorConfig::desk();
    DiscriminatorConfig d;
    TrainConfig t;
    if (!a.config.empty()) {
      const auto j = read_json(a.config);
      if (j.contains("generator")) g = generator_config_from_json(j["generator"]);
      if (j.contains("discriminator")) d = discriminator_config_from_json(j["discriminator"]);
      if (j.contains("train")) t = train_config_from_json(j["train"]);
    }
    if (a.modulation == "sam") {
      g.modulation = ModulationMode::Sam;
    } else if (a.modulation == "vsam") {
      g.modulation = ModulationMode::VSam;
    }
    if (a.steps >= 0) t.steps = a.steps;
    if (a.batch > 0) t.batch = a.batch;
    if (a.seed >= 0) t.seed = static_cast<std::uint64_t>(a.seed);
    state = TrainState::create(g, d, t);
    write_json(out / "config.json", {{"generator", to_json(g)}, {"discriminator", to_json(d)}, {"train", to_json(t)}});
  }
  const auto data = load_dataset(a.data);
  if (data.empty()) throw std::runtime_error("dataset " + a.data + " is empty");
  std::printf("%zu samples, G %zu parameters, D %zu parameters\n", data.size(), state.g->params().count(),
              state.d->params().count());
  const auto start = std::chrono::steady_clock::now();
  TrainHooks hooks{ck, out / "metrics.txt", [&](const StepResult& r) {
                     if (r.step % a.log_every != 0) return;
                     const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                     std::printf("step %6llu  %7.1fs", static_cast<unsigned long long>(r.step), s);
                     for (const auto& [n, v] : r.terms) std::printf("  %s %.4f", n.c_str(), v);
                     std::printf("\n");
                     std::fflush(stdout);
                   }};
  try {
    train(state, data, hooks);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  }
  save_checkpoint(state, ck);
  return 0;
}

int anonymize_cmd(const AnonymizationJob& job) {
  const auto r = run_job(job);
  for (const auto& m : r.messages) std::fprintf(stderr, "%s\n", m.c_str());
  std::printf("%s\n", to_json(r).dump().c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, study, family, out;
  int samples = 64;
  std::uint64_t seed = 0;
  double truncation = 1.0;
};

int evaluate_cmd(const EvalArgs& a) {
  const auto g = load_generator(a.checkpoint);
  const GeneratorModel model(*g);
  const auto data = load_dataset(a.dataset);
  if (data.empty()) throw std::runtime_error("dataset " + a.dataset + " is empty");
  nlohmann::json report{{"checkpoint", a.checkpoint}, {"dataset", a.dataset}, {"study", a.study},
                        {"seed", a.seed}, {"truncation", a.truncation}};
  if (a.study == "invariance") {
    std::vector<Family> families;
    if (a.family.empty()) {
      families = {Family::Translation, Family::Rotation, Family::Hflip};
    } else {
      families = {parse_family(a.family)};
    }
    InvarianceReport rep;
    for (Family f : families) rep.families.push_back(invariance_study(model, data, f, a.samples, a.seed, a.truncation));
    report["invariance"] = rep.to_json();
  } else if (a.study == "diversity") {
    double total = 0;
    const int n = std::min<int>(a.samples, static_cast<int>(data.size()));
    for (int i = 0; i < n; ++i) total += diversity_proxy(model, data[i], 6, a.seed + i, a.truncation);
    report["diversity"] = {{"mean_pairwise_l1", total / n}, {"samples", n}};
  } else if (a.study == "oracle") {
    const auto spec = synthetic_spec_from_json(read_json(fs::path(a.dataset) / "spec.json"));
    const int n = std::min<int>(a.samples, static_cast<int>(data.size()));
    const std::vector<SurfaceAnnotation> subset(data.end() - n, data.end());
    report["oracle"] = {{"body_psnr_db", oracle_body_psnr(model, subset, TextureMap(spec), a.seed, a.truncation)},
                        {"samples", n}};
  } else if (a.study == "surface") {
    const auto state = load_checkpoint(a.checkpoint);
    const int n = std::min<int>(a.samples, static_cast<int>(data.size()));
    const std::vector<SurfaceAnnotation> subset(data.end() - n, data.end());
    report["surface"] = {{"discriminator_error", discriminator_surface_error(*state.d, subset)}, {"samples", n}};
  } else {
    throw std::invalid_argument("unknown study '" + a.study + "'");
  }
  write_json(a.out, report);
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface-guided person generation and anonymization"};
  app.require_subcommand(1);

  MakeDatasetArgs md;
  auto* mk = app.add_subcommand("make-dataset", "Render the procedural surface dataset");
  mk->add_option("--spec", md.spec, "Dataset spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  mk->add_option("--out", md.out, "Output directory")->required();
  mk->add_option("--samples", md.samples, "Override the sample count");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train generator and discriminator");
  tr->add_option("--data", ta.data, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", ta.out, "Run directory (checkpoint, metrics)")->required();
  tr->add_option("--config", ta.config, "JSON with generator/discriminator/train sections")->check(CLI::ExistingFile);
  tr->add_option("--modulation", ta.modulation, "sam or vsam")->check(CLI::IsMember({"sam", "vsam"}));
  tr->add_option("--steps", ta.steps, "Total steps");
  tr->add_option("--batch", ta.batch, "Batch size");
  tr->add_option("--seed", ta.seed, "Seed");
  tr->add_option("--log-every", ta.log_every, "Print every N steps")->check(CLI::PositiveNumber);
  tr->add_flag("--resume", ta.resume, "Continue from the run directory's checkpoint");

  AnonymizationJob job;
  auto* an = app.add_subcommand("anonymize", "Replace every detected person");
  an->add_option("--input", job.input, "Annotated images with S.boxes.txt sidecars")->required();
  an->add_option("--output", job.output, "Output directory")->required();
  an->add_option("--checkpoint", job.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  an->add_option("--table", job.table, "Vertex table (default: input/table.vtx)");
  an->add_option("--truncation", job.truncation, "Truncation t in [0, 1]")->check(CLI::Range(0.0, 1.0));
  an->add_option("--seed", job.seed, "Seed");
  an->add_option("--dilation", job.dilation, "Dilation radius in model pixels")->check(CLI::NonNegativeNumber);
  an->add_option("--score-threshold", job.score_threshold, "Minimum detection score")->check(CLI::Range(0.0, 1.0));
  an->add_flag("--fixed-z", job.fixed_z, "One latent code for every person");

  EvalArgs ev;
  auto* ea = app.add_subcommand("evaluate", "Invariance, diversity, oracle or surface study");
  ea->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  ea->add_option("--dataset", ev.dataset, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  ea->add_option("--study", ev.study, "invariance, diversity, oracle or surface")
      ->required()
      ->check(CLI::IsMember({"invariance", "diversity", "oracle", "surface"}));
  ea->add_option("--family", ev.family, "translation, rotation or hflip (default: all)");
  ea->add_option("--samples", ev.samples, "Number of samples")->check(CLI::PositiveNumber);
  ea->add_option("--seed", ev.seed, "Seed");
  ea->add_option("--truncation", ev.truncation, "Truncation t in [0, 1]")->check(CLI::Range(0.0, 1.0));
  ea->add_option("--out", ev.out, "Report JSON")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*mk) return make_dataset(md);
    if (*tr) return train_cmd(ta);
    if (*an) return anonymize_cmd(job);
    if (*ea) return evaluate_cmd(ev);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
