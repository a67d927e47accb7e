// trinity: command-line front end for the synthetic-world pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"
#include "trinity/numerics/checkpoint.hpp"
#include "trinity/pipeline/pipeline.hpp"
#include "trinity/pipeline/plot.hpp"

namespace fs = std::filesystem;
using namespace trinity;

namespace {

enum Exit { kOk = 0, kUnexpected = 1, kConfig = 2, kData = 3, kContract = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "trinity-out";
  std::string data;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<std::size_t> epochs;
  bool use_gt_flow = false;
  std::string toggles = "GA,GA+VQ,GA+VQ+LB,GA+VQ+LP,GA+VQ+LB+LP";
  std::vector<std::string> inputs;
};

fs::path out_dir(const Options& o) { return o.out; }
fs::path data_dir(const Options& o) { return o.data.empty() ? out_dir(o) / "dataset" : fs::path(o.data); }
fs::path config_path(const Options& o) { return out_dir(o) / "config.txt"; }
fs::path codebook_path(const Options& o) { return out_dir(o) / "codebook.bin"; }
fs::path checkpoint_path(const Options& o) { return out_dir(o) / "model.ckpt"; }

void log(const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); }

// --config wins; otherwise the config resolved by an earlier command in the
// same output directory; otherwise defaults. Flags override all of them.
pipeline::PipelineConfig resolve(const Options& o) {
  pipeline::PipelineConfig c;
  if (!o.config.empty()) {
    if (!fs::is_regular_file(o.config)) throw ConfigError("config file not found: " + o.config);
    c = pipeline::PipelineConfig::load(o.config);
  } else if (fs::exists(config_path(o))) {
    c = pipeline::PipelineConfig::load(config_path(o));
  }
  if (o.seed) {
    c.seed = *o.seed;
    c.data.seed = *o.seed;
  }
  if (o.mode) {
    const model::Mode m = model::parse_mode(*o.mode);
    if (m != c.model.mode && !o.alpha) c.scoring.alpha = pipeline::PipelineConfig::default_alpha(m);
    c.model.mode = m;
  }
  if (o.alpha) c.scoring.alpha = *o.alpha;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.use_gt_flow) c.motion.use_gt_flow = true;
  c.validate();
  c.save(config_path(o));
  return c;
}

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw DataError("missing " + path.string() + "; run `trinity " + producer + "` first");
  }
}

data::Dataset load_data(const Options& o) {
  require(data_dir(o) / "manifest.txt", "generate");
  return data::read_dataset(data_dir(o));
}

std::optional<vq::Codebook> load_codebook_if_needed(const Options& o,
                                                    const pipeline::PipelineConfig& c) {
  if (!c.model.toggles.vq) return std::nullopt;
  require(codebook_path(o), "pretrain-vq");
  vq::Codebook cb = vq::load_codebook(codebook_path(o));
  if (cb.size() != c.model.codebook_size || cb.dim() != flow::kHofChannels) {
    throw DataError(codebook_path(o).string() + " holds " + std::to_string(cb.size()) + "x" +
                    std::to_string(cb.dim()) + " entries but the config expects " +
                    std::to_string(c.model.codebook_size) + "x25; rerun `trinity pretrain-vq`");
  }
  return cb;
}

std::vector<pipeline::VideoSamples> prepared(const data::Dataset& ds, const std::string& split,
                                             const pipeline::PipelineConfig& c,
                                             const std::optional<vq::Codebook>& cb) {
  auto videos = pipeline::prepare_split(ds, split, c.model, c.motion);
  if (cb) {
    for (auto& v : videos) pipeline::assign_tokens(v.samples, *cb);
  }
  return videos;
}

std::unique_ptr<model::TrinityModel> load_model(const Options& o,
                                                const pipeline::PipelineConfig& c) {
  require(checkpoint_path(o), "train");
  auto m = std::make_unique<model::TrinityModel>(c.model, c.seed);
  nn::load_checkpoint(checkpoint_path(o), m->parameters());
  return m;
}

int cmd_generate(const Options& o) {
  const auto c = resolve(o);
  const data::Dataset ds = data::generate_dataset(c.data);
  data::write_dataset(data_dir(o), ds);
  log("wrote " + std::to_string(ds.clips.size()) + " clips to " + data_dir(o).string());
  return kOk;
}

int cmd_pretrain_vq(const Options& o) {
  const auto c = resolve(o);
  const data::Dataset ds = load_data(o);
  auto train = pipeline::flatten(pipeline::prepare_split(ds, "train", c.model, c.motion));
  vq::PretrainOptions vo = c.vq;
  vo.codebook_size = c.model.codebook_size;
  vo.seed = c.seed;
  const auto r = pipeline::pretrain_vq(train, vo);
  vq::save_codebook(codebook_path(o), r.codebook);
  log("codebook " + std::to_string(r.codebook.size()) + " words, final loss " +
      std::to_string(r.epoch_loss.back()) + " -> " + codebook_path(o).string());
  return kOk;
}

int cmd_train(const Options& o) {
  const auto c = resolve(o);
  const auto cb = load_codebook_if_needed(o, c);
  const data::Dataset ds = load_data(o);
  auto train = pipeline::flatten(prepared(ds, "train", c, cb));
  model::TrinityModel m(c.model, c.seed);
  std::size_t shown = static_cast<std::size_t>(-1);
  const auto report = pipeline::train_model(m, train, c.train, c.seed, [&](const auto& s) {
    if (s.epoch == shown) return;
    shown = s.epoch;
    log("epoch " + std::to_string(s.epoch) + " loss " + std::to_string(s.total) + " tau " +
        std::to_string(s.tau));
  });
  nn::save_checkpoint(checkpoint_path(o), m.parameters());
  pipeline::write_loss_csv(out_dir(o) / "loss.csv", report);
  log("trained " + std::to_string(report.steps.size()) + " steps in " +
      std::to_string(report.seconds) + " s -> " + checkpoint_path(o).string());
  return kOk;
}

int cmd_score(const Options& o) {
  const auto c = resolve(o);
  const auto cb = load_codebook_if_needed(o, c);
  const data::Dataset ds = load_data(o);
  const auto model = load_model(o, c);
  const model::TrinityModel& m = *model;
  const bool contextual = c.model.mode == model::Mode::kContextual;
  const auto aux = contextual ? pipeline::AuxScore::kGlobal : pipeline::AuxScore::kLocal;
  const fs::path dir = out_dir(o) / "scores";
  std::size_t written = 0;
  auto emit = [&](std::vector<pipeline::ClipSample>& samples, const data::ClipRecord& r,
                  const std::string& name) {
    const auto clips = pipeline::score_clips(m, samples, c.scoring.batch_size);
    const auto tl = pipeline::video_timeline(clips, c.model.frames, aux, c.scoring.alpha,
                                             c.scoring.kernel, r.labels);
    pipeline::write_score_csv(dir / (name + ".csv"), tl);
    ++written;
  };
  for (auto& v : prepared(ds, "test", c, cb)) emit(v.samples, *v.record, v.record->id);
  if (contextual) {
    for (auto& v : prepared(ds, "pseudo", c, cb)) {
      emit(v.samples, *v.record, v.record->id + "_original");
      for (auto& s : v.samples) s.context = v.record->altered_context;
      emit(v.samples, *v.record, v.record->id + "_altered");
    }
  }
  log("wrote " + std::to_string(written) + " score files to " + dir.string());
  return kOk;
}

int cmd_evaluate(const Options& o) {
  const auto c = resolve(o);
  const auto cb = load_codebook_if_needed(o, c);
  const data::Dataset ds = load_data(o);
  const auto model = load_model(o, c);
  const model::TrinityModel& m = *model;
  std::string csv = "metric,value\n";
  auto row = [&](const std::string& k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    csv += k + "," + buf + "\n";
    log(k + " " + buf);
  };
  if (c.model.mode == model::Mode::kContextual && !ds.split("pseudo").empty()) {
    const auto e = pipeline::evaluate_pseudo(m, ds, prepared(ds, "pseudo", c, cb), c.scoring);
    row("pseudo_auc", e.combined.roc.auc);
    row("pseudo_auc_mot", e.motion_only.roc.auc);
    row("pseudo_auc_recon", e.recon_only.roc.auc);
    pipeline::write_roc_csv(out_dir(o) / "roc_pseudo.csv", e.combined.roc);
  }
  if (!ds.split("test").empty()) {
    const auto e = pipeline::evaluate_test(m, prepared(ds, "test", c, cb), c.scoring);
    row("test_auc", e.fused.roc.auc);
    row("test_auc_recon", e.recon_only.roc.auc);
    pipeline::write_roc_csv(out_dir(o) / "roc_test.csv", e.fused.roc);
  }
  io::write_file_atomic(out_dir(o) / "auc.csv", csv);
  return kOk;
}

int cmd_ablate(const Options& o) {
  const auto c = resolve(o);
  const data::Dataset ds = load_data(o);
  std::vector<model::Toggles> toggles;
  std::string item;
  for (std::size_t i = 0; i <= o.toggles.size(); ++i) {
    if (i == o.toggles.size() || o.toggles[i] == ',') {
      if (!item.empty()) toggles.push_back(model::Toggles::parse(item));
      item.clear();
    } else {
      item += o.toggles[i];
    }
  }
  if (toggles.empty()) throw ConfigError("--toggles lists no configurations");
  const auto rows = pipeline::run_ablation(c, ds, toggles, log);
  pipeline::write_ablation_csv(out_dir(o) / "ablation.csv", rows);
  return kOk;
}

int cmd_plot(const Options& o) {
  std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
  if (inputs.empty()) {
    for (const char* name : {"roc_pseudo.csv", "roc_test.csv"}) {
      if (fs::exists(out_dir(o) / name)) inputs.push_back(out_dir(o) / name);
    }
    if (fs::is_directory(out_dir(o) / "scores")) {
      std::vector<fs::path> scores;
      for (const auto& e : fs::directory_iterator(out_dir(o) / "scores")) {
        if (e.path().extension() == ".csv") scores.push_back(e.path());
      }
      std::sort(scores.begin(), scores.end());
      inputs.insert(inputs.end(), scores.begin(), scores.end());
    }
    if (inputs.empty()) {
      throw DataError("nothing to plot in " + out_dir(o).string() +
                      "; run `trinity score` or `trinity evaluate` first");
    }
  }
  for (const auto& in : inputs) {
    const fs::path svg = out_dir(o) / "plots" / (in.stem().string() + ".svg");
    io::write_file_atomic(svg, pipeline::plot_csv(in));
  }
  log("wrote " + std::to_string(inputs.size()) + " plots to " + (out_dir(o) / "plots").string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware video anomaly detection on a synthetic webcam world"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Config file (trinity-config 1)");
    sub->add_option("--seed", o.seed, "Seed for data generation and training");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--data", o.data, "Dataset directory (default <out>/dataset)");
    sub->add_option("--mode", o.mode, "contextual | context_free");
    sub->add_option("--alpha", o.alpha, "Weight of S_r in the fused score");
    sub->add_option("--epochs", o.epochs, "Training epochs");
    sub->add_flag("--use-gt-flow", o.use_gt_flow, "Use stored ground-truth flow");
    return sub;
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"generate", "Write a seeded synthetic dataset", cmd_generate},
      {"pretrain-vq", "Fit the motion codebook", cmd_pretrain_vq},
      {"train", "Train the model (needs the codebook)", cmd_train},
      {"score", "Write per-video score CSVs", cmd_score},
      {"evaluate", "Write AUC and ROC CSVs", cmd_evaluate},
      {"ablate", "Run the alignment ablation", cmd_ablate},
      {"plot", "Render SVG plots from CSVs", cmd_plot},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = common(app.add_subcommand(cmd.name, cmd.help));
    if (std::string(cmd.name) == "ablate") {
      sub->add_option("--toggles", o.toggles, "Comma-separated toggle sets")->capture_default_str();
    }
    if (std::string(cmd.name) == "plot") sub->add_option("inputs", o.inputs, "CSV files");
    subs.emplace_back(sub, cmd.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    for (const auto& [sub, run] : subs) {
      if (sub->parsed()) return run(o);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUnexpected;
}
