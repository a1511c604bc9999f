#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "darsvs/commands.hpp"
#include "darsvs/errors.hpp"

namespace fs = std::filesystem;
using namespace darsvs;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

// --data, then the config's data_dir, then $DARSVS_DATA_ROOT, then ./data.
fs::path data_dir(const std::string& flag, const RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("DARSVS_DATA_ROOT"); env && *env) return env;
  return "data";
}

// "name=dir" or a bare directory named after itself.
std::vector<std::pair<std::string, fs::path>> parse_systems(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      out.emplace_back(fs::path(s).filename().string(), s);
    else
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep autoregressive singing-voice acoustic models on a synthetic corpus"};
  app.require_subcommand(1);
  std::function<void()> action;

  std::string config_path, data_flag;

  auto* corpus = app.add_subcommand("build-corpus", "generate the synthetic dataset");
  std::string corpus_out;
  corpus->add_option("config", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  corpus->add_option("--out,-o", corpus_out, "dataset directory (default: data root)");
  corpus->callback([&] {
    action = [&] {
      const RunConfig cfg = load_config(config_path);
      const fs::path out = corpus_out.empty() ? data_dir("", cfg) : fs::path(corpus_out);
      const auto c = cmd_build_corpus(cfg, out);
      std::cout << "wrote " << out.string() << ": train " << c.train << ", validation " << c.validation << ", test "
                << c.test << "\n";
    };
  });

  auto* train_cmd = app.add_subcommand("train", "train one model and keep the best-validation checkpoint");
  std::string kind_str, checkpoint_path, log_path, resume_path;
  int epochs_override = 0;
  train_cmd->add_option("kind", kind_str, "dar-f0 | dar-spectral | baseline")->required();
  train_cmd->add_option("config", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--data,-d", data_flag, "dataset directory");
  train_cmd->add_option("--checkpoint,-o", checkpoint_path, "output checkpoint")->required();
  train_cmd->add_option("--log", log_path, "loss log (default: <checkpoint>.log)");
  train_cmd->add_option("--resume", resume_path, "continue from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", epochs_override, "override the configured epoch count");
  train_cmd->callback([&] {
    action = [&] {
      TrainRequest req;
      req.kind = parse_kind(kind_str);
      req.config = load_config(config_path);
      if (epochs_override > 0) {
        req.config.train_f0.epochs = req.config.train_spectral.epochs = req.config.train_baseline.epochs =
            epochs_override;
      }
      req.dataset = data_dir(data_flag, req.config);
      req.checkpoint = checkpoint_path;
      req.log = log_path;
      if (!resume_path.empty()) req.resume = resume_path;
      const auto res = cmd_train(req, &std::cerr);
      std::cout << "best epoch " << res.best_epoch << " valid_loss " << res.best_valid << " -> " << checkpoint_path
                << "\n";
    };
  });

  auto* sweep = app.add_subcommand("sweep", "train a grid of DAR configurations and tabulate them");
  std::vector<int> history, heads, layers;
  std::string sweep_split = "validation", sweep_out;
  int jobs = 1;
  sweep->add_option("kind", kind_str, "dar-f0 | dar-spectral")->required();
  sweep->add_option("config", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  sweep->add_option("--data,-d", data_flag, "dataset directory");
  sweep->add_option("--history,-K", history, "history lengths")->delimiter(',');
  sweep->add_option("--heads", heads, "attention heads (spectral)")->delimiter(',');
  sweep->add_option("--layers,-N", layers, "attention layers (spectral)")->delimiter(',');
  sweep->add_option("--split", sweep_split, "split used to score cells");
  sweep->add_option("--jobs,-j", jobs, "cells trained concurrently");
  sweep->add_option("--out,-o", sweep_out, "write the table here instead of stdout");
  sweep->callback([&] {
    action = [&] {
      const RunConfig cfg = load_config(config_path);
      const auto kind = parse_kind(kind_str);
      const Dataset ds = read_dataset(data_dir(data_flag, cfg));
      const auto res = cmd_sweep(kind, {history, heads, layers}, cfg, ds, parse_split(sweep_split), jobs, &std::cerr);
      write_or_print(res.csv(), sweep_out);
      const auto& best = res.cells[res.best];
      std::cerr << "optimum: K=" << best.history;
      if (kind == ModelKind::dar_spectral) std::cerr << " h=" << best.heads << " N=" << best.layers;
      std::cerr << "\n";
    };
  });

  auto* synth = app.add_subcommand("synthesize", "generate predicted features for a dataset split");
  std::string f0_ck, spec_ck, base_ck, synth_split = "test", synth_out;
  bool postprocess = false;
  std::optional<int> window;
  synth->add_option("config", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--data,-d", data_flag, "dataset directory");
  synth->add_option("--f0", f0_ck, "dar-f0 checkpoint")->check(CLI::ExistingFile);
  synth->add_option("--spectral", spec_ck, "dar-spectral checkpoint")->check(CLI::ExistingFile);
  synth->add_option("--baseline", base_ck, "baseline checkpoint")->check(CLI::ExistingFile);
  synth->add_option("--split", synth_split, "train | validation | test");
  synth->add_option("--out,-o", synth_out, "prediction directory")->required();
  synth->add_flag("--postprocess", postprocess, "replace the melody component with the note contour");
  synth->add_option("--window,-w", window, "moving-average window for --postprocess");
  synth->callback([&] {
    action = [&] {
      const RunConfig cfg = load_config(config_path);
      SynthesisRequest req;
      if (!f0_ck.empty()) req.f0 = f0_ck;
      if (!spec_ck.empty()) req.spectral = spec_ck;
      if (!base_ck.empty()) req.baseline = base_ck;
      req.dataset = data_dir(data_flag, cfg);
      req.split = parse_split(synth_split);
      req.out_dir = synth_out;
      req.postprocess = postprocess;
      req.window = window.value_or(cfg.postprocess_window);
      const int n = cmd_synthesize(req);
      std::cout << "wrote " << n << " predictions to " << synth_out << "\n";
    };
  });

  auto* eval = app.add_subcommand("evaluate", "objective metrics against natural and note references");
  std::vector<std::string> systems;
  std::string eval_split = "test", eval_out, per_utt;
  eval->add_option("predictions", systems, "prediction directories, optionally name=dir")->required();
  eval->add_option("--config,-c", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  eval->add_option("--data,-d", data_flag, "dataset directory");
  eval->add_option("--split", eval_split, "train | validation | test");
  eval->add_option("--out,-o", eval_out, "write the table here instead of stdout");
  eval->add_option("--per-utterance", per_utt, "also write per-utterance rows for the first system");
  eval->callback([&] {
    action = [&] {
      const RunConfig cfg = load_config(config_path);
      const Dataset ds = read_dataset(data_dir(data_flag, cfg));
      const auto named = parse_systems(systems);
      const Split split = parse_split(eval_split);
      write_or_print(cmd_evaluate(named, ds, split), eval_out);
      if (!per_utt.empty()) write_or_print(evaluate_predictions(named.front().second, ds, split).csv(), per_utt);
    };
  });

  auto* plot = app.add_subcommand("plot", "overlay F0 contours for one utterance (CSV + SVG)");
  std::string utterance, plot_out;
  std::vector<std::string> plot_systems;
  plot->add_option("utterance", utterance, "utterance id")->required();
  plot->add_option("predictions", plot_systems, "prediction directories, optionally name=dir");
  plot->add_option("--config,-c", config_path, "run config (JSON)")->check(CLI::ExistingFile);
  plot->add_option("--data,-d", data_flag, "dataset directory");
  plot->add_option("--out,-o", plot_out, "output prefix")->required();
  plot->callback([&] {
    action = [&] {
      const RunConfig cfg = load_config(config_path);
      cmd_plot({data_dir(data_flag, cfg), utterance, parse_systems(plot_systems), plot_out});
      std::cout << "wrote " << plot_out << ".csv and " << plot_out << ".svg\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    action();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
