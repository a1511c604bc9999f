#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "darsvs/checkpoint.hpp"
#include "darsvs/config.hpp"
#include "darsvs/corpus.hpp"
#include "darsvs/metrics.hpp"
#include "darsvs/plot.hpp"
#include "darsvs/training.hpp"

namespace darsvs {

namespace fs = std::filesystem;

struct SplitCounts {
  int train = 0, validation = 0, test = 0;
};

SplitCounts split_counts(const Dataset& ds);
SplitCounts cmd_build_corpus(const RunConfig& cfg, const fs::path& out_dir);

// Training-split and selection-split utterances, truncated by the limits in `tc`.
std::vector<const Utterance*> limited_split(const Dataset& ds, Split s, int limit);

struct TrainedModel {
  Checkpoint checkpoint;
  TrainResult result;
};

// Trains `kind` on the dataset's training split, selecting on validation.
// With `resume`, training continues from the stored epoch and optimizer state.
TrainedModel train_model(ModelKind kind, const RunConfig& cfg, const Dataset& ds, const Checkpoint* resume = nullptr,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

// Validation loss of a stored model, recomputed from scratch.
double checkpoint_validation_loss(const Checkpoint& ck, const RunConfig& cfg, const Dataset& ds);

struct TrainRequest {
  ModelKind kind = ModelKind::dar_f0;
  RunConfig config;
  fs::path dataset;
  fs::path checkpoint;
  fs::path log;  // empty: "<checkpoint>.log"
  std::optional<fs::path> resume;
};

// Writes the best-validation checkpoint and appends one line per epoch to the
// log as epochs finish, so a divergence leaves the partial log behind.
TrainResult cmd_train(const TrainRequest& req, std::ostream* progress = nullptr);

struct SweepGrid {
  std::vector<int> history;  // K
  std::vector<int> heads;    // h, spectral only
  std::vector<int> layers;   // N, spectral only
};

struct SweepCell {
  int history = 0, heads = 0, layers = 0;
  double best_valid = 0;
  int best_epoch = 0;
  EvalReport report;
};

struct SweepResult {
  ModelKind kind = ModelKind::dar_f0;
  std::vector<SweepCell> cells;
  std::size_t best = 0;  // lowest natural RMSE (F0) or MCD (spectral)

  std::string csv() const;
};

// Each cell trains with the config seed and is scored on `eval_split`.
SweepResult cmd_sweep(ModelKind kind, const SweepGrid& grid, const RunConfig& cfg, const Dataset& ds,
                      Split eval_split = Split::validation, int jobs = 1, std::ostream* progress = nullptr);

struct SynthesisSystem {
  const TrainedF0* f0 = nullptr;
  const TrainedSpectral* spectral = nullptr;
  const TrainedBaseline* baseline = nullptr;
  bool postprocess = false;
  int window = kDefaultPostprocessWindow;
};

// Prediction file contents for one utterance (no context columns).
FeatureFile predict_utterance(const Utterance& u, const SynthesisSystem& sys);

struct SynthesisRequest {
  std::optional<fs::path> f0, spectral, baseline;
  fs::path dataset;
  Split split = Split::test;
  fs::path out_dir;
  bool postprocess = false;
  int window = kDefaultPostprocessWindow;
};

// Returns the number of utterances written.
int cmd_synthesize(const SynthesisRequest& req);

struct Evaluation {
  std::vector<std::pair<std::string, EvalReport>> per_utterance;
  EvalReport aggregate;

  std::string csv() const;  // per-utterance rows then "aggregate"
};

Evaluation evaluate_predictions(const fs::path& pred_dir, const Dataset& ds, Split split);
// One aggregate row per named prediction directory.
std::string cmd_evaluate(const std::vector<std::pair<std::string, fs::path>>& systems, const Dataset& ds, Split split);

struct PlotRequest {
  fs::path dataset;
  std::string utterance;
  std::vector<std::pair<std::string, fs::path>> systems;
  fs::path out_prefix;  // writes <prefix>.csv and <prefix>.svg
};

std::vector<PlotSeries> plot_series(const Dataset& ds, const std::string& utterance,
                                    const std::vector<std::pair<std::string, fs::path>>& systems);
void cmd_plot(const PlotRequest& req);

}  // namespace darsvs
