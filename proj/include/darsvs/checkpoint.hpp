#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "darsvs/adam.hpp"
#include "darsvs/corpus.hpp"
#include "darsvs/models.hpp"
#include "darsvs/training.hpp"

namespace darsvs {

// Layout: a text header ("DARSVS-CHECKPOINT 1", kind, seed, epoch, best
// validation loss, single-line config JSON), then one text line per record
// followed by its little-endian payload (float32 tensors, float64 statistics
// and optimizer moments), closed by "end".
struct Checkpoint {
  struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
  };
  struct NamedStats {
    std::string name;
    std::vector<double> values;
  };

  std::string kind;
  std::uint64_t seed = 0;
  int epoch = 0;
  double best_valid = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
  std::vector<NamedStats> stats;
  std::optional<AdamState> optimizer;

  const NamedStats& stat(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void store_params(Checkpoint& ck, const ParameterSet<float>& ps);
// Names and shapes must match exactly.
void load_params(ParameterSet<float>& ps, const Checkpoint& ck);

// Everything needed to run a trained model.
struct TrainedF0 {
  std::unique_ptr<F0Model<float>> model;
};

struct TrainedSpectral {
  std::unique_ptr<SpectralModel<float>> model;
  NormStats norm;
};

struct TrainedBaseline {
  std::unique_ptr<BaselineModel<float>> model;
  NormStats norm;
  std::vector<double> mlpg_variance;
};

Checkpoint make_checkpoint(const TrainedF0& m, std::uint64_t seed, int epoch, double best_valid,
                           const AdamState* opt);
Checkpoint make_checkpoint(const TrainedSpectral& m, std::uint64_t seed, int epoch, double best_valid,
                           const AdamState* opt);
Checkpoint make_checkpoint(const TrainedBaseline& m, std::uint64_t seed, int epoch, double best_valid,
                           const AdamState* opt);

// Each throws DataError when the checkpoint holds a different model kind.
TrainedF0 restore_f0(const Checkpoint& ck);
TrainedSpectral restore_spectral(const Checkpoint& ck);
TrainedBaseline restore_baseline(const Checkpoint& ck);

}  // namespace darsvs
