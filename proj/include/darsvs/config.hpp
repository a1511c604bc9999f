#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "darsvs/adam.hpp"
#include "darsvs/corpus.hpp"
#include "darsvs/f0_codec.hpp"

namespace darsvs {

// Reference widths that the desk-scale defaults divide by `width_divisor`.
struct PaperWidths {
  static constexpr int fc = 512;
  static constexpr int bigru = 256;
  static constexpr int unigru = 128;
  static constexpr int linear = 256;
};

// FC stack -> biGRU -> uniGRU (+ feedback) -> linear, shared by both DAR models.
struct DarTrunkConfig {
  int width_divisor = 8;
  int fc_units = PaperWidths::fc / 8;
  int bigru_units = PaperWidths::bigru / 8;
  int unigru_units = PaperWidths::unigru / 8;
  int linear_units = PaperWidths::linear / 8;
  double feedback_dropout = 0.75;  // whole history frames, inverted scaling

  void apply_divisor(int divisor);
  void validate(const char* owner) const;
};

struct F0ModelConfig {
  DarTrunkConfig trunk;
  int embed_dim = 16;
  int history_len = 2;
  QuantizerConfig quantizer;

  int n_classes() const { return quantizer.n_classes(); }
  void validate() const;
};

struct PrenetConfig {
  int fc_units = 64;
  double fc_dropout = 0.1;
  int conv_kernel = 2;
  int conv_channels = 64;
  int pos_dim = 64;
  int attn_layers = 3;
  int heads = 2;
  int proj_dim = 64;
  int history_len = 2;

  void validate() const;
};

struct SpectralModelConfig {
  DarTrunkConfig trunk;
  PrenetConfig prenet;

  void validate() const;
};

struct BaselineConfig {
  int n_layers = 3;
  int units = 128;  // per direction
  double vuv_threshold = 0.5;

  void validate() const;
};

struct TrainConfig {
  int epochs = 10;
  AdamConfig adam;
  int max_train_utterances = 0;  // 0 = whole split
  int max_valid_utterances = 0;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 2019;
  std::string data_dir;  // empty: $DARSVS_DATA_ROOT or ./data
  std::string out_dir = "runs";
  int postprocess_window = 15;
  CorpusConfig corpus;
  F0ModelConfig f0;
  SpectralModelConfig spectral;
  BaselineConfig baseline;
  TrainConfig train_f0 = default_f0_training();
  TrainConfig train_spectral = default_spectral_training();
  TrainConfig train_baseline = default_baseline_training();

  static TrainConfig default_f0_training();
  static TrainConfig default_spectral_training();
  static TrainConfig default_baseline_training();

  void validate() const;
};

nlohmann::json corpus_config_to_json(const CorpusConfig& c);
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DarTrunkConfig& c);
nlohmann::json to_json(const F0ModelConfig& c);
nlohmann::json to_json(const PrenetConfig& c);
nlohmann::json to_json(const SpectralModelConfig& c);
nlohmann::json to_json(const BaselineConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

// All parsers reject unknown keys and wrongly typed values with ConfigError.
F0ModelConfig f0_config_from_json(const nlohmann::json& j);
SpectralModelConfig spectral_config_from_json(const nlohmann::json& j);
BaselineConfig baseline_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace darsvs
