#include "darsvs/config.hpp"

#include <fstream>
#include <set>

#include "darsvs/errors.hpp"

namespace darsvs {

using nlohmann::json;

namespace {

// Pulls known keys out of a JSON object and rejects whatever is left over.
class Fields {
 public:
  Fields(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + section_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

json style_to_json(const StyleParams& s) {
  return {{"vibrato_rate_hz", s.vibrato_rate_hz},     {"vibrato_depth_cents", s.vibrato_depth_cents},
          {"overshoot_cents", s.overshoot_cents},     {"preparation_cents", s.preparation_cents},
          {"fluctuation_std_cents", s.fluctuation_std_cents}, {"onset_ramp_frames", s.onset_ramp_frames},
          {"offset_ramp_frames", s.offset_ramp_frames}};
}

StyleParams style_from_json(const json& j) {
  StyleParams s;
  Fields f(j, "corpus.style");
  f.get("vibrato_rate_hz", s.vibrato_rate_hz);
  f.get("vibrato_depth_cents", s.vibrato_depth_cents);
  f.get("overshoot_cents", s.overshoot_cents);
  f.get("preparation_cents", s.preparation_cents);
  f.get("fluctuation_std_cents", s.fluctuation_std_cents);
  f.get("onset_ramp_frames", s.onset_ramp_frames);
  f.get("offset_ramp_frames", s.offset_ramp_frames);
  f.finish();
  return s;
}

DarTrunkConfig trunk_from_json(const json& j, const std::string& section) {
  DarTrunkConfig c;
  Fields f(j, section);
  // The divisor sets all four widths; explicit widths then override it.
  f.get("width_divisor", c.width_divisor);
  require(c.width_divisor >= 1, section + ".width_divisor must be >= 1");
  c.apply_divisor(c.width_divisor);
  f.get("fc_units", c.fc_units);
  f.get("bigru_units", c.bigru_units);
  f.get("unigru_units", c.unigru_units);
  f.get("linear_units", c.linear_units);
  f.get("feedback_dropout", c.feedback_dropout);
  f.finish();
  return c;
}

QuantizerConfig quantizer_from_json(const json& j) {
  QuantizerConfig q;
  Fields f(j, "f0_model.quantizer");
  f.get("n_levels", q.n_levels);
  f.get("mel_low", q.mel_low);
  f.get("mel_high", q.mel_high);
  f.finish();
  return q;
}

PrenetConfig prenet_from_json(const json& j) {
  PrenetConfig p;
  Fields f(j, "spectral_model.prenet");
  f.get("fc_units", p.fc_units);
  f.get("fc_dropout", p.fc_dropout);
  f.get("conv_kernel", p.conv_kernel);
  f.get("conv_channels", p.conv_channels);
  f.get("pos_dim", p.pos_dim);
  f.get("attn_layers", p.attn_layers);
  f.get("heads", p.heads);
  f.get("proj_dim", p.proj_dim);
  f.get("history_len", p.history_len);
  f.finish();
  return p;
}

}  // namespace

void DarTrunkConfig::apply_divisor(int divisor) {
  width_divisor = divisor;
  fc_units = std::max(1, PaperWidths::fc / divisor);
  bigru_units = std::max(1, PaperWidths::bigru / divisor);
  unigru_units = std::max(1, PaperWidths::unigru / divisor);
  linear_units = std::max(1, PaperWidths::linear / divisor);
}

void DarTrunkConfig::validate(const char* owner) const {
  const std::string o(owner);
  require(fc_units > 0 && bigru_units > 0 && unigru_units > 0 && linear_units > 0, o + ": layer widths must be positive");
  // A rate of exactly 1 severs the feedback link entirely, which is allowed.
  require(feedback_dropout >= 0 && feedback_dropout <= 1, o + ": feedback_dropout must lie in [0, 1]");
}

void F0ModelConfig::validate() const {
  trunk.validate("f0_model");
  quantizer.validate();
  require(embed_dim > 0, "f0_model: embed_dim must be positive");
  require(history_len >= 1, "f0_model: history_len must be >= 1");
}

void PrenetConfig::validate() const {
  require(fc_units > 0, "prenet: fc_units must be positive");
  require(fc_dropout >= 0 && fc_dropout < 1, "prenet: fc_dropout must lie in [0, 1)");
  require(conv_kernel >= 1, "prenet: conv_kernel must be >= 1");
  require(pos_dim == conv_channels, "prenet: pos_dim must equal conv_channels");
  require(pos_dim > 0 && pos_dim % 2 == 0, "prenet: pos_dim must be positive and even");
  require(attn_layers >= 0, "prenet: attn_layers must be >= 0");
  require(heads >= 1 && proj_dim % heads == 0, "prenet: heads must divide proj_dim");
  require(history_len >= 1, "prenet: history_len must be >= 1");
}

void SpectralModelConfig::validate() const {
  trunk.validate("spectral_model");
  prenet.validate();
}

void BaselineConfig::validate() const {
  require(n_layers >= 1, "baseline: n_layers must be >= 1");
  require(units > 0, "baseline: units must be positive");
  require(vuv_threshold > 0 && vuv_threshold < 1, "baseline: vuv_threshold must lie in (0, 1)");
}

void TrainConfig::validate() const {
  require(epochs >= 0, "training: epochs must be >= 0");
  require(max_train_utterances >= 0 && max_valid_utterances >= 0, "training: utterance caps must be >= 0");
  darsvs::validate(adam);
}

TrainConfig RunConfig::default_f0_training() {
  TrainConfig t;
  t.adam.base_lr = 0.01;
  t.adam.decay_rate = 0.9886;
  t.adam.decay_interval = 5000;
  t.adam.clip_norm = 5.0;
  return t;
}

TrainConfig RunConfig::default_spectral_training() {
  TrainConfig t;
  t.adam.base_lr = 0.001;
  t.adam.decay_rate = 0.9886;
  t.adam.decay_interval = 250;
  t.adam.clip_norm = 5.0;
  return t;
}

TrainConfig RunConfig::default_baseline_training() {
  TrainConfig t;
  t.adam.base_lr = 0.001;
  t.adam.clip_norm = 5.0;
  return t;
}

void RunConfig::validate() const {
  corpus.validate();
  f0.validate();
  spectral.validate();
  baseline.validate();
  train_f0.validate();
  train_spectral.validate();
  train_baseline.validate();
  require(postprocess_window >= 0, "postprocess_window must be >= 0");
}

json corpus_config_to_json(const CorpusConfig& c) {
  return {{"seed", c.seed},
          {"n_songs", c.n_songs},
          {"utterances_per_song", c.utterances_per_song},
          {"min_notes", c.min_notes},
          {"max_notes", c.max_notes},
          {"tempo", c.tempo},
          {"n_phones", c.n_phones},
          {"style", style_to_json(c.style)},
          {"spectral_noise", c.spectral_noise},
          {"f0_coupling", c.f0_coupling}};
}

CorpusConfig corpus_config_from_json(const json& j) {
  CorpusConfig c;
  Fields f(j, "corpus");
  f.get("seed", c.seed);
  f.get("n_songs", c.n_songs);
  f.get("utterances_per_song", c.utterances_per_song);
  f.get("min_notes", c.min_notes);
  f.get("max_notes", c.max_notes);
  f.get("tempo", c.tempo);
  f.get("n_phones", c.n_phones);
  if (const json* s = f.sub("style")) c.style = style_from_json(*s);
  f.get("spectral_noise", c.spectral_noise);
  f.get("f0_coupling", c.f0_coupling);
  f.finish();
  return c;
}

json to_json(const DarTrunkConfig& c) {
  return {{"width_divisor", c.width_divisor}, {"fc_units", c.fc_units},         {"bigru_units", c.bigru_units},
          {"unigru_units", c.unigru_units},   {"linear_units", c.linear_units}, {"feedback_dropout", c.feedback_dropout}};
}

json to_json(const F0ModelConfig& c) {
  return {{"trunk", to_json(c.trunk)},
          {"embed_dim", c.embed_dim},
          {"history_len", c.history_len},
          {"quantizer",
           {{"n_levels", c.quantizer.n_levels}, {"mel_low", c.quantizer.mel_low}, {"mel_high", c.quantizer.mel_high}}}};
}

json to_json(const PrenetConfig& c) {
  return {{"fc_units", c.fc_units},       {"fc_dropout", c.fc_dropout},   {"conv_kernel", c.conv_kernel},
          {"conv_channels", c.conv_channels}, {"pos_dim", c.pos_dim},     {"attn_layers", c.attn_layers},
          {"heads", c.heads},             {"proj_dim", c.proj_dim},       {"history_len", c.history_len}};
}

json to_json(const SpectralModelConfig& c) { return {{"trunk", to_json(c.trunk)}, {"prenet", to_json(c.prenet)}}; }

json to_json(const BaselineConfig& c) {
  return {{"n_layers", c.n_layers}, {"units", c.units}, {"vuv_threshold", c.vuv_threshold}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"base_lr", c.adam.base_lr},
          {"decay_rate", c.adam.decay_rate},
          {"decay_interval", c.adam.decay_interval},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"clip_norm", c.adam.clip_norm},
          {"max_train_utterances", c.max_train_utterances},
          {"max_valid_utterances", c.max_valid_utterances}};
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"data_dir", c.data_dir},
          {"out_dir", c.out_dir},
          {"postprocess_window", c.postprocess_window},
          {"corpus", corpus_config_to_json(c.corpus)},
          {"f0_model", to_json(c.f0)},
          {"spectral_model", to_json(c.spectral)},
          {"baseline_model", to_json(c.baseline)},
          {"training", {{"f0", to_json(c.train_f0)}, {"spectral", to_json(c.train_spectral)}, {"baseline", to_json(c.train_baseline)}}}};
}

F0ModelConfig f0_config_from_json(const json& j) {
  F0ModelConfig c;
  Fields f(j, "f0_model");
  if (const json* t = f.sub("trunk")) c.trunk = trunk_from_json(*t, "f0_model.trunk");
  f.get("embed_dim", c.embed_dim);
  f.get("history_len", c.history_len);
  if (const json* q = f.sub("quantizer")) c.quantizer = quantizer_from_json(*q);
  f.finish();
  return c;
}

SpectralModelConfig spectral_config_from_json(const json& j) {
  SpectralModelConfig c;
  Fields f(j, "spectral_model");
  if (const json* t = f.sub("trunk")) c.trunk = trunk_from_json(*t, "spectral_model.trunk");
  if (const json* p = f.sub("prenet")) c.prenet = prenet_from_json(*p);
  f.finish();
  return c;
}

BaselineConfig baseline_config_from_json(const json& j) {
  BaselineConfig c;
  Fields f(j, "baseline_model");
  f.get("n_layers", c.n_layers);
  f.get("units", c.units);
  f.get("vuv_threshold", c.vuv_threshold);
  f.finish();
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  Fields f(j, "training");
  f.get("epochs", c.epochs);
  f.get("base_lr", c.adam.base_lr);
  f.get("decay_rate", c.adam.decay_rate);
  f.get("decay_interval", c.adam.decay_interval);
  f.get("beta1", c.adam.beta1);
  f.get("beta2", c.adam.beta2);
  f.get("epsilon", c.adam.epsilon);
  f.get("clip_norm", c.adam.clip_norm);
  f.get("max_train_utterances", c.max_train_utterances);
  f.get("max_valid_utterances", c.max_valid_utterances);
  f.finish();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields f(j, "config");
  f.get("seed", c.seed);
  f.get("data_dir", c.data_dir);
  f.get("out_dir", c.out_dir);
  f.get("postprocess_window", c.postprocess_window);
  if (const json* s = f.sub("corpus")) c.corpus = corpus_config_from_json(*s);
  if (const json* s = f.sub("f0_model")) c.f0 = f0_config_from_json(*s);
  if (const json* s = f.sub("spectral_model")) c.spectral = spectral_config_from_json(*s);
  if (const json* s = f.sub("baseline_model")) c.baseline = baseline_config_from_json(*s);
  if (const json* s = f.sub("training")) {
    Fields t(*s, "training");
    if (const json* x = t.sub("f0")) c.train_f0 = train_config_from_json(*x, c.train_f0);
    if (const json* x = t.sub("spectral")) c.train_spectral = train_config_from_json(*x, c.train_spectral);
    if (const json* x = t.sub("baseline")) c.train_baseline = train_config_from_json(*x, c.train_baseline);
    t.finish();
  }
  f.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace darsvs
