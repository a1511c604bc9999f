#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "darsvs/f0_codec.hpp"
#include "darsvs/metrics.hpp"
#include "darsvs/postprocess.hpp"

namespace darsvs {

constexpr double kFrameRate = 200.0;  // 5 ms frame shift
constexpr int kMinMidi = 48;
constexpr int kMaxMidi = 72;

struct NoteEvent {
  int midi = -1;  // -1 marks a rest
  int duration_frames = 0;
  int phone_id = 0;  // 0 is silence

  bool is_rest() const { return midi < 0; }
  bool operator==(const NoteEvent&) const = default;
};

struct StyleParams {
  double vibrato_rate_hz = 5.5;
  double vibrato_depth_cents = 60.0;  // peak deviation
  double overshoot_cents = 40.0;
  double preparation_cents = 25.0;
  double fluctuation_std_cents = 6.0;
  int onset_ramp_frames = 12;   // pitch glide and energy attack
  int offset_ramp_frames = 10;  // energy release

  static StyleParams flat() { return {0, 0, 0, 0, 0, 0, 0}; }
};

struct CorpusConfig {
  std::uint64_t seed = 2019;
  int n_songs = 25;
  int utterances_per_song = 8;
  int min_notes = 3;
  int max_notes = 5;
  double tempo = 120.0;
  int n_phones = 12;
  StyleParams style;
  double spectral_noise = 0.02;
  double f0_coupling = 1.0;

  void validate() const;
};

enum class Split { train, validation, test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct Utterance {
  std::string id;
  int song = 0;
  Split split = Split::train;
  std::vector<NoteEvent> score;  // empty when loaded from disk
  int ctx_dim = 0;
  std::vector<float> ctx;        // [T x ctx_dim]
  F0Contour ref_f0;
  std::vector<float> spec;       // [T x kSpecDim]
  NoteContour note_f0;

  int frames() const { return static_cast<int>(ref_f0.size()); }
  std::span<const float> ctx_row(int t) const {
    return {ctx.data() + static_cast<std::size_t>(t) * ctx_dim, static_cast<std::size_t>(ctx_dim)};
  }
};

struct Dataset {
  CorpusConfig config;
  int ctx_dim = 0;
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> split(Split s) const;
  const Utterance* find(const std::string& id) const;
};

double midi_to_hz(int midi);

std::vector<NoteEvent> generate_score(std::uint64_t seed, int n_notes, double tempo, int n_phones = 12);
NoteContour note_contour(const std::vector<NoteEvent>& score);
F0Contour render_reference_f0(const std::vector<NoteEvent>& score, const StyleParams& style, std::uint64_t seed);

// Fixed per-phone MCC target.
std::array<double, kMccDim> phone_template(int phone_id);
// Half-width of the linear cross-fade between adjacent phone templates.
constexpr int kCoarticulationFrames = 8;
constexpr double kRestEnergy = -3.0;
constexpr double kRampFloorEnergy = -1.0;  // energy at the outer edge of attack/release ramps

struct SpectralRenderOptions {
  double noise_std = 0.02;
  double f0_coupling = 1.0;
  int onset_ramp_frames = 12;
  int offset_ramp_frames = 10;
};

// Row-major [T x kSpecDim]: 40 MCCs then energy.
std::vector<float> render_spectral(const std::vector<NoteEvent>& score, const F0Contour& ref_f0, std::uint64_t seed,
                                   const SpectralRenderOptions& opt = {});

int context_dim(int n_phones);
// Row-major [T x context_dim(n_phones)].
std::vector<float> encode_context(const std::vector<NoteEvent>& score, int n_phones);

Utterance make_utterance(const std::vector<NoteEvent>& score, const CorpusConfig& cfg, std::uint64_t seed);
Dataset build_corpus(const CorpusConfig& cfg);

// Per-dimension z-score statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dims() const { return mean.size(); }
  void apply(std::span<float> rows) const;
  void invert(std::span<float> rows) const;
};

NormStats compute_norm_stats(const std::vector<std::vector<float>>& sequences, int dims);
NormStats spectral_norm_stats(const std::vector<const Utterance*>& utts);

// On-disk utterance feature file, shared by datasets and predictions.
struct FeatureFile {
  int frames = 0;
  int ctx_dim = 0;
  int spec_dim = 0;
  std::vector<float> ctx, f0, vuv, spec, note_f0;
};

void write_feature_file(const std::filesystem::path& path, const FeatureFile& f);
FeatureFile read_feature_file(const std::filesystem::path& path);

FeatureFile to_feature_file(const Utterance& u);
F0Contour contour_of(const FeatureFile& f);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace darsvs
