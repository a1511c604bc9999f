#include "darsvs/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "darsvs/config.hpp"
#include "darsvs/errors.hpp"

namespace darsvs {

static_assert(std::endian::native == std::endian::little, "feature files are written in native little-endian order");

namespace {

constexpr std::array<int, 7> kMajorScale{0, 2, 4, 5, 7, 9, 11};
constexpr int kOvershootFrames = 24;
constexpr int kPreparationFrames = 20;
constexpr double kFluctuationPole = 0.9;
constexpr int kEdgeRestFrames = 40;
constexpr int kUnvoicedOnsetFrames = 12;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(c),
                    static_cast<std::uint32_t>(c >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<int> diatonic_pitches() {
  std::vector<int> p;
  for (int m = kMinMidi; m <= kMaxMidi; ++m)
    if (std::find(kMajorScale.begin(), kMajorScale.end(), m % 12) != kMajorScale.end()) p.push_back(m);
  return p;
}

// Phones whose syllable starts with an unvoiced consonant.
bool unvoiced_onset(int phone_id) { return phone_id > 0 && phone_id % 4 == 0; }

int sgn(int x) { return (x > 0) - (x < 0); }

const NoteEvent* voiced_neighbour(const std::vector<NoteEvent>& score, std::size_t i, int dir) {
  const long j = static_cast<long>(i) + dir;
  if (j < 0 || j >= static_cast<long>(score.size())) return nullptr;
  const NoteEvent& n = score[static_cast<std::size_t>(j)];
  return n.is_rest() ? nullptr : &n;
}

}  // namespace

void CorpusConfig::validate() const {
  if (n_songs < 3) throw ConfigError("corpus: n_songs must be >= 3 to form train/validation/test splits");
  if (utterances_per_song < 1) throw ConfigError("corpus: utterances_per_song must be >= 1");
  if (min_notes < 1 || max_notes < min_notes) throw ConfigError("corpus: invalid note-count range");
  if (!(tempo > 0)) throw ConfigError("corpus: tempo must be positive");
  if (n_phones < 2) throw ConfigError("corpus: n_phones must be >= 2");
  if (spectral_noise < 0) throw ConfigError("corpus: spectral_noise must be >= 0");
  if (style.onset_ramp_frames < 0 || style.offset_ramp_frames < 0) throw ConfigError("corpus: negative ramp length");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split: " + s);
}

std::vector<const Utterance*> Dataset::split(Split s) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances)
    if (u.split == s) out.push_back(&u);
  return out;
}

const Utterance* Dataset::find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

double midi_to_hz(int midi) { return 440.0 * std::exp2((midi - 69) / 12.0); }

std::vector<NoteEvent> generate_score(std::uint64_t seed, int n_notes, double tempo, int n_phones) {
  if (n_notes < 1) throw ConfigError("generate_score: n_notes must be >= 1");
  static const std::vector<int> pitches = diatonic_pitches();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> start(0, static_cast<int>(pitches.size()) - 1);
  std::discrete_distribution<int> step({1, 2, 4, 3, 4, 2, 1});  // -3..+3 scale degrees
  std::uniform_int_distribution<int> dur(40, 200);
  std::uniform_int_distribution<int> phone(1, n_phones - 1);
  std::bernoulli_distribution rest(0.1);
  const double stretch = 120.0 / tempo;

  std::vector<NoteEvent> score;
  int idx = start(rng);
  for (int i = 0; i < n_notes; ++i) {
    NoteEvent n;
    n.duration_frames = std::clamp(static_cast<int>(std::lround(dur(rng) * stretch)), 40, 200);
    const bool is_rest = rest(rng) && i > 0;
    idx = std::clamp(idx + step(rng) - 3, 0, static_cast<int>(pitches.size()) - 1);
    const int ph = phone(rng);
    if (!is_rest) {
      n.midi = pitches[static_cast<std::size_t>(idx)];
      n.phone_id = ph;
    }
    score.push_back(n);
  }
  return score;
}

NoteContour note_contour(const std::vector<NoteEvent>& score) {
  NoteContour out;
  for (const auto& n : score) out.insert(out.end(), static_cast<std::size_t>(n.duration_frames), n.is_rest() ? 0.0 : midi_to_hz(n.midi));
  return out;
}

F0Contour render_reference_f0(const std::vector<NoteEvent>& score, const StyleParams& style, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double innovation = std::sqrt(1.0 - kFluctuationPole * kFluctuationPole) * style.fluctuation_std_cents;
  F0Contour out;
  double fluct = 0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    const NoteEvent& note = score[i];
    const int dur = note.duration_frames;
    // draw per-note randomness unconditionally so streams stay aligned
    const double phi = phase(rng);
    if (note.is_rest()) {
      out.f0_hz.insert(out.f0_hz.end(), static_cast<std::size_t>(dur), 0.0);
      out.voiced.insert(out.voiced.end(), static_cast<std::size_t>(dur), false);
      for (int k = 0; k < dur; ++k) gauss(rng);
      fluct = 0;
      continue;
    }
    const NoteEvent* prev = voiced_neighbour(score, i, -1);
    const NoteEvent* next = voiced_neighbour(score, i, +1);
    const int from = prev && prev->midi != note.midi ? prev->midi : note.midi;
    const int to = next && next->midi != note.midi ? next->midi : note.midi;
    const double base = midi_to_hz(note.midi);
    const int ramp = style.onset_ramp_frames;
    const int vib_start = dur / 3;
    const int vib_ramp = std::max(1, dur / 6);
    for (int tau = 0; tau < dur; ++tau) {
      double cents = 0;
      if (from != note.midi) {
        if (tau < ramp) cents += (from - note.midi) * 100.0 * 0.5 * (1.0 + std::cos(std::numbers::pi * tau / ramp));
        if (tau >= ramp && tau < ramp + kOvershootFrames)
          cents += sgn(note.midi - from) * style.overshoot_cents * std::sin(std::numbers::pi * (tau - ramp) / kOvershootFrames);
      }
      if (to != note.midi && tau >= dur - kPreparationFrames)
        cents -= sgn(to - note.midi) * style.preparation_cents *
                 std::sin(std::numbers::pi * (tau - (dur - kPreparationFrames)) / kPreparationFrames);
      if (tau >= vib_start) {
        const double amp = style.vibrato_depth_cents * std::min(1.0, static_cast<double>(tau - vib_start) / vib_ramp);
        cents += amp * std::sin(2.0 * std::numbers::pi * style.vibrato_rate_hz * (tau - vib_start) / kFrameRate + phi);
      }
      fluct = kFluctuationPole * fluct + innovation * gauss(rng);
      cents += fluct;
      const bool voiced = !(unvoiced_onset(note.phone_id) && tau < kUnvoicedOnsetFrames);
      out.voiced.push_back(voiced);
      out.f0_hz.push_back(voiced ? base * std::exp2(cents / 1200.0) : 0.0);
    }
  }
  return out;
}

std::array<double, kMccDim> phone_template(int phone_id) {
  std::mt19937_64 rng(mix_seed(0x5eedULL, static_cast<std::uint64_t>(phone_id) + 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::array<double, kMccDim> t{};
  const double gain = phone_id == 0 ? 0.2 : 1.0;
  for (int i = 0; i < kMccDim; ++i) t[static_cast<std::size_t>(i)] = gain * gauss(rng) / (1.0 + 0.25 * i);
  return t;
}

std::vector<float> render_spectral(const std::vector<NoteEvent>& score, const F0Contour& ref_f0, std::uint64_t seed,
                                   const SpectralRenderOptions& opt) {
  static constexpr std::array<double, 6> kCoupling{0.3, -0.2, 0.15, 0.1, -0.05, 0.05};
  const NoteContour notes = note_contour(score);
  const int T = static_cast<int>(notes.size());
  if (static_cast<int>(ref_f0.size()) != T) throw DimensionError("render_spectral: F0 length differs from score");

  std::vector<int> note_of(static_cast<std::size_t>(T));
  std::vector<int> starts;
  {
    int t = 0;
    for (std::size_t i = 0; i < score.size(); ++i) {
      starts.push_back(t);
      for (int k = 0; k < score[i].duration_frames; ++k) note_of[static_cast<std::size_t>(t++)] = static_cast<int>(i);
    }
  }
  std::vector<std::array<double, kMccDim>> templates;
  for (const auto& n : score) templates.push_back(phone_template(n.phone_id));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<float> out(static_cast<std::size_t>(T) * kSpecDim);
  const int L = kCoarticulationFrames;
  for (int t = 0; t < T; ++t) {
    const int i = note_of[static_cast<std::size_t>(t)];
    const NoteEvent& note = score[static_cast<std::size_t>(i)];
    const int start = starts[static_cast<std::size_t>(i)];
    const int end = start + note.duration_frames;
    std::array<double, kMccDim> mcc = templates[static_cast<std::size_t>(i)];
    auto blend = [&](int other, double alpha) {
      const auto& o = templates[static_cast<std::size_t>(other)];
      for (std::size_t c = 0; c < mcc.size(); ++c) mcc[c] = (1 - alpha) * mcc[c] + alpha * o[c];
    };
    // linear cross-fade across each boundary, weight 1/2 halfway between its two frames
    if (i + 1 < static_cast<int>(score.size()) && t >= end - L) blend(i + 1, (t - (end - L) + 0.5) / (2.0 * L));
    if (i > 0 && t < start + L) blend(i - 1, 0.5 - (t - start + 0.5) / (2.0 * L));

    double cents = 0;
    const auto st = static_cast<std::size_t>(t);
    if (ref_f0.voiced[st] && notes[st] > 0) cents = 1200.0 * std::log2(ref_f0.f0_hz[st] / notes[st]);
    for (std::size_t c = 0; c < kCoupling.size(); ++c) mcc[c] += opt.f0_coupling * kCoupling[c] * cents / 100.0;

    double energy = kRestEnergy;
    if (!note.is_rest()) {
      const double target = 1.0 + 0.01 * (note.midi - 60) + 0.02 * cents / 100.0;
      const int tau = t - start;
      energy = target;
      if (opt.onset_ramp_frames > 0 && tau < opt.onset_ramp_frames)
        energy = kRampFloorEnergy + (target - kRampFloorEnergy) * (tau + 1) / opt.onset_ramp_frames;
      const int left = note.duration_frames - tau;
      if (opt.offset_ramp_frames > 0 && left <= opt.offset_ramp_frames)
        energy = std::min(energy, kRampFloorEnergy + (target - kRampFloorEnergy) * left / opt.offset_ramp_frames);
    }
    float* row = out.data() + st * kSpecDim;
    for (int c = 0; c < kMccDim; ++c)
      row[c] = static_cast<float>(mcc[static_cast<std::size_t>(c)] + (opt.noise_std > 0 ? opt.noise_std * gauss(rng) : 0.0));
    row[kMccDim] = static_cast<float>(energy + (opt.noise_std > 0 ? opt.noise_std * gauss(rng) : 0.0));
  }
  return out;
}

int context_dim(int n_phones) { return 3 * n_phones + 13 + 4 + 4 + 1 + 1 + 2; }

std::vector<float> encode_context(const std::vector<NoteEvent>& score, int n_phones) {
  const int D = context_dim(n_phones);
  int T = 0;
  for (const auto& n : score) T += n.duration_frames;
  std::vector<float> ctx(static_cast<std::size_t>(T) * D, 0.0f);
  int t = 0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    const NoteEvent& n = score[i];
    const NoteEvent* prev = i > 0 ? &score[i - 1] : nullptr;
    const NoteEvent* next = i + 1 < score.size() ? &score[i + 1] : nullptr;
    const int prev_phone = prev ? prev->phone_id : 0;
    const int next_phone = next ? next->phone_id : 0;
    const int pitch_class = n.is_rest() ? 12 : n.midi % 12;
    const int octave = n.is_rest() ? 0 : std::clamp(n.midi / 12 - 3, 1, 3);
    const double dur = n.duration_frames;
    auto rel = [&](const NoteEvent* o) { return o && !o->is_rest() && !n.is_rest() ? (o->midi - n.midi) / 12.0 : 0.0; };
    for (int tau = 0; tau < n.duration_frames; ++tau, ++t) {
      float* row = ctx.data() + static_cast<std::size_t>(t) * D;
      int off = 0;
      row[off + std::clamp(n.phone_id, 0, n_phones - 1)] = 1;
      off += n_phones;
      row[off + std::clamp(prev_phone, 0, n_phones - 1)] = 1;
      off += n_phones;
      row[off + std::clamp(next_phone, 0, n_phones - 1)] = 1;
      off += n_phones;
      row[off + pitch_class] = 1;
      off += 13;
      row[off + octave] = 1;
      off += 4;
      row[off++] = static_cast<float>(tau / dur);
      row[off++] = static_cast<float>((dur - 1 - tau) / dur);
      row[off++] = static_cast<float>(tau / kFrameRate);
      row[off++] = static_cast<float>((dur - 1 - tau) / kFrameRate);
      row[off++] = static_cast<float>(dur / kFrameRate);
      row[off++] = static_cast<float>(n.is_rest() ? 0.0 : (n.midi - 60) / 12.0);
      row[off++] = static_cast<float>(rel(prev));
      row[off++] = static_cast<float>(rel(next));
    }
  }
  return ctx;
}

Utterance make_utterance(const std::vector<NoteEvent>& score, const CorpusConfig& cfg, std::uint64_t seed) {
  Utterance u;
  u.score = score;
  u.ctx_dim = context_dim(cfg.n_phones);
  u.ctx = encode_context(score, cfg.n_phones);
  u.ref_f0 = render_reference_f0(score, cfg.style, mix_seed(seed, 1));
  SpectralRenderOptions opt;
  opt.noise_std = cfg.spectral_noise;
  opt.f0_coupling = cfg.f0_coupling;
  opt.onset_ramp_frames = cfg.style.onset_ramp_frames;
  opt.offset_ramp_frames = cfg.style.offset_ramp_frames;
  u.spec = render_spectral(score, u.ref_f0, mix_seed(seed, 2), opt);
  u.note_f0 = note_contour(score);
  return u;
}

Dataset build_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.ctx_dim = context_dim(cfg.n_phones);

  const int n_val = std::max(1, static_cast<int>(std::lround(cfg.n_songs * 2.0 / 25.0)));
  const int n_test = std::max(1, static_cast<int>(std::lround(cfg.n_songs * 3.0 / 25.0)));
  if (cfg.n_songs - n_val - n_test < 1) throw ConfigError("corpus: too few songs for a training split");
  std::vector<int> order(static_cast<std::size_t>(cfg.n_songs));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(cfg.seed, 0xC0FFEE));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<Split> song_split(static_cast<std::size_t>(cfg.n_songs), Split::train);
  for (int i = 0; i < n_val; ++i) song_split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::validation;
  for (int i = n_val; i < n_val + n_test; ++i) song_split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::test;

  for (int song = 0; song < cfg.n_songs; ++song) {
    std::mt19937_64 song_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(song), 0x50C6));
    const double tempo = cfg.tempo * std::uniform_real_distribution<double>(0.85, 1.15)(song_rng);
    std::uniform_int_distribution<int> notes(cfg.min_notes, cfg.max_notes);
    for (int k = 0; k < cfg.utterances_per_song; ++k) {
      const std::uint64_t useed = mix_seed(cfg.seed, static_cast<std::uint64_t>(song), static_cast<std::uint64_t>(k) + 1);
      std::vector<NoteEvent> score;
      score.push_back({-1, kEdgeRestFrames, 0});
      for (const auto& n : generate_score(useed, notes(song_rng), tempo, cfg.n_phones)) score.push_back(n);
      score.push_back({-1, kEdgeRestFrames, 0});
      Utterance u = make_utterance(score, cfg, useed);
      char id[32];
      std::snprintf(id, sizeof id, "song%03d_utt%02d", song, k);
      u.id = id;
      u.song = song;
      u.split = song_split[static_cast<std::size_t>(song)];
      ds.utterances.push_back(std::move(u));
    }
  }
  return ds;
}

void NormStats::apply(std::span<float> rows) const {
  const std::size_t d = dims();
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = static_cast<float>((rows[i] - mean[i % d]) / stddev[i % d]);
}

void NormStats::invert(std::span<float> rows) const {
  const std::size_t d = dims();
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<float>(rows[i] * stddev[i % d] + mean[i % d]);
}

NormStats compute_norm_stats(const std::vector<std::vector<float>>& sequences, int dims) {
  NormStats s{std::vector<double>(static_cast<std::size_t>(dims)), std::vector<double>(static_cast<std::size_t>(dims))};
  std::vector<double> sum(static_cast<std::size_t>(dims)), sum2(static_cast<std::size_t>(dims));
  long n = 0;
  for (const auto& seq : sequences) {
    if (seq.size() % static_cast<std::size_t>(dims) != 0) throw DimensionError("norm stats: ragged sequence");
    for (std::size_t i = 0; i < seq.size(); ++i) sum[i % static_cast<std::size_t>(dims)] += seq[i];
    n += static_cast<long>(seq.size() / static_cast<std::size_t>(dims));
  }
  if (n == 0) throw DataError("norm stats: no frames");
  for (int d = 0; d < dims; ++d) s.mean[static_cast<std::size_t>(d)] = sum[static_cast<std::size_t>(d)] / n;
  for (const auto& seq : sequences)
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const double c = seq[i] - s.mean[i % static_cast<std::size_t>(dims)];
      sum2[i % static_cast<std::size_t>(dims)] += c * c;
    }
  for (int d = 0; d < dims; ++d) {
    const double sd = std::sqrt(sum2[static_cast<std::size_t>(d)] / n);
    s.stddev[static_cast<std::size_t>(d)] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

NormStats spectral_norm_stats(const std::vector<const Utterance*>& utts) {
  std::vector<std::vector<float>> seqs;
  for (const auto* u : utts) seqs.push_back(u->spec);
  return compute_norm_stats(seqs, kSpecDim);
}

namespace {

constexpr char kFeatureMagic[4] = {'D', 'S', 'V', 'U'};
constexpr std::uint32_t kFeatureVersion = 1;

void write_floats(std::ofstream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& is, std::vector<float>& v, std::size_t n, const std::filesystem::path& path) {
  v.resize(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw DataError("truncated feature file: " + path.string());
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const FeatureFile& f) {
  const auto T = static_cast<std::size_t>(f.frames);
  if (f.ctx.size() != T * static_cast<std::size_t>(f.ctx_dim) || f.f0.size() != T || f.vuv.size() != T ||
      f.spec.size() != T * static_cast<std::size_t>(f.spec_dim) || f.note_f0.size() != T)
    throw DimensionError("feature file arrays do not match the header for " + path.string());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kFeatureMagic, 4);
  const std::uint32_t header[4] = {kFeatureVersion, static_cast<std::uint32_t>(f.frames),
                                   static_cast<std::uint32_t>(f.ctx_dim), static_cast<std::uint32_t>(f.spec_dim)};
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  write_floats(os, f.ctx);
  write_floats(os, f.f0);
  write_floats(os, f.vuv);
  write_floats(os, f.spec);
  write_floats(os, f.note_f0);
  if (!os) throw DataError("failed writing " + path.string());
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature file " + path.string());
  char magic[4];
  std::uint32_t header[4];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(header), sizeof header);
  if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0) throw DataError("not a feature file: " + path.string());
  if (header[0] != kFeatureVersion) throw DataError("unsupported feature file version in " + path.string());
  FeatureFile f;
  f.frames = static_cast<int>(header[1]);
  f.ctx_dim = static_cast<int>(header[2]);
  f.spec_dim = static_cast<int>(header[3]);
  const auto T = static_cast<std::size_t>(f.frames);
  read_floats(is, f.ctx, T * header[2], path);
  read_floats(is, f.f0, T, path);
  read_floats(is, f.vuv, T, path);
  read_floats(is, f.spec, T * header[3], path);
  read_floats(is, f.note_f0, T, path);
  return f;
}

FeatureFile to_feature_file(const Utterance& u) {
  FeatureFile f;
  f.frames = u.frames();
  f.ctx_dim = u.ctx_dim;
  f.spec_dim = kSpecDim;
  f.ctx = u.ctx;
  f.spec = u.spec;
  for (int t = 0; t < u.frames(); ++t) {
    f.f0.push_back(static_cast<float>(u.ref_f0.f0_hz[static_cast<std::size_t>(t)]));
    f.vuv.push_back(u.ref_f0.voiced[static_cast<std::size_t>(t)] ? 1.0f : 0.0f);
    f.note_f0.push_back(static_cast<float>(u.note_f0[static_cast<std::size_t>(t)]));
  }
  return f;
}

F0Contour contour_of(const FeatureFile& f) {
  F0Contour c;
  for (int t = 0; t < f.frames; ++t) {
    const bool v = f.vuv[static_cast<std::size_t>(t)] > 0.5f;
    c.voiced.push_back(v);
    c.f0_hz.push_back(v ? static_cast<double>(f.f0[static_cast<std::size_t>(t)]) : 0.0);
  }
  return c;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  manifest << "# darsvs dataset manifest v1\n";
  manifest << "frame_rate " << kFrameRate << "\n";
  manifest << "ctx_dim " << ds.ctx_dim << "\n";
  manifest << "spec_dim " << kSpecDim << "\n";
  manifest << "# utterance <id> <split> <song> <frames> <file>\n";
  for (const auto& u : ds.utterances) {
    const std::string file = u.id + ".bin";
    write_feature_file(dir / file, to_feature_file(u));
    manifest << "utterance " << u.id << ' ' << split_name(u.split) << ' ' << u.song << ' ' << u.frames() << ' ' << file
             << "\n";
  }
  std::ofstream cfg(dir / "corpus.json", std::ios::trunc);
  cfg << corpus_config_to_json(ds.config).dump(2) << "\n";
  if (!manifest || !cfg) throw DataError("failed writing dataset in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("no dataset manifest in " + dir.string());
  Dataset ds;
  if (std::ifstream cfg(dir / "corpus.json"); cfg) ds.config = corpus_config_from_json(nlohmann::json::parse(cfg));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "ctx_dim") {
      ls >> ds.ctx_dim;
    } else if (key == "utterance") {
      Utterance u;
      std::string split, file;
      int frames = 0;
      ls >> u.id >> split >> u.song >> frames >> file;
      if (!ls) throw DataError("malformed manifest line: " + line);
      u.split = parse_split(split);
      const FeatureFile f = read_feature_file(dir / file);
      if (f.frames != frames || f.ctx_dim != ds.ctx_dim || f.spec_dim != kSpecDim)
        throw DataError("feature file " + file + " disagrees with the manifest");
      u.ctx_dim = f.ctx_dim;
      u.ctx = f.ctx;
      u.spec = f.spec;
      u.ref_f0 = contour_of(f);
      u.note_f0.assign(f.note_f0.begin(), f.note_f0.end());
      ds.utterances.push_back(std::move(u));
    }
  }
  return ds;
}

}  // namespace darsvs
