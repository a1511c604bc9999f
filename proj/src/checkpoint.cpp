#include "darsvs/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "darsvs/errors.hpp"

namespace darsvs {

static_assert(std::endian::native == std::endian::little, "checkpoints store native little-endian payloads");

namespace {

constexpr const char* kMagic = "DARSVS-CHECKPOINT 1";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
void append_raw(std::string& out, const std::vector<T>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::string line() {
    const auto nl = s_.find('\n', pos_);
    if (nl == std::string::npos) throw DataError("checkpoint truncated: missing line");
    std::string l = s_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return l;
  }

  // Expects "<key> <rest>" and returns rest.
  std::string field(const std::string& key) {
    const std::string l = line();
    if (l.rfind(key + " ", 0) != 0) throw DataError("checkpoint: expected '" + key + "', found '" + l + "'");
    return l.substr(key.size() + 1);
  }

  template <class T>
  std::vector<T> raw(std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    if (pos_ + bytes > s_.size()) throw DataError("checkpoint truncated in a payload");
    std::vector<T> v(n);
    std::memcpy(v.data(), s_.data() + pos_, bytes);
    pos_ += bytes;
    return v;
  }

  void newline() {
    if (pos_ >= s_.size() || s_[pos_] != '\n') throw DataError("checkpoint: payload not terminated");
    ++pos_;
  }

  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

template <class T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError(std::string("checkpoint: bad ") + what + " '" + s + "'");
  return v;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  return {std::istream_iterator<std::string>(is), std::istream_iterator<std::string>()};
}

void require_kind(const Checkpoint& ck, ModelKind k) {
  if (ck.kind != kind_name(k))
    throw DataError("checkpoint holds a '" + ck.kind + "' model but '" + kind_name(k) + "' was requested");
}

void norm_to_stats(Checkpoint& ck, const NormStats& n, const std::string& prefix) {
  ck.stats.push_back({prefix + "_mean", n.mean});
  ck.stats.push_back({prefix + "_stddev", n.stddev});
}

NormStats norm_from_stats(const Checkpoint& ck, const std::string& prefix) {
  return {ck.stat(prefix + "_mean").values, ck.stat(prefix + "_stddev").values};
}

template <class Model>
Checkpoint base_checkpoint(ModelKind kind, const Model& m, nlohmann::json model_cfg, std::uint64_t seed, int epoch,
                           double best_valid, const AdamState* opt) {
  Checkpoint ck;
  ck.kind = kind_name(kind);
  ck.seed = seed;
  ck.epoch = epoch;
  ck.best_valid = best_valid;
  ck.config = {{"ctx_dim", m.ctx_dim()}, {"model", std::move(model_cfg)}};
  store_params(ck, m.params());
  if (opt) ck.optimizer = *opt;
  return ck;
}

int ctx_dim_of(const Checkpoint& ck) {
  try {
    return ck.config.at("ctx_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
}

}  // namespace

const Checkpoint::NamedStats& Checkpoint::stat(const std::string& name) const {
  for (const auto& s : stats)
    if (s.name == name) return s;
  throw DataError("checkpoint has no statistics named " + name);
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out;
  out += kMagic;
  out += "\nkind " + ck.kind;
  out += "\nseed " + std::to_string(ck.seed);
  out += "\nepoch " + std::to_string(ck.epoch);
  out += "\nbest_valid " + format_double(ck.best_valid);
  out += "\nconfig " + ck.config.dump();
  out += "\ntensors " + std::to_string(ck.tensors.size()) + "\n";
  for (const auto& t : ck.tensors) {
    out += "tensor " + t.name + " " + std::to_string(t.shape.size());
    for (int d : t.shape) out += " " + std::to_string(d);
    out += "\n";
    append_raw(out, t.data);
    out += "\n";
  }
  out += "stats " + std::to_string(ck.stats.size()) + "\n";
  for (const auto& s : ck.stats) {
    out += "stat " + s.name + " " + std::to_string(s.values.size()) + "\n";
    append_raw(out, s.values);
    out += "\n";
  }
  if (ck.optimizer) {
    out += "optimizer " + std::to_string(ck.optimizer->step_count) + " " + std::to_string(ck.optimizer->moments.size()) +
           "\n";
    for (const auto& m : ck.optimizer->moments) {
      out += "moment " + m.name + " " + std::to_string(m.first.size()) + "\n";
      append_raw(out, m.first);
      append_raw(out, m.second);
      out += "\n";
    }
  } else {
    out += "optimizer none\n";
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.line() != kMagic) throw DataError("not a darsvs checkpoint (bad magic or version)");
  Checkpoint ck;
  ck.kind = r.field("kind");
  ck.seed = parse_number<std::uint64_t>(r.field("seed"), "seed");
  ck.epoch = parse_number<int>(r.field("epoch"), "epoch");
  ck.best_valid = parse_number<double>(r.field("best_valid"), "best_valid");
  try {
    ck.config = nlohmann::json::parse(r.field("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  const auto n_tensors = parse_number<std::size_t>(r.field("tensors"), "tensor count");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    const auto w = words(r.field("tensor"));
    if (w.size() < 2) throw DataError("checkpoint: malformed tensor record");
    Checkpoint::NamedTensor t;
    t.name = w[0];
    const auto rank = parse_number<std::size_t>(w[1], "rank");
    if (w.size() != 2 + rank) throw DataError("checkpoint: tensor " + t.name + " has a malformed shape");
    std::size_t count = 1;
    for (std::size_t k = 0; k < rank; ++k) {
      t.shape.push_back(parse_number<int>(w[2 + k], "dimension"));
      count *= static_cast<std::size_t>(t.shape.back());
    }
    t.data = r.raw<float>(count);
    r.newline();
    ck.tensors.push_back(std::move(t));
  }
  const auto n_stats = parse_number<std::size_t>(r.field("stats"), "stats count");
  for (std::size_t i = 0; i < n_stats; ++i) {
    const auto w = words(r.field("stat"));
    if (w.size() != 2) throw DataError("checkpoint: malformed stat record");
    Checkpoint::NamedStats s{w[0], r.raw<double>(parse_number<std::size_t>(w[1], "stat length"))};
    r.newline();
    ck.stats.push_back(std::move(s));
  }
  const auto opt = words(r.field("optimizer"));
  if (!(opt.size() == 1 && opt[0] == "none")) {
    if (opt.size() != 2) throw DataError("checkpoint: malformed optimizer record");
    AdamState st;
    st.step_count = parse_number<long>(opt[0], "step count");
    const auto n = parse_number<std::size_t>(opt[1], "moment count");
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = words(r.field("moment"));
      if (w.size() != 2) throw DataError("checkpoint: malformed moment record");
      const auto len = parse_number<std::size_t>(w[1], "moment length");
      AdamMoments m{w[0], r.raw<double>(len), r.raw<double>(len)};
      r.newline();
      st.moments.push_back(std::move(m));
    }
    ck.optimizer = std::move(st);
  }
  if (r.line() != "end" || !r.done()) throw DataError("checkpoint: trailing data after records");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(ck);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void store_params(Checkpoint& ck, const ParameterSet<float>& ps) {
  ck.tensors.clear();
  for (const auto& p : ps) ck.tensors.push_back({p->name, p->value.shape(), p->value.storage()});
}

void load_params(ParameterSet<float>& ps, const Checkpoint& ck) {
  if (ck.tensors.size() != ps.size())
    throw DataError("checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                    std::to_string(ps.size()));
  for (const auto& t : ck.tensors) {
    auto* p = ps.find(t.name);
    if (!p) throw DataError("checkpoint tensor " + t.name + " is not a model parameter");
    if (p->value.shape() != t.shape)
      throw DataError("checkpoint tensor " + t.name + " has shape " + shape_string(t.shape) + ", model expects " +
                      shape_string(p->value.shape()));
    p->value = Tensor<float>(t.shape, t.data);
  }
}

Checkpoint make_checkpoint(const TrainedF0& m, std::uint64_t seed, int epoch, double best_valid, const AdamState* opt) {
  return base_checkpoint(ModelKind::dar_f0, *m.model, to_json(m.model->config()), seed, epoch, best_valid, opt);
}

Checkpoint make_checkpoint(const TrainedSpectral& m, std::uint64_t seed, int epoch, double best_valid,
                           const AdamState* opt) {
  auto ck = base_checkpoint(ModelKind::dar_spectral, *m.model, to_json(m.model->config()), seed, epoch, best_valid, opt);
  norm_to_stats(ck, m.norm, "spec");
  return ck;
}

Checkpoint make_checkpoint(const TrainedBaseline& m, std::uint64_t seed, int epoch, double best_valid,
                           const AdamState* opt) {
  auto ck = base_checkpoint(ModelKind::baseline, *m.model, to_json(m.model->config()), seed, epoch, best_valid, opt);
  norm_to_stats(ck, m.norm, "target");
  ck.stats.push_back({"mlpg_variance", m.mlpg_variance});
  return ck;
}

TrainedF0 restore_f0(const Checkpoint& ck) {
  require_kind(ck, ModelKind::dar_f0);
  TrainedF0 t;
  t.model = std::make_unique<F0Model<float>>(f0_config_from_json(ck.config.at("model")), ctx_dim_of(ck), ck.seed);
  load_params(t.model->params(), ck);
  return t;
}

TrainedSpectral restore_spectral(const Checkpoint& ck) {
  require_kind(ck, ModelKind::dar_spectral);
  TrainedSpectral t;
  t.model = std::make_unique<SpectralModel<float>>(spectral_config_from_json(ck.config.at("model")), ctx_dim_of(ck),
                                                   ck.seed);
  load_params(t.model->params(), ck);
  t.norm = norm_from_stats(ck, "spec");
  return t;
}

TrainedBaseline restore_baseline(const Checkpoint& ck) {
  require_kind(ck, ModelKind::baseline);
  TrainedBaseline t;
  t.model = std::make_unique<BaselineModel<float>>(baseline_config_from_json(ck.config.at("model")), ctx_dim_of(ck),
                                                   ck.seed);
  load_params(t.model->params(), ck);
  t.norm = norm_from_stats(ck, "target");
  t.mlpg_variance = ck.stat("mlpg_variance").values;
  return t;
}

}  // namespace darsvs
