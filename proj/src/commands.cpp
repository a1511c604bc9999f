#include "darsvs/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <ostream>

#include "darsvs/errors.hpp"

namespace darsvs {

namespace {

const TrainConfig& train_config(const RunConfig& cfg, ModelKind kind) {
  switch (kind) {
    case ModelKind::dar_f0: return cfg.train_f0;
    case ModelKind::dar_spectral: return cfg.train_spectral;
    case ModelKind::baseline: return cfg.train_baseline;
  }
  throw ConfigError("unknown model kind");
}

struct Splits {
  std::vector<const Utterance*> train, valid;
};

Splits training_splits(const Dataset& ds, const TrainConfig& tc) {
  Splits s{limited_split(ds, Split::train, tc.max_train_utterances),
           limited_split(ds, Split::validation, tc.max_valid_utterances)};
  if (s.train.empty()) throw DataError("dataset has no training utterances");
  return s;
}

TrainOptions options_for(const TrainConfig& tc, std::uint64_t seed, const Checkpoint* resume,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainOptions o;
  o.config = tc;
  o.seed = seed;
  o.on_epoch = on_epoch;
  if (resume) {
    if (!resume->optimizer) throw DataError("checkpoint has no optimizer state to resume from");
    if (resume->seed != seed) throw DataError("checkpoint seed differs from the configured seed");
    o.start_epoch = resume->epoch;
    o.resume = &*resume->optimizer;
    o.resume_best_valid = resume->best_valid;
  }
  return o;
}

void require_ctx_dim(const Dataset& ds, int ctx_dim) {
  if (ds.ctx_dim != ctx_dim)
    throw DataError("model expects context dimension " + std::to_string(ctx_dim) + " but the dataset has " +
                    std::to_string(ds.ctx_dim));
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

fs::path prediction_path(const fs::path& dir, const std::string& id) { return dir / (id + ".bin"); }

FeatureFile read_prediction(const fs::path& dir, const Utterance& u) {
  const fs::path p = prediction_path(dir, u.id);
  if (!fs::exists(p)) throw DataError("missing prediction for utterance " + u.id + " (" + p.string() + ")");
  FeatureFile f = read_feature_file(p);
  if (f.frames != u.frames())
    throw DataError("prediction for utterance " + u.id + " has " + std::to_string(f.frames) + " frames, reference has " +
                    std::to_string(u.frames()));
  return f;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

SweepCell run_cell(ModelKind kind, RunConfig cfg, const Dataset& ds, Split eval_split, int K, int h, int N) {
  SweepCell cell{K, h, N, 0, 0, {}};
  if (kind == ModelKind::dar_f0) {
    cfg.f0.history_len = K;
  } else {
    cfg.spectral.prenet.history_len = K;
    cfg.spectral.prenet.heads = h;
    cfg.spectral.prenet.attn_layers = N;
  }
  auto trained = train_model(kind, cfg, ds, nullptr);
  cell.best_valid = trained.result.best_valid;
  cell.best_epoch = trained.result.best_epoch;
  EvalAccumulator acc;
  if (kind == ModelKind::dar_f0) {
    const auto m = restore_f0(trained.checkpoint);
    for (const auto* u : ds.split(eval_split))
      acc.add_f0(m.model->generate(context_tensor(*u)).contour, u->ref_f0, u->note_f0);
  } else {
    const auto m = restore_spectral(trained.checkpoint);
    for (const auto* u : ds.split(eval_split)) {
      auto spec = m.model->generate(context_tensor(*u)).storage();
      m.norm.invert(spec);
      acc.add_spectral(spec, u->spec, u->frames());
    }
  }
  cell.report = EvalReport::from(acc);
  return cell;
}

}  // namespace

SplitCounts split_counts(const Dataset& ds) {
  SplitCounts c;
  for (const auto& u : ds.utterances) {
    if (u.split == Split::train) ++c.train;
    if (u.split == Split::validation) ++c.validation;
    if (u.split == Split::test) ++c.test;
  }
  return c;
}

SplitCounts cmd_build_corpus(const RunConfig& cfg, const fs::path& out_dir) {
  const Dataset ds = build_corpus(cfg.corpus);
  write_dataset(ds, out_dir);
  return split_counts(ds);
}

std::vector<const Utterance*> limited_split(const Dataset& ds, Split s, int limit) {
  auto v = ds.split(s);
  if (limit > 0 && static_cast<int>(v.size()) > limit) v.resize(static_cast<std::size_t>(limit));
  return v;
}

TrainedModel train_model(ModelKind kind, const RunConfig& cfg, const Dataset& ds, const Checkpoint* resume,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  const TrainConfig& tc = train_config(cfg, kind);
  const Splits sp = training_splits(ds, tc);
  const TrainOptions opt = options_for(tc, cfg.seed, resume, on_epoch);
  TrainedModel out;
  auto finish = [&](const auto& trained) {
    out.checkpoint = make_checkpoint(trained, cfg.seed, out.result.best_epoch, out.result.best_valid,
                                     &out.result.best_optimizer);
  };
  switch (kind) {
    case ModelKind::dar_f0: {
      TrainedF0 m = resume ? restore_f0(*resume) : TrainedF0{std::make_unique<F0Model<float>>(cfg.f0, ds.ctx_dim, cfg.seed)};
      require_ctx_dim(ds, m.model->ctx_dim());
      const auto q = m.model->config().quantizer;
      out.result = train(*m.model, make_f0_samples(sp.train, q), make_f0_samples(sp.valid, q), opt);
      finish(m);
      break;
    }
    case ModelKind::dar_spectral: {
      TrainedSpectral m;
      if (resume) {
        m = restore_spectral(*resume);
      } else {
        m.model = std::make_unique<SpectralModel<float>>(cfg.spectral, ds.ctx_dim, cfg.seed);
        m.norm = spectral_norm_stats(sp.train);
      }
      require_ctx_dim(ds, m.model->ctx_dim());
      out.result =
          train(*m.model, make_spectral_samples(sp.train, m.norm), make_spectral_samples(sp.valid, m.norm), opt);
      finish(m);
      break;
    }
    case ModelKind::baseline: {
      TrainedBaseline m;
      if (resume) {
        m = restore_baseline(*resume);
      } else {
        m.model = std::make_unique<BaselineModel<float>>(cfg.baseline, ds.ctx_dim, cfg.seed);
        m.norm = baseline_norm_stats(sp.train);
      }
      require_ctx_dim(ds, m.model->ctx_dim());
      const auto train_samples = make_baseline_samples(sp.train, m.norm);
      out.result = train(*m.model, train_samples, make_baseline_samples(sp.valid, m.norm), opt);
      m.mlpg_variance = baseline_residual_variance(*m.model, train_samples);
      finish(m);
      break;
    }
  }
  return out;
}

double checkpoint_validation_loss(const Checkpoint& ck, const RunConfig& cfg, const Dataset& ds) {
  const ModelKind kind = parse_kind(ck.kind);
  const Splits sp = training_splits(ds, train_config(cfg, kind));
  const auto& sel = sp.valid.empty() ? sp.train : sp.valid;
  switch (kind) {
    case ModelKind::dar_f0: {
      const auto m = restore_f0(ck);
      return mean_loss(*m.model, make_f0_samples(sel, m.model->config().quantizer));
    }
    case ModelKind::dar_spectral: {
      const auto m = restore_spectral(ck);
      return mean_loss(*m.model, make_spectral_samples(sel, m.norm));
    }
    case ModelKind::baseline: {
      const auto m = restore_baseline(ck);
      return mean_loss(*m.model, make_baseline_samples(sel, m.norm));
    }
  }
  throw ConfigError("unknown model kind");
}

TrainResult cmd_train(const TrainRequest& req, std::ostream* progress) {
  const Dataset ds = read_dataset(req.dataset);
  std::optional<Checkpoint> resume;
  if (req.resume) {
    resume = load_checkpoint(*req.resume);
    if (resume->kind != kind_name(req.kind))
      throw DataError("cannot resume a '" + std::string(kind_name(req.kind)) + "' run from a '" + resume->kind +
                      "' checkpoint");
  }
  const fs::path log_path = req.log.empty() ? fs::path(req.checkpoint.string() + ".log") : req.log;
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write loss log " + log_path.string());
  if (resume)
    log << "# resumed from epoch " << resume->epoch << "\n";
  else
    log << "# model " << kind_name(req.kind) << " seed " << req.config.seed << "\n" << loss_log_header() << "\n";
  log.flush();

  auto trained = train_model(req.kind, req.config, ds, resume ? &*resume : nullptr, [&](const EpochRecord& r) {
    log << format_epoch(r) << "\n";
    log.flush();
    if (progress) *progress << kind_name(req.kind) << " " << format_epoch(r) << "\n" << std::flush;
  });
  save_checkpoint(req.checkpoint, trained.checkpoint);
  log << "# best epoch " << trained.result.best_epoch << " valid_loss " << fmt(trained.result.best_valid) << "\n";
  return trained.result;
}

std::string SweepResult::csv() const {
  std::string out;
  if (kind == ModelKind::dar_f0) {
    out = "K,f0_rmse_natural,f0_rmse_note,corr_natural,corr_note,vuv_error,best_valid_loss\n";
    for (const auto& c : cells)
      out += std::to_string(c.history) + "," + fmt(c.report.f0_rmse_natural) + "," + fmt(c.report.f0_rmse_note) + "," +
             fmt(c.report.corr_natural) + "," + fmt(c.report.corr_note) + "," + fmt(c.report.vuv_error) + "," +
             fmt(c.best_valid) + "\n";
  } else {
    out = "K,h,N,mcd,best_valid_loss\n";
    for (const auto& c : cells)
      out += std::to_string(c.history) + "," + std::to_string(c.heads) + "," + std::to_string(c.layers) + "," +
             fmt(c.report.mcd) + "," + fmt(c.best_valid) + "\n";
  }
  return out;
}

SweepResult cmd_sweep(ModelKind kind, const SweepGrid& grid, const RunConfig& cfg, const Dataset& ds, Split eval_split,
                      int jobs, std::ostream* progress) {
  if (kind == ModelKind::baseline) throw ConfigError("sweeps apply to dar-f0 and dar-spectral only");
  if (grid.history.empty()) throw ConfigError("sweep grid needs at least one history length");
  struct Spec {
    int K, h, N;
  };
  std::vector<Spec> specs;
  if (kind == ModelKind::dar_f0) {
    for (int K : grid.history) specs.push_back({K, 0, 0});
  } else {
    if (grid.heads.empty() || grid.layers.empty()) throw ConfigError("spectral sweep needs head and layer values");
    for (int K : grid.history)
      for (int h : grid.heads)
        for (int N : grid.layers) specs.push_back({K, h, N});
  }
  // Validate every cell before spending time on training.
  for (const auto& s : specs) {
    RunConfig c = cfg;
    if (kind == ModelKind::dar_f0) {
      c.f0.history_len = s.K;
      c.f0.validate();
    } else {
      c.spectral.prenet.history_len = s.K;
      c.spectral.prenet.heads = s.h;
      c.spectral.prenet.attn_layers = s.N;
      c.spectral.validate();
    }
  }

  SweepResult res;
  res.kind = kind;
  res.cells.resize(specs.size());
  jobs = std::max(1, jobs);
  for (std::size_t start = 0; start < specs.size(); start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<SweepCell>> running;
    const std::size_t stop = std::min(specs.size(), start + static_cast<std::size_t>(jobs));
    for (std::size_t i = start; i < stop; ++i)
      running.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                   [&, s = specs[i]] { return run_cell(kind, cfg, ds, eval_split, s.K, s.h, s.N); }));
    for (std::size_t i = start; i < stop; ++i) {
      res.cells[i] = running[i - start].get();
      if (progress) {
        const auto& c = res.cells[i];
        *progress << "cell K=" << c.history;
        if (kind == ModelKind::dar_spectral) *progress << " h=" << c.heads << " N=" << c.layers;
        *progress << " done (best valid " << fmt(c.best_valid) << ")\n" << std::flush;
      }
    }
  }
  auto score = [&](const SweepCell& c) {
    const double v = kind == ModelKind::dar_f0 ? c.report.f0_rmse_natural : c.report.mcd;
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t i = 1; i < res.cells.size(); ++i)
    if (score(res.cells[i]) < score(res.cells[res.best])) res.best = i;
  return res;
}

FeatureFile predict_utterance(const Utterance& u, const SynthesisSystem& sys) {
  const Tensor<float> ctx = context_tensor(u);
  F0Contour f0;
  std::vector<float> spec;
  if (sys.baseline) {
    if (sys.f0 || sys.spectral) throw ConfigError("the baseline cannot be combined with DAR checkpoints");
    if (sys.baseline->model->ctx_dim() != u.ctx_dim) throw DataError("baseline context dimension differs from data");
    auto p = baseline_generate(*sys.baseline->model, ctx, sys.baseline->norm, sys.baseline->mlpg_variance);
    f0 = std::move(p.f0);
    spec = std::move(p.spec);
  } else {
    if (!sys.f0) throw ConfigError("synthesis needs an F0 checkpoint or a baseline checkpoint");
    if (sys.f0->model->ctx_dim() != u.ctx_dim) throw DataError("F0 model context dimension differs from data");
    f0 = sys.f0->model->generate(ctx).contour;
    if (sys.spectral) {
      if (sys.spectral->model->ctx_dim() != u.ctx_dim)
        throw DataError("spectral model context dimension differs from data");
      spec = sys.spectral->model->generate(ctx).storage();
      sys.spectral->norm.invert(spec);
    }
  }
  if (sys.postprocess) f0 = postprocess_f0(f0, u.note_f0, sys.window);

  FeatureFile out;
  out.frames = u.frames();
  out.spec_dim = spec.empty() ? 0 : kSpecDim;
  out.f0 = to_float(f0.f0_hz);
  for (bool v : f0.voiced) out.vuv.push_back(v ? 1.0f : 0.0f);
  out.spec = std::move(spec);
  out.note_f0 = to_float(u.note_f0);
  return out;
}

int cmd_synthesize(const SynthesisRequest& req) {
  if (req.window < 0) throw ConfigError("--window must be >= 0");
  const Dataset ds = read_dataset(req.dataset);
  std::optional<TrainedF0> f0;
  std::optional<TrainedSpectral> spectral;
  std::optional<TrainedBaseline> baseline;
  SynthesisSystem sys;
  if (req.f0) sys.f0 = &f0.emplace(restore_f0(load_checkpoint(*req.f0)));
  if (req.spectral) sys.spectral = &spectral.emplace(restore_spectral(load_checkpoint(*req.spectral)));
  if (req.baseline) sys.baseline = &baseline.emplace(restore_baseline(load_checkpoint(*req.baseline)));
  sys.postprocess = req.postprocess;
  sys.window = req.window;

  fs::create_directories(req.out_dir);
  int n = 0;
  for (const auto* u : ds.split(req.split)) {
    write_feature_file(prediction_path(req.out_dir, u->id), predict_utterance(*u, sys));
    ++n;
  }
  return n;
}

std::string Evaluation::csv() const {
  std::string out = "# aggregation: frame-weighted over all utterances\n" + EvalReport::csv_header() + "\n";
  for (const auto& [id, r] : per_utterance) out += r.to_csv(id) + "\n";
  out += aggregate.to_csv("aggregate") + "\n";
  return out;
}

Evaluation evaluate_predictions(const fs::path& pred_dir, const Dataset& ds, Split split) {
  Evaluation ev;
  EvalAccumulator total;
  const auto utts = ds.split(split);
  if (utts.empty()) throw DataError(std::string("dataset has no ") + split_name(split) + " utterances");
  for (const auto* u : utts) {
    const FeatureFile p = read_prediction(pred_dir, *u);
    EvalAccumulator acc;
    acc.add_f0(contour_of(p), u->ref_f0, u->note_f0);
    if (p.spec_dim == kSpecDim) acc.add_spectral(p.spec, u->spec, u->frames());
    ev.per_utterance.emplace_back(u->id, EvalReport::from(acc));
    total.merge(acc);
  }
  ev.aggregate = EvalReport::from(total);
  return ev;
}

std::string cmd_evaluate(const std::vector<std::pair<std::string, fs::path>>& systems, const Dataset& ds, Split split) {
  if (systems.empty()) throw ConfigError("evaluate needs at least one prediction directory");
  std::string out = "# aggregation: frame-weighted over all utterances\n" + EvalReport::csv_header() + "\n";
  for (const auto& [name, dir] : systems) out += evaluate_predictions(dir, ds, split).aggregate.to_csv(name) + "\n";
  return out;
}

std::vector<PlotSeries> plot_series(const Dataset& ds, const std::string& utterance,
                                    const std::vector<std::pair<std::string, fs::path>>& systems) {
  const Utterance* u = ds.find(utterance);
  if (!u) throw DataError("unknown utterance " + utterance);
  // References go through float32 like the stored predictions.
  auto as_float = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(static_cast<float>(x));
    return out;
  };
  std::vector<PlotSeries> series{{"natural", as_float(u->ref_f0.f0_hz)}, {"note", as_float(u->note_f0)}};
  for (const auto& [name, dir] : systems) {
    const FeatureFile p = read_prediction(dir, *u);
    std::vector<double> hz;
    for (int t = 0; t < p.frames; ++t)
      hz.push_back(p.vuv[static_cast<std::size_t>(t)] > 0.5f ? static_cast<double>(p.f0[static_cast<std::size_t>(t)])
                                                              : 0.0);
    series.push_back({name, std::move(hz)});
  }
  return series;
}

void cmd_plot(const PlotRequest& req) {
  const Dataset ds = read_dataset(req.dataset);
  const auto series = plot_series(ds, req.utterance, req.systems);
  if (req.out_prefix.has_parent_path()) fs::create_directories(req.out_prefix.parent_path());
  std::ofstream csv(req.out_prefix.string() + ".csv", std::ios::trunc);
  std::ofstream svg(req.out_prefix.string() + ".svg", std::ios::trunc);
  if (!csv || !svg) throw DataError("cannot write plot files at " + req.out_prefix.string());
  csv << contour_csv(series);
  svg << contour_svg(series, "F0 contours, " + req.utterance);
  if (!csv || !svg) throw DataError("failed writing plot files at " + req.out_prefix.string());
}

}  // namespace darsvs
