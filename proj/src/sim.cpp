#include "dpsvd/sim.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "dpsvd/error.hpp"
#include "dpsvd/metrics.hpp"
#include "dpsvd/parallel.hpp"

namespace dpsvd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    usage_error("scenario: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    usage_error("scenario: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& w : words(v)) out.push_back(to_double(key, w));
  return out;
}

void apply(ScenarioSpec& s, const std::string& key, const std::string& v) {
  if (key == "name") s.id = v;
  else if (key == "n") s.n = to_int(key, v);
  else if (key == "d") s.d = to_int(key, v);
  else if (key == "k_true") s.k_true = to_int(key, v);
  else if (key == "k_fit") s.k_fit = to_int(key, v);
  else if (key == "c") s.mu_center = to_double(key, v);
  else if (key == "mu_variance") s.mu_variance = to_double(key, v);
  else if (key == "loading_mean") s.loading_mean = to_double(key, v);
  else if (key == "loading_variance") s.loading_variance = to_double(key, v);
  else if (key == "score_variances") s.score_variances = to_doubles(key, v);
  else if (key == "replicates") s.replicates = static_cast<int>(to_int(key, v));
  else if (key == "stages") s.stages = parse_stages(v);
  else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "B") s.B = static_cast<int>(to_int(key, v));
  else if (key == "C") s.C = static_cast<int>(to_int(key, v));
  else if (key == "classical_B") s.classical_B = static_cast<int>(to_int(key, v));
  else if (key == "simex_grid") s.simex.grid = to_doubles(key, v);
  else if (key == "simex_reps") s.simex.replicates = static_cast<int>(to_int(key, v));
  else if (key == "extrapolant") {
    if (v == "quadratic") s.simex.extrapolant = Extrapolant::quadratic;
    else if (v == "linear") s.simex.extrapolant = Extrapolant::linear;
    else usage_error("scenario: extrapolant must be quadratic or linear");
  } else if (key == "max_sweeps") s.fit.max_sweeps = static_cast<int>(to_int(key, v));
  else if (key == "sweep_tolerance") s.fit.sweep_tolerance = to_double(key, v);
  else usage_error("scenario: unknown key '" + key + "'");
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i]);
  return out;
}

double score_variance(const ScenarioSpec& spec, Eigen::Index l) {
  const auto i = static_cast<std::size_t>(l);
  return i < spec.score_variances.size() ? spec.score_variances[i] : 1.0;
}

struct Emitter {
  const ScenarioSpec& spec;
  std::uint64_t hash;
  int replicate;
  ResultTable rows;

  void operator()(const std::string& stage, const std::string& metric,
                  double value) {
    rows.push_back({spec.id, hash, spec.seed, replicate, stage, metric, value});
  }
};

Eigen::MatrixXd theta_of(const Eigen::VectorXd& mu, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& V) {
  return natural_parameters(LowRankFit{mu, A, V});
}

// Loadings produced by one stage, in the sign convention of the truth.
struct LoadingSource {
  std::string stage;
  Eigen::MatrixXd V;
  Eigen::MatrixXd mle_scores;
  std::vector<bool> mle_diverged;
};

ResultTable run_replicate(const ScenarioSpec& spec, std::uint64_t hash,
                          int replicate) {
  Emitter emit{spec, hash, replicate, {}};
  const RngStream base = RngStream(spec.seed).child(
      static_cast<std::uint64_t>(replicate));

  std::optional<Dataset> data;
  try {
    data = generate_dataset(spec, replicate, base.child(0));
  } catch (const Error&) {
    emit("generate", "failed", 1.0);
    return std::move(emit.rows);
  }
  const CountMatrix& x = data->counts;
  const LowRankFit& truth = data->truth;
  const bool comparable =
      spec.k_fit == spec.k_true && truth.V.squaredNorm() > 0.0;

  FitOptions opts = spec.fit;
  opts.k = spec.k_fit;
  opts.mu_policy = MuPolicy::fixed;
  opts.fixed_mu = truth.mu;

  // Raw fit.
  LowRankFit raw;
  try {
    FitResult r = fit(x, opts, base.child(1));
    raw = r.fit;
    if (comparable && r.diagnostics.normalized) {
      Factorization f = normalize_identifiable(raw.A, raw.V, truth.V);
      raw.A = f.A;
      raw.V = f.V;
    }
    emit("psvd", "sweeps", r.diagnostics.sweeps);
    emit("psvd", "diverged_rows", r.diagnostics.diverged_rows);
    emit("psvd", "diverged_cols", r.diagnostics.diverged_cols);
    if (comparable) {
      const double al = loading_alignment(raw.V, truth.V);
      emit("psvd", "alignment", al);
      emit("psvd", "angle_deg", alignment_degrees(al));
      emit("psvd", "score_rmse", rmse(raw.A, truth.A));
      const Eigen::MatrixXd err = raw.V - truth.V;
      const TTest t = one_sample_t(
          Eigen::Map<const Eigen::VectorXd>(err.data(), err.size()));
      emit("psvd", "loading_error_mean", t.mean);
      emit("psvd", "loading_error_t", t.t_statistic);
    }
    emit("psvd", "theta_rmse", rmse(natural_parameters(raw), data->theta));
  } catch (const Error&) {
    emit("psvd", "failed", 1.0);
    return std::move(emit.rows);
  }

  std::vector<LoadingSource> sources;
  auto add_source = [&](const std::string& stage, const Eigen::MatrixXd& V) {
    const ScoreEstimates s =
        estimate_scores(x, truth.mu, V, ScoreMethod::mle, opts.solver);
    sources.push_back({stage, V, s.scores, s.diverged});
  };
  try {
    add_source("psvd", raw.V);
  } catch (const Error&) {
    emit("psvd", "failed", 1.0);
    return std::move(emit.rows);
  }
  const double raw_score_rmse = comparable ? rmse(raw.A, truth.A) : 0.0;
  const double raw_theta_rmse = rmse(natural_parameters(raw), data->theta);

  auto debias_stage = [&](const std::string& stage, bool iterative) {
    try {
      BootstrapConfig cfg;
      cfg.mode = iterative ? BootstrapMode::iterative : BootstrapMode::classical;
      cfg.B = iterative ? spec.B : spec.classical_B;
      cfg.C = spec.C;
      cfg.seed = base.child(iterative ? 2 : 3).key();
      const DebiasResult d = iterative
                                 ? iterative_bootstrap_debias(x, raw, cfg, opts)
                                 : classical_bootstrap_debias(x, raw, cfg, opts);
      emit(stage, "failed_replicates", d.failed_level1 + d.failed_level2);
      add_source(stage, d.V_tilde);
      const auto& src = sources.back();
      if (comparable) {
        const double al = loading_alignment(d.V_tilde, truth.V);
        emit(stage, "alignment", al);
        emit(stage, "angle_deg", alignment_degrees(al));
        const double sr = rmse(src.mle_scores, truth.A);
        emit(stage, "score_rmse", sr);
        emit(stage, "score_rmse_reduction_pct",
             rmse_reduction_pct(raw_score_rmse, sr));
      }
      const double tr =
          rmse(theta_of(truth.mu, src.mle_scores, d.V_tilde), data->theta);
      emit(stage, "theta_rmse", tr);
      emit(stage, "theta_rmse_reduction_pct",
           rmse_reduction_pct(raw_theta_rmse, tr));
    } catch (const Error&) {
      emit(stage, "failed", 1.0);
    }
  };
  if (spec.stages.ib) debias_stage("ib", true);
  if (spec.stages.classical_bs) debias_stage("classical-bs", false);

  // Score stages relative to the MLE scores computed with the same loadings.
  auto score_metrics = [&](const std::string& stage, const LoadingSource& src,
                           const Eigen::MatrixXd& scores) {
    if (comparable) {
      const double before = rmse(src.mle_scores, truth.A);
      const double after = rmse(scores, truth.A);
      emit(stage, "score_rmse", after);
      emit(stage, "score_rmse_reduction_pct", rmse_reduction_pct(before, after));
    }
    const double before =
        rmse(theta_of(truth.mu, src.mle_scores, src.V), data->theta);
    const double after = rmse(theta_of(truth.mu, scores, src.V), data->theta);
    emit(stage, "theta_rmse", after);
    emit(stage, "theta_rmse_reduction_pct", rmse_reduction_pct(before, after));
  };

  if (spec.stages.firth) {
    const Eigen::VectorXd rs = x.row_sums();
    for (const auto& src : sources) {
      const std::string stage = src.stage + "+firth";
      try {
        const ScoreEstimates f =
            estimate_scores(x, truth.mu, src.V, ScoreMethod::firth, opts.solver);
        int zero = 0, finite = 0, flagged = 0;
        for (Eigen::Index i = 0; i < rs.size(); ++i) {
          if (rs[i] != 0.0) continue;
          ++zero;
          if (f.scores.row(i).allFinite() &&
              !f.diverged[static_cast<std::size_t>(i)])
            ++finite;
          if (src.mle_diverged[static_cast<std::size_t>(i)]) ++flagged;
        }
        emit(stage, "allzero_rows", zero);
        emit(stage, "allzero_firth_finite", finite);
        emit(stage, "allzero_mle_diverged", flagged);
        score_metrics(stage, src, f.scores);
      } catch (const Error&) {
        emit(stage, "failed", 1.0);
      }
    }
  }

  if (spec.stages.simex) {
    // Measurement error is taken from the most-corrected loadings available.
    const LoadingSource& src = sources.back();
    const std::string stage = src.stage + "+simex";
    try {
      const MeasurementErrorModel me =
          estimate_sigma2(LowRankFit{truth.mu, src.mle_scores, src.V});
      emit(stage, "sigma2", me.sigma2);
      const SimexResult s = simex_scores(x, truth.mu, src.V, me, spec.simex,
                                         base.child(4), ScoreMethod::mle,
                                         opts.solver);
      int fallback = 0;
      for (bool b : s.fallback) fallback += b;
      emit(stage, "fallback_rows", fallback);
      score_metrics(stage, src, s.scores);
      if (spec.stages.firth) {
        const std::string fs = stage + "+firth";
        const SimexResult sf = simex_scores(x, truth.mu, src.V, me, spec.simex,
                                            base.child(5), ScoreMethod::firth,
                                            opts.solver);
        score_metrics(fs, src, sf.scores);
      }
    } catch (const Error&) {
      emit(stage, "failed", 1.0);
    }
  }
  return std::move(emit.rows);
}

}  // namespace

Stages parse_stages(const std::string& text) {
  std::string t = text;
  for (char& ch : t)
    if (ch == ',') ch = ' ';
  Stages s;
  s.psvd = false;
  for (const auto& w : words(t)) {
    if (w == "psvd") s.psvd = true;
    else if (w == "ib") s.ib = true;
    else if (w == "classical-bs") s.classical_bs = true;
    else if (w == "simex") s.simex = true;
    else if (w == "firth") s.firth = true;
    else usage_error("unknown stage '" + w + "'");
  }
  // Every other stage starts from the raw fit.
  s.psvd = true;
  return s;
}

std::string to_string(const Stages& s) {
  std::string out = "psvd";
  if (s.ib) out += " ib";
  if (s.classical_bs) out += " classical-bs";
  if (s.simex) out += " simex";
  if (s.firth) out += " firth";
  return out;
}

void validate(const ScenarioSpec& spec) {
  if (spec.n < 1 || spec.d < 2) usage_error("scenario: need n >= 1 and d >= 2");
  if (spec.k_true < 1 || spec.k_fit < 1)
    usage_error("scenario: k_true and k_fit must be >= 1");
  if (spec.k_true >= spec.d || spec.k_fit >= spec.d)
    usage_error("scenario: k must be below d");
  if (spec.replicates < 1) usage_error("scenario: replicates must be >= 1");
  bool ok = spec.mu_variance >= 0.0 && spec.loading_variance >= 0.0 &&
            std::isfinite(spec.mu_center) && std::isfinite(spec.loading_mean) &&
            std::isfinite(spec.mu_variance) &&
            std::isfinite(spec.loading_variance);
  for (double v : spec.score_variances) ok = ok && v >= 0.0 && std::isfinite(v);
  if (!ok) usage_error("scenario: variances must be finite and >= 0");
  if (spec.stages.ib && (spec.B < 1 || spec.C < 1))
    usage_error("scenario: ib needs B >= 1 and C >= 1");
  if (spec.stages.classical_bs && spec.classical_B < 1)
    usage_error("scenario: classical-bs needs classical_B >= 1");
  if (spec.stages.simex) validate(spec.simex);
}

std::string canonical_text(const ScenarioSpec& s) {
  std::ostringstream os;
  os << "name = " << s.id << "\n"
     << "n = " << s.n << "\n"
     << "d = " << s.d << "\n"
     << "k_true = " << s.k_true << "\n"
     << "k_fit = " << s.k_fit << "\n"
     << "c = " << fmt(s.mu_center) << "\n"
     << "mu_variance = " << fmt(s.mu_variance) << "\n"
     << "loading_mean = " << fmt(s.loading_mean) << "\n"
     << "loading_variance = " << fmt(s.loading_variance) << "\n"
     << "score_variances = " << join(s.score_variances) << "\n"
     << "replicates = " << s.replicates << "\n"
     << "stages = " << to_string(s.stages) << "\n"
     << "seed = " << s.seed << "\n"
     << "B = " << s.B << "\n"
     << "C = " << s.C << "\n"
     << "classical_B = " << s.classical_B << "\n"
     << "simex_grid = " << join(s.simex.grid) << "\n"
     << "simex_reps = " << s.simex.replicates << "\n"
     << "extrapolant = "
     << (s.simex.extrapolant == Extrapolant::quadratic ? "quadratic" : "linear")
     << "\n"
     << "max_sweeps = " << s.fit.max_sweeps << "\n"
     << "sweep_tolerance = " << fmt(s.fit.sweep_tolerance) << "\n";
  return os.str();
}

std::uint64_t spec_hash(const ScenarioSpec& spec) {
  // FNV-1a over the canonical text.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical_text(spec)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

Dataset generate_dataset(const ScenarioSpec& spec, int /*replicate*/,
                         const RngStream& stream) {
  validate(spec);
  const auto n = spec.n, d = spec.d, k = spec.k_true;
  Rng rng(stream.child(0));
  LowRankFit truth;
  truth.mu.resize(d);
  truth.V.resize(d, k);
  truth.A.resize(n, k);
  const double mu_sd = std::sqrt(spec.mu_variance);
  const double v_sd = std::sqrt(spec.loading_variance);
  for (Eigen::Index j = 0; j < d; ++j)
    truth.mu[j] = rng.normal(spec.mu_center, mu_sd);
  for (Eigen::Index l = 0; l < k; ++l)
    for (Eigen::Index j = 0; j < d; ++j)
      truth.V(j, l) = rng.normal(spec.loading_mean, v_sd);
  for (Eigen::Index l = 0; l < k; ++l) {
    const double sd = std::sqrt(score_variance(spec, l));
    for (Eigen::Index i = 0; i < n; ++i) truth.A(i, l) = rng.normal(0.0, sd);
  }

  Dataset out{CountMatrix::zeros(n, d), truth, natural_parameters(truth)};
  out.counts = sample_counts(mean_matrix(out.theta), stream.child(1));
  try {
    Factorization f = normalize_identifiable(truth.A, truth.V);
    out.truth.A = f.A;
    out.truth.V = f.V;
  } catch (const Error&) {
    // Below rank: the truth has no identifiable form; keep it as drawn.
  }
  return out;
}

ResultTable run_scenario(const ScenarioSpec& spec) {
  std::vector<int> all(static_cast<std::size_t>(spec.replicates));
  for (int r = 0; r < spec.replicates; ++r) all[static_cast<std::size_t>(r)] = r;
  return run_scenario(spec, all);
}

ResultTable run_scenario(const ScenarioSpec& spec,
                         const std::vector<int>& replicates) {
  validate(spec);
  for (int r : replicates)
    if (r < 0 || r >= spec.replicates)
      usage_error("scenario: replicate index out of range");
  const std::uint64_t hash = spec_hash(spec);
  std::vector<ResultTable> parts(replicates.size());
  parallel_for(replicates.size(), [&](std::size_t i) {
    parts[i] = run_replicate(spec, hash, replicates[i]);
  });
  ResultTable out;
  for (auto& p : parts)
    out.insert(out.end(), std::make_move_iterator(p.begin()),
               std::make_move_iterator(p.end()));
  return out;
}

std::vector<ScenarioSpec> parse_scenarios(const std::string& text) {
  struct Section {
    std::vector<std::pair<std::string, std::string>> entries;
    int line = 0;
  };
  std::vector<Section> sections;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line == "[scenario]") {
      sections.push_back({{}, lineno});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      usage_error("scenario config line " + std::to_string(lineno) +
                  ": expected key = value");
    if (sections.empty()) sections.push_back({{}, lineno});
    sections.back().entries.emplace_back(trim(line.substr(0, eq)),
                                         trim(line.substr(eq + 1)));
  }
  if (sections.empty()) usage_error("scenario config has no entries");

  std::vector<ScenarioSpec> cells;
  for (const auto& sec : sections) {
    // Axes in order of appearance; the last axis varies fastest.
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    ScenarioSpec base;
    std::map<std::string, int> seen;
    for (const auto& [key, value] : sec.entries) {
      if (seen[key]++)
        usage_error("scenario config: duplicate key '" + key + "'");
      auto values = split(value, ',');
      if (values.size() > 1 && key != "name")
        axes.emplace_back(key, values);
      else
        apply(base, key, value);
    }
    std::vector<std::size_t> idx(axes.size(), 0);
    for (;;) {
      ScenarioSpec cell = base;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto& v = axes[a].second[idx[a]];
        apply(cell, axes[a].first, v);
        std::string label = v;
        for (char& ch : label)
          if (ch == ' ') ch = '_';
        cell.id += "/" + axes[a].first + "=" + label;
      }
      validate(cell);
      cells.push_back(std::move(cell));
      bool carry = true;
      for (std::size_t a = axes.size(); carry && a > 0;) {
        --a;
        if (++idx[a] < axes[a].second.size())
          carry = false;
        else
          idx[a] = 0;
      }
      if (carry) break;
    }
  }
  return cells;
}

}  // namespace dpsvd
