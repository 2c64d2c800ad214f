// dpsvd command-line front end.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dpsvd/bootstrap.hpp"
#include "dpsvd/error.hpp"
#include "dpsvd/eval.hpp"
#include "dpsvd/io.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/sim.hpp"
#include "dpsvd/simex.hpp"

using namespace dpsvd;

namespace {

// Writes to a file, or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) data_error("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) data_error("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

CountMatrix load_counts(const std::string& path, const std::string& format) {
  const CountFormat f = parse_count_format(format);
  if (path == "-") return read_counts(std::cin, f, "<stdin>");
  return read_counts(path, f);
}

ScoreMethod parse_score_method(const std::string& s) {
  if (s == "mle") return ScoreMethod::mle;
  if (s == "firth") return ScoreMethod::firth;
  usage_error("--score-method must be mle or firth");
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size())
      usage_error("--simex-grid: bad value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

int report(ErrorKind kind, const std::string& message) {
  const char* name = kind == ErrorKind::usage  ? "usage"
                     : kind == ErrorKind::data ? "data"
                                               : "numerical";
  std::fprintf(stderr, "dpsvd: error=%s code=%d message=\"%s\"\n", name,
               static_cast<int>(kind), escape(message).c_str());
  return static_cast<int>(kind);
}

struct Common {
  std::string in = "-";
  std::string out = "-";
  std::string format = "dense-csv";
  std::uint64_t seed = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson SVD with bias-corrected loadings and scores"};
  app.require_subcommand(1);

  // fit
  Common fit_c;
  Eigen::Index fit_k = 1;
  std::string fit_mu = "log-column-means";
  std::string fit_score = "mle";
  int fit_sweeps = 200;
  auto* fit_cmd = app.add_subcommand("fit", "fit a Poisson SVD model");
  fit_cmd->add_option("--in", fit_c.in, "count matrix (- for stdin)");
  fit_cmd->add_option("--format", fit_c.format, "dense-csv | sparse-coordinate");
  fit_cmd->add_option("--out", fit_c.out, "model file (- for stdout)");
  fit_cmd->add_option("--k", fit_k, "number of components")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_c.seed, "random seed");
  fit_cmd->add_option("--mu-policy", fit_mu, "log-column-means | alternating");
  fit_cmd->add_option("--score-method", fit_score, "mle | firth");
  fit_cmd->add_option("--max-sweeps", fit_sweeps, "alternating sweep limit")
      ->check(CLI::PositiveNumber);

  // debias
  Common deb_c;
  std::string deb_model;
  std::string deb_diag;
  std::string deb_mode = "iterative";
  int deb_B = 10, deb_C = 5;
  auto* deb_cmd = app.add_subcommand("debias", "bootstrap bias correction of loadings");
  deb_cmd->add_option("--in", deb_c.in, "count matrix the model was fitted to");
  deb_cmd->add_option("--format", deb_c.format, "dense-csv | sparse-coordinate");
  deb_cmd->add_option("--model", deb_model, "fitted model file")->required();
  deb_cmd->add_option("--out", deb_c.out, "debiased model file");
  deb_cmd->add_option("--diagnostics", deb_diag, "replicate diagnostics CSV");
  deb_cmd->add_option("--B", deb_B, "level-1 replicates (total for classical)");
  deb_cmd->add_option("--C", deb_C, "level-2 replicates per level-1 replicate");
  deb_cmd->add_option("--mode", deb_mode, "iterative | classical");
  deb_cmd->add_option("--seed", deb_c.seed, "random seed");

  // scores
  Common sc_c;
  std::string sc_model;
  std::string sc_score = "mle";
  double sc_sigma2 = -1.0;
  bool sc_simex = false;
  std::string sc_grid = "0,0.5,1,1.5,2";
  int sc_reps = 100;
  auto* sc_cmd = app.add_subcommand("scores", "estimate scores for new rows");
  sc_cmd->add_option("--in", sc_c.in, "new count rows");
  sc_cmd->add_option("--format", sc_c.format, "dense-csv | sparse-coordinate");
  sc_cmd->add_option("--model", sc_model, "model file")->required();
  sc_cmd->add_option("--out", sc_c.out, "scores CSV");
  sc_cmd->add_option("--score-method", sc_score, "mle | firth");
  sc_cmd->add_flag("--simex", sc_simex, "SIMEX correction for loading error");
  sc_cmd->add_option("--sigma2", sc_sigma2, "loading error variance override");
  sc_cmd->add_option("--simex-grid", sc_grid, "comma-separated lambda grid");
  sc_cmd->add_option("--simex-reps", sc_reps, "replicates per grid point");
  sc_cmd->add_option("--seed", sc_c.seed, "random seed");

  // simulate
  Common sim_c;
  int sim_reps = 0;
  std::string sim_stages;
  std::string sim_scenario;
  int sim_replicate = -1;
  auto* sim_cmd = app.add_subcommand("simulate", "run a scenario grid");
  sim_cmd->add_option("--in", sim_c.in, "scenario config file")->required();
  sim_cmd->add_option("--out", sim_c.out, "results CSV");
  sim_cmd->add_option("--replicates", sim_reps, "override replicate count (e.g. 50)");
  sim_cmd->add_option("--stages", sim_stages, "override stages, e.g. psvd,ib");
  sim_cmd->add_option("--scenario", sim_scenario, "run only this cell id");
  sim_cmd->add_option("--replicate", sim_replicate, "run only this replicate");

  // recommend
  Common rec_c;
  std::string rec_model;
  std::string rec_score = "firth";
  Eigen::Index rec_top = 0;
  auto* rec_cmd = app.add_subcommand("recommend", "rank columns for user rows");
  rec_cmd->add_option("--in", rec_c.in, "user count rows");
  rec_cmd->add_option("--format", rec_c.format, "dense-csv | sparse-coordinate");
  rec_cmd->add_option("--model", rec_model, "model file")->required();
  rec_cmd->add_option("--out", rec_c.out, "rankings CSV");
  rec_cmd->add_option("--top", rec_top, "columns per row (0 = all)");
  rec_cmd->add_option("--score-method", rec_score, "mle | firth");

  // eval
  Common ev_c;
  Eigen::Index ev_kmax = 5;
  std::vector<Eigen::Index> ev_ks;
  std::vector<std::string> ev_methods;
  Eigen::Index ev_test = 25, ev_forced = 5;
  bool ev_tail = false;
  int ev_B = 10, ev_C = 5;
  std::string ev_score = "firth";
  auto* ev_cmd = app.add_subcommand("eval", "forced-zero AUC evaluation");
  ev_cmd->add_option("--in", ev_c.in, "count matrix");
  ev_cmd->add_option("--format", ev_c.format, "dense-csv | sparse-coordinate");
  ev_cmd->add_option("--out", ev_c.out, "AUC CSV");
  ev_cmd->add_option("--k-max", ev_kmax, "evaluate k = 1..k-max");
  ev_cmd->add_option("--k", ev_ks, "explicit k values (overrides --k-max)");
  ev_cmd->add_option("--methods", ev_methods,
                     "constant intercept pca psvd debiased")->delimiter(',');
  ev_cmd->add_option("--test-rows", ev_test, "number of test rows");
  ev_cmd->add_option("--forced", ev_forced, "forced-zero columns per test row");
  ev_cmd->add_flag("--tail-test", ev_tail, "use the last rows as test rows");
  ev_cmd->add_option("--B", ev_B, "level-1 bootstrap replicates");
  ev_cmd->add_option("--C", ev_C, "level-2 bootstrap replicates");
  ev_cmd->add_option("--score-method", ev_score, "mle | firth");
  ev_cmd->add_option("--seed", ev_c.seed, "random seed");

  // cohort
  Common co_c;
  CohortOptions co;
  std::string co_out_format = "dense-csv";
  std::string co_rows_out;
  auto* co_cmd = app.add_subcommand("cohort", "select popular columns and active rows");
  co_cmd->add_option("--in", co_c.in, "count matrix");
  co_cmd->add_option("--format", co_c.format, "input format");
  co_cmd->add_option("--out", co_c.out, "selected counts, train rows first");
  co_cmd->add_option("--out-format", co_out_format, "output format");
  co_cmd->add_option("--rows-out", co_rows_out, "CSV of original row/column ids");
  co_cmd->add_option("--top-columns", co.top_columns, "popular column pool");
  co_cmd->add_option("--pick-columns", co.pick_columns, "columns drawn from the pool");
  co_cmd->add_option("--top-rows", co.top_rows, "most active rows kept");
  co_cmd->add_option("--test-rows", co.test_rows, "rows held out for testing");
  co_cmd->add_option("--seed", co.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorKind::usage, e.what());
  }

  try {
    if (*fit_cmd) {
      FitOptions opts;
      opts.k = fit_k;
      opts.max_sweeps = fit_sweeps;
      opts.score_method = parse_score_method(fit_score);
      if (fit_mu == "log-column-means") opts.mu_policy = MuPolicy::log_column_means;
      else if (fit_mu == "alternating") opts.mu_policy = MuPolicy::alternating;
      else usage_error("--mu-policy must be log-column-means or alternating");
      const CountMatrix x = load_counts(fit_c.in, fit_c.format);
      const FitResult r = fit(x, opts, RngStream(fit_c.seed));
      ModelFile m;
      m.fit = r.fit;
      m.seed = fit_c.seed;
      m.options = {{"k", std::to_string(fit_k)},
                   {"mu_policy", fit_mu},
                   {"score_method", fit_score},
                   {"sweeps", std::to_string(r.diagnostics.sweeps)},
                   {"converged", r.diagnostics.converged ? "true" : "false"}};
      Output out(fit_c.out);
      write_model(out.stream(), m);
      out.finish();
    } else if (*deb_cmd) {
      ModelFile m = read_model(deb_model);
      if (!m.has_scores) data_error("debias: model file has no scores");
      const CountMatrix x = load_counts(deb_c.in, deb_c.format);
      BootstrapConfig cfg;
      cfg.B = deb_B;
      cfg.C = deb_C;
      cfg.seed = deb_c.seed;
      if (deb_mode == "iterative") cfg.mode = BootstrapMode::iterative;
      else if (deb_mode == "classical") cfg.mode = BootstrapMode::classical;
      else usage_error("--mode must be iterative or classical");
      FitOptions opts;
      opts.k = m.fit.rank();
      const DebiasResult d = cfg.mode == BootstrapMode::iterative
                                 ? iterative_bootstrap_debias(x, m.fit, cfg, opts)
                                 : classical_bootstrap_debias(x, m.fit, cfg, opts);
      ModelFile out_m = m;
      out_m.fit.V = d.V_tilde;
      out_m.fit.A =
          estimate_scores(x, m.fit.mu, d.V_tilde, ScoreMethod::mle).scores;
      out_m.sigma2 = estimate_sigma2(out_m.fit).sigma2;
      out_m.lineage = cfg.mode == BootstrapMode::iterative
                          ? Lineage::ib_debiased
                          : Lineage::classical_debiased;
      out_m.seed = deb_c.seed;
      out_m.options["B"] = std::to_string(deb_B);
      out_m.options["C"] = std::to_string(deb_C);
      out_m.options["bootstrap_mode"] = deb_mode;
      Output out(deb_c.out);
      write_model(out.stream(), out_m);
      out.finish();
      if (!deb_diag.empty()) {
        Output diag(deb_diag);
        auto& os = diag.stream();
        os << "level,b,c,status,loading_shift\n";
        auto row = [&](int level, std::size_t b, long c,
                       const std::optional<Eigen::MatrixXd>& V) {
          os << level << "," << b << ",";
          if (c >= 0) os << c;
          os << "," << (V ? "ok" : "failed") << ","
             << (V ? format_double((*V - m.fit.V).norm()) : "") << "\n";
        };
        for (std::size_t b = 0; b < d.level1.size(); ++b)
          row(1, b, -1, d.level1[b]);
        for (std::size_t t = 0; t < d.level2.size(); ++t)
          row(2, t / static_cast<std::size_t>(deb_C),
              static_cast<long>(t % static_cast<std::size_t>(deb_C)),
              d.level2[t]);
        diag.finish();
      }
    } else if (*sc_cmd) {
      const ModelFile m = read_model(sc_model);
      const CountMatrix x = load_counts(sc_c.in, sc_c.format);
      if (x.cols() != m.fit.cols())
        data_error("scores: input has " + std::to_string(x.cols()) +
                   " columns, model expects " + std::to_string(m.fit.cols()));
      const ScoreMethod method = parse_score_method(sc_score);
      Eigen::MatrixXd scores;
      std::vector<bool> diverged, fallback;
      if (sc_simex) {
        MeasurementErrorModel me;
        if (sc_sigma2 >= 0.0) {
          me.sigma2 = sc_sigma2;
        } else if (m.sigma2) {
          me.sigma2 = *m.sigma2;
          me.source = SigmaSource::asymptotic_average;
        } else if (m.has_scores) {
          me = estimate_sigma2(m.fit);
        } else {
          usage_error("scores: --simex needs --sigma2 or a model with scores");
        }
        SimexSchedule sched;
        sched.grid = parse_grid(sc_grid);
        sched.replicates = sc_reps;
        const SimexResult r = simex_scores(x, m.fit.mu, m.fit.V, me, sched,
                                           RngStream(sc_c.seed), method);
        scores = r.scores;
        fallback = r.fallback;
        diverged = estimate_scores(x, m.fit.mu, m.fit.V, method).diverged;
      } else {
        const ScoreEstimates s = estimate_scores(x, m.fit.mu, m.fit.V, method);
        scores = s.scores;
        diverged = s.diverged;
        fallback.assign(diverged.size(), false);
      }
      Output out(sc_c.out);
      auto& os = out.stream();
      os << "row";
      for (Eigen::Index l = 0; l < scores.cols(); ++l) os << ",a" << (l + 1);
      os << ",diverged,fallback\n";
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        os << (i + 1);
        for (Eigen::Index l = 0; l < scores.cols(); ++l)
          os << "," << format_double(scores(i, l));
        os << "," << diverged[static_cast<std::size_t>(i)] << ","
           << fallback[static_cast<std::size_t>(i)] << "\n";
      }
      out.finish();
    } else if (*sim_cmd) {
      std::ifstream in(sim_c.in);
      if (!in) data_error("cannot open '" + sim_c.in + "' for reading");
      std::stringstream text;
      text << in.rdbuf();
      auto cells = parse_scenarios(text.str());
      ResultTable rows;
      bool matched = sim_scenario.empty();
      for (auto& cell : cells) {
        if (sim_reps > 0) cell.replicates = sim_reps;
        if (!sim_stages.empty()) cell.stages = parse_stages(sim_stages);
        if (!sim_scenario.empty() && cell.id != sim_scenario) continue;
        matched = true;
        const ResultTable part =
            sim_replicate >= 0 ? run_scenario(cell, {sim_replicate})
                               : run_scenario(cell);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      if (!matched) usage_error("no scenario named '" + sim_scenario + "'");
      Output out(sim_c.out);
      write_results(out.stream(), rows);
      out.finish();
    } else if (*rec_cmd) {
      const ModelFile m = read_model(rec_model);
      const CountMatrix x = load_counts(rec_c.in, rec_c.format);
      if (x.cols() != m.fit.cols())
        data_error("recommend: input has " + std::to_string(x.cols()) +
                   " columns, model expects " + std::to_string(m.fit.cols()));
      const Eigen::MatrixXd lambda = predict_means(
          x, m.fit.mu, m.fit.V, parse_score_method(rec_score));
      Output out(rec_c.out);
      auto& os = out.stream();
      os << "row,rank,column,lambda\n";
      for (Eigen::Index i = 0; i < lambda.rows(); ++i) {
        const auto ranked = rank_columns(lambda.row(i).transpose());
        const std::size_t top =
            rec_top > 0 ? std::min(ranked.size(), static_cast<std::size_t>(rec_top))
                        : ranked.size();
        for (std::size_t r = 0; r < top; ++r)
          os << (i + 1) << "," << (r + 1) << "," << ranked[r] << ","
             << format_double(lambda(i, ranked[r] - 1)) << "\n";
      }
      out.finish();
    } else if (*ev_cmd) {
      const CountMatrix x = load_counts(ev_c.in, ev_c.format);
      EvalOptions opts;
      opts.seed = ev_c.seed;
      opts.B = ev_B;
      opts.C = ev_C;
      opts.score_method = parse_score_method(ev_score);
      if (!ev_ks.empty()) {
        opts.ks = ev_ks;
      } else {
        if (ev_kmax < 1) usage_error("--k-max must be >= 1");
        opts.ks.clear();
        for (Eigen::Index k = 1; k <= ev_kmax; ++k) opts.ks.push_back(k);
      }
      if (!ev_methods.empty()) {
        opts.methods.clear();
        for (const auto& s : ev_methods) opts.methods.push_back(parse_eval_method(s));
      }
      const RngStream split_stream = RngStream(ev_c.seed).child(0);
      EvalSplit split;
      if (ev_tail) {
        if (ev_test < 1 || ev_test >= x.rows())
          usage_error("--test-rows must be in [1, n)");
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
          (i < x.rows() - ev_test ? train : test).push_back(i);
        split = make_split(x, train, test, ev_forced, split_stream);
      } else {
        split = make_split(x, ev_test, ev_forced, split_stream);
      }
      const auto rows = evaluate(x, split, opts);
      Output out(ev_c.out);
      write_eval_csv(out.stream(), rows);
      out.finish();
    } else if (*co_cmd) {
      const CountMatrix x = load_counts(co_c.in, co_c.format);
      const Cohort c = select_cohort(x, co);
      Output out(co_c.out);
      write_counts(out.stream(), c.counts, parse_count_format(co_out_format));
      out.finish();
      if (!co_rows_out.empty()) {
        Output ids(co_rows_out);
        auto& os = ids.stream();
        os << "kind,position,original\n";
        for (std::size_t j = 0; j < c.columns.size(); ++j)
          os << "column," << (j + 1) << "," << (c.columns[j] + 1) << "\n";
        std::size_t pos = 1;
        for (auto r : c.train_rows) os << "train," << pos++ << "," << (r + 1) << "\n";
        for (auto r : c.test_rows) os << "test," << pos++ << "," << (r + 1) << "\n";
        ids.finish();
      }
    }
  } catch (const Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::bad_alloc&) {
    return report(ErrorKind::numerical, "out of memory");
  }
  return 0;
}
