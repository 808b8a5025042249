#pragma once

// Command-line front end. run_cli is the whole program; tools/ only wraps it
// in main() so tests can drive every subcommand in-process.
//
// Exit codes: 0 success, 1 verification failure, 2 input parse or I/O error,
// 3 shape or configuration error, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unialign/cli/config.hpp"
#include "unialign/cli/io.hpp"
#include "unialign/cli/plot.hpp"
#include "unialign/diagnostics.hpp"
#include "unialign/divergence.hpp"
#include "unialign/losses.hpp"
#include "unialign/trainer.hpp"

namespace unialign::cli {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr const char* kTrajectoryHeader =
    "epoch,loss_total,loss_uniformity,loss_align,loss_tuple_uniformity,loss_volume,zeta_mean,chi_mean,holder_div,seconds";

enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitParseError = 2,
  kExitConfigError = 3,
  kExitNumericalError = 4,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::IoError:
      return kExitParseError;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidWeights:
    case ErrorCode::BatchTooSmall:
    case ErrorCode::ZeroVector:
    case ErrorCode::DomainError:
      return kExitConfigError;
    case ErrorCode::DegenerateCentroid:
    case ErrorCode::UndefinedCosine:
    case ErrorCode::CalibrationFailure:
    case ErrorCode::NumericalUnderflow:
    case ErrorCode::GridTooCoarse:
    case ErrorCode::StepBlowup:
      return kExitNumericalError;
  }
  return kExitNumericalError;
}

enum class OutputFormat { Csv, Json };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  bool plot = false;
  OutputFormat format = OutputFormat::Csv;
};

namespace detail {

using nlohmann::ordered_json;

inline std::string num(double x) { return io::format_double(x); }

inline Config resolve_config(const GlobalOptions& g) {
  Config cfg = g.config_path.empty() ? Config{} : load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void emit_rows(std::ostream& out, OutputFormat format, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows, const std::vector<bool>& numeric) {
  if (format == OutputFormat::Csv) {
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << r[k];
      out << '\n';
    }
    return;
  }
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json obj;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (numeric[k])
        obj[header[k]] = std::stod(r[k]);
      else
        obj[header[k]] = r[k];
    }
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct EvalLossArgs {
  std::vector<std::string> inputs;
  bool normalize = false;
  std::string objective;
};

inline int cmd_eval_loss(const GlobalOptions& g, const EvalLossArgs& a, std::ostream& out) {
  const Config cfg = resolve_config(g);
  auto mats = io::load_embeddings(a.inputs);
  require(mats.size() >= 2, ErrorCode::InvalidArgument,
          "need at least two modalities, got " + std::to_string(mats.size()));
  const MultimodalBatch batch =
      a.normalize ? MultimodalBatch::normalized(mats, cfg.anchor) : MultimodalBatch::from_matrices(std::move(mats), cfg.anchor);
  const Objective objective = a.objective.empty() ? Objective::UniAlign : parse_objective(a.objective, "--objective");
  OptimizerSpec opt;
  opt.objective = objective;
  opt.loss = cfg.loss;
  const LossValue value = objective_loss(batch, opt).value;

  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, v] : value.per_term) rows.push_back({name, num(v)});
  rows.push_back({"total", num(value.total)});
  if (g.format == OutputFormat::Csv) {
    emit_rows(out, g.format, {"term", "value"}, rows, {false, true});
  } else {
    ordered_json j;
    j["objective"] = to_string(objective);
    j["total"] = value.total;
    j["per_term"] = ordered_json::object();
    for (const auto& [name, v] : value.per_term) j["per_term"][name] = v;
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  bool h_sweep = false;
  std::string corrupt_term;  // test hook: perturbs one analytic gradient
};

inline std::vector<MultimodalBatch> gradcheck_batches(const Config& cfg) {
  const auto& g = cfg.gradcheck;
  require(g.batches >= 1, ErrorCode::InvalidArgument, "gradcheck.batches must be >= 1");
  require(!g.batch_sizes.empty() && !g.modalities.empty() && !g.dims.empty(), ErrorCode::InvalidArgument,
          "gradcheck shape lists must not be empty");
  std::vector<MultimodalBatch> out;
  const std::size_t nb = g.batch_sizes.size();
  const std::size_t nm = g.modalities.size();
  const std::size_t nd = g.dims.size();
  for (int k = 0; k < g.batches; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const int b = g.batch_sizes[ku % nb];
    const int m = g.modalities[(ku / nb) % nm];
    const int d = g.dims[(ku / (nb * nm)) % nd];
    out.push_back(random_batch(b, m, d, stream_seed(cfg.seed, ku)));
  }
  return out;
}

inline std::map<LossTerm, double> gradcheck_all(const std::vector<MultimodalBatch>& batches, const LossConfig& loss,
                                                double h, const GradientHook& hook) {
  std::map<LossTerm, double> worst;
  for (const auto& b : batches) {
    const auto report = gradcheck(b, loss, h, kAllLossTerms, hook);
    for (const auto& e : report.entries) worst[e.term] = std::max(worst[e.term], e.max_rel_error);
  }
  return worst;
}

inline int cmd_gradcheck(const GlobalOptions& g, const GradcheckArgs& a, std::ostream& out) {
  const Config cfg = resolve_config(g);
  const auto batches = gradcheck_batches(cfg);
  GradientHook hook;
  if (!a.corrupt_term.empty()) {
    const bool known = std::any_of(std::begin(kAllLossTerms), std::end(kAllLossTerms),
                                   [&](LossTerm t) { return to_string(t) == a.corrupt_term; });
    require(known, ErrorCode::InvalidArgument, "unknown loss term '" + a.corrupt_term + "'");
    hook = [term = a.corrupt_term](LossTerm t, std::vector<Matrix>& grad) {
      if (to_string(t) == term) grad.front()(0, 0) += 1e-2 * (1.0 + std::abs(grad.front()(0, 0)));
    };
  }

  if (a.h_sweep) {
    std::vector<std::vector<std::string>> rows;
    for (double h : {1e-3, 1e-4, 1e-5}) {
      const auto worst = gradcheck_all(batches, cfg.loss, h, hook);
      double m = 0.0;
      for (const auto& [t, e] : worst) m = std::max(m, e);
      rows.push_back({num(h), num(m)});
    }
    emit_rows(out, g.format, {"h", "max_rel_error"}, rows, {true, true});
    return kExitOk;
  }

  const auto worst = gradcheck_all(batches, cfg.loss, cfg.gradcheck.step, hook);
  bool ok = true;
  std::vector<std::vector<std::string>> rows;
  for (LossTerm t : kAllLossTerms) {
    const double e = worst.at(t);
    const bool pass = e < cfg.gradcheck.threshold;
    ok = ok && pass;
    rows.push_back({std::string(to_string(t)), num(e), pass ? "pass" : "fail"});
  }
  emit_rows(out, g.format, {"loss", "max_rel_error", "status"}, rows, {false, true, false});
  return ok ? kExitOk : kExitVerificationFailed;
}

// ---------------------------------------------------------------------------

inline int cmd_conflict_scan(const GlobalOptions& g, std::ostream& out) {
  const Config cfg = resolve_config(g);
  const auto& c = cfg.conflict;
  require(!c.modalities.empty(), ErrorCode::InvalidArgument, "conflict.modalities must not be empty");
  SystematicConflictModel model;
  model.dim = c.dim;
  model.c0 = c.c0;
  model.sigma = c.sigma;
  model.seed = cfg.seed;
  const auto zetas = simulate_prop1(model, c.modalities, c.trials);
  const auto chis = verify_prop2(c.chi_dim, c.modalities, c.mu_bar, c.chi_trials, cfg.seed);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < c.modalities.size(); ++k) {
    rows.push_back({std::to_string(c.modalities[k]), num(zetas[k].estimate.mean), num(zetas[k].estimate.std_error),
                    num(chis.rows[k].chi.mean), num(chis.rows[k].chi.std_error), num(chis.rows[k].bound)});
  }
  emit_rows(out, g.format, {"M", "zeta_mean", "zeta_se", "chi_mean", "chi_se", "chi_bound"}, rows,
            {true, true, true, true, true, true});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<int> epochs;
  std::string objective;
  bool wall_clock = false;
};

inline std::string trajectory_row(const TrajectoryRecord& r, bool wall_clock) {
  return std::to_string(r.epoch) + "," + num(r.loss_total) + "," + num(r.loss_uniformity) + "," + num(r.loss_align) +
         "," + num(r.loss_tuple_uniformity) + "," + num(r.loss_volume) + "," + num(r.zeta_mean) + "," +
         num(r.chi_mean) + "," + num(r.holder_div) + "," + num(wall_clock ? r.seconds : 0.0);
}

inline int cmd_train(const GlobalOptions& g, const TrainArgs& a, std::ostream& out) {
  Config cfg = resolve_config(g);
  if (a.epochs) cfg.optimizer.epochs = *a.epochs;
  if (!a.objective.empty()) cfg.objective = parse_objective(a.objective, "--objective");
  const OptimizerSpec opt = cfg.resolved_optimizer();
  const SyntheticSpec data = cfg.resolved_data();
  opt.validate();
  data.validate();

  const fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create output directory " + dir.string() + ": " + ec.message());

  const auto started = std::chrono::system_clock::now();
  const auto records = run(data, opt);
  const auto finished = std::chrono::system_clock::now();

  std::string csv = std::string(kTrajectoryHeader) + "\n";
  for (const auto& r : records) csv += trajectory_row(r, a.wall_clock) + "\n";
  const fs::path csv_path = dir / "trajectory.csv";
  io::detail::write_file(csv_path, csv);

  const double initial = records.front().holder_div;
  const double final_value = records.back().holder_div;
  ordered_json summary;
  summary["objective"] = to_string(opt.objective);
  summary["seed"] = cfg.seed;
  summary["epochs"] = opt.epochs;
  summary["records"] = records.size();
  summary["initial_holder_div"] = initial;
  summary["final_holder_div"] = final_value;
  summary["ratio"] = initial != 0.0 ? final_value / initial : 0.0;
  summary["final_loss_total"] = records.back().loss_total;
  summary["config_hash"] = config_hash(cfg);
  const fs::path summary_path = dir / "summary.json";
  io::detail::write_file(summary_path, summary.dump(2) + "\n");

  std::vector<std::string> outputs{csv_path.string(), summary_path.string()};
  if (g.plot) {
    LineSeries s{to_string(opt.objective), {}, {}};
    for (const auto& r : records) {
      s.x.push_back(r.epoch);
      s.y.push_back(r.holder_div);
    }
    const fs::path svg_path = dir / "holder_div.svg";
    io::detail::write_file(svg_path, render_line_chart({s}, "divergence during training", "epoch", "holder_div"));
    outputs.push_back(svg_path.string());
  }

  ordered_json manifest;
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["artifact_version"] = kArtifactVersion;
  manifest["started_at"] = utc_timestamp(started);
  manifest["finished_at"] = utc_timestamp(finished);
  manifest["wall_seconds"] = std::chrono::duration<double>(finished - started).count();
  manifest["outputs"] = outputs;
  manifest["config"] = canonical_config(cfg);
  io::detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  out << summary.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DivergenceArgs {
  std::vector<std::string> inputs;
  std::optional<double> tau;
  bool normalized = false;
  std::string joint;
};

inline int cmd_divergence(const GlobalOptions& g, const DivergenceArgs& a, std::ostream& out) {
  Config cfg = resolve_config(g);
  if (a.tau) cfg.divergence.tau = *a.tau;
  if (a.normalized) cfg.divergence.normalized = true;
  if (!a.joint.empty()) set_config_value(cfg, "divergence", "joint", a.joint);
  const auto samples = io::load_embeddings(a.inputs);
  require(samples.size() >= 2, ErrorCode::InvalidArgument,
          "need at least two sample sets, got " + std::to_string(samples.size()));
  const auto est = holder_kde(samples, cfg.divergence.tau, cfg.divergence.normalized, cfg.divergence.joint);
  if (g.format == OutputFormat::Csv) {
    emit_rows(out, g.format, {"quantity", "value"},
              {{"holder_div", num(est.value)},
               {"uniformity_term", num(est.uniformity_term)},
               {"alignment_term", num(est.alignment_term)},
               {"tau", num(est.bandwidth)},
               {"normalized", est.normalized_kernel ? "1" : "0"}},
              {false, true});
  } else {
    ordered_json j;
    j["holder_div"] = est.value;
    j["uniformity_term"] = est.uniformity_term;
    j["alignment_term"] = est.alignment_term;
    j["tau"] = est.bandwidth;
    j["normalized"] = est.normalized_kernel;
    j["joint"] = cfg.divergence.joint == JointAnchor::First ? "first" : "averaged";
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

}  // namespace detail

/// Parses argv and runs one subcommand. Never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal alignment/uniformity laboratory", "unialign"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  std::string format = "csv";
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stream");
  app.add_option("--config", g.config_path, "INI configuration file");
  app.add_option("--out-dir", g.out_dir, "Directory for written artifacts");
  app.add_flag("--plot", g.plot, "Also write an SVG plot");
  app.add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));

  detail::EvalLossArgs eval_args;
  auto* eval = app.add_subcommand("eval-loss", "Evaluate the objective on embeddings");
  eval->add_option("inputs", eval_args.inputs, "UAEB file, or one text file per modality")->required();
  eval->add_flag("--normalize", eval_args.normalize, "Normalize rows instead of rejecting non-unit rows");
  eval->add_option("--objective", eval_args.objective, "infonce | unialign | unialign_plus");

  detail::GradcheckArgs grad_args;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_flag("--h-sweep", grad_args.h_sweep, "Report the worst error at h = 1e-3, 1e-4, 1e-5");
  grad->add_option("--corrupt-gradient", grad_args.corrupt_term)->group("");

  auto* scan = app.add_subcommand("conflict-scan", "Monte-Carlo conflict metrics against modality count");

  detail::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Optimize free embeddings and record trajectories");
  int epochs = 0;
  auto* epochs_opt = train->add_option("--epochs", epochs, "Override trainer.epochs");
  train->add_option("--objective", train_args.objective, "infonce | unialign | unialign_plus");
  train->add_flag("--wall-clock", train_args.wall_clock, "Fill the seconds column with elapsed time");

  detail::DivergenceArgs div_args;
  auto* div = app.add_subcommand("divergence", "KDE divergence between sample sets");
  div->add_option("inputs", div_args.inputs, "UAEB file, or one file per modality")->required();
  double tau = 0.0;
  auto* tau_opt = div->add_option("--tau", tau, "Kernel bandwidth");
  div->add_flag("--normalized", div_args.normalized, "Use the normalized Gaussian kernel");
  div->add_option("--joint", div_args.joint, "first | averaged");

  std::vector<std::string> args;
  for (int k = argc - 1; k >= 1; --k) args.emplace_back(argv[k]);
  try {
    app.parse(args);
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParseError;
  }
  if (*seed_opt) g.seed = seed;
  g.format = format == "json" ? OutputFormat::Json : OutputFormat::Csv;
  if (*epochs_opt) train_args.epochs = epochs;
  if (*tau_opt) div_args.tau = tau;

  try {
    if (*eval) return detail::cmd_eval_loss(g, eval_args, out);
    if (*grad) return detail::cmd_gradcheck(g, grad_args, out);
    if (*scan) return detail::cmd_conflict_scan(g, out);
    if (*train) return detail::cmd_train(g, train_args, out);
    if (*div) return detail::cmd_divergence(g, div_args, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumericalError;
  }
  return kExitParseError;
}

}  // namespace unialign::cli
