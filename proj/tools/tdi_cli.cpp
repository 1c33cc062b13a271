// tdi: reproducible imputation, masking-evaluation and prediction runs driven
// by one config file. Exit codes: 0 ok, 1 config, 2 data, 3 numerical.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tdi/config.hpp"
#include "tdi/csv.hpp"
#include "tdi/error.hpp"
#include "tdi/fusion.hpp"
#include "tdi/imputers.hpp"
#include "tdi/ingest.hpp"
#include "tdi/masking.hpp"
#include "tdi/predict.hpp"
#include "tdi/rng.hpp"

namespace fs = std::filesystem;
using namespace tdi;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 1;
    case ErrorKind::SingularSystem:
    case ErrorKind::DomainError:
    case ErrorKind::NonFiniteFeature:
    case ErrorKind::IncompleteEstimate: return 3;
    default: return 2;
  }
}

// Everything a command produces, written only once the command has succeeded.
using Outputs = std::map<fs::path, std::string>;

struct Loaded {
  PanelDataset data;
  std::optional<PanelDataset> truth;
  std::optional<LabelTable> labels;
  std::optional<StaticsTable> statics;
};

Loaded load(const RunConfig& cfg) {
  Loaded out;
  if (cfg.data.input) {
    auto records = parse_long_csv(*cfg.data.input, cfg.data.variables);
    std::optional<RangeTable> ranges;
    if (cfg.data.ranges) {
      ranges = parse_ranges_csv(*cfg.data.ranges);
      records = remove_outliers(std::move(records), *ranges).records;
    }
    out.data = discretize(records, cfg.data.grid_hours, cfg.data.variables,
                          ranges ? &*ranges : nullptr);
  } else {
    const SyntheticPanel synth = generate_synthetic(cfg.synth.panel);
    const auto y = linear_risk_labels(synth.truth, cfg.synth.label_variables, cfg.predict.task.window_hours,
                                      cfg.predict.task.n_obs, cfg.synth.label_strength,
                                      cfg.synth.label_offset, derive_seed(cfg.seed, "labels"));
    LabelTable labels;
    for (std::size_t i = 0; i < y.size(); ++i) labels[synth.truth.patient(i).id()] = PatientLabel{y[i], {}};
    out.data = synth.observed;
    out.truth = synth.truth;
    out.labels = std::move(labels);
  }
  if (cfg.data.subsample && *cfg.data.subsample < out.data.n_patients()) {
    const auto seed = derive_seed(cfg.seed, "subsample");
    out.data = subsample_patients(out.data, *cfg.data.subsample, seed);
    if (out.truth) out.truth = subsample_patients(*out.truth, *cfg.data.subsample, seed);
  }
  if (cfg.data.labels) out.labels = parse_labels_csv(*cfg.data.labels);
  if (cfg.data.statics) out.statics = parse_statics_csv(*cfg.data.statics);
  return out;
}

ImputationResult run_single(const Competitor& c, const PanelDataset& data, const MaskMatrix& mask) {
  if (const auto* spec = std::get_if<ImputerSpec>(&c.spec)) {
    if (spec->kind != ImputerKind::forward_fill) return merge_imputed(data, mask, impute(data, *spec));
    // Forward filling leaves leading gaps; they stay empty in the output.
    const PanelDataset filled = forward_fill(data);
    ImputationResult r;
    r.values = filled;
    for (std::size_t i = 0; i < data.n_patients(); ++i) {
      const auto& b = mask.patient(i);
      SourceBlock src(b.rows(), b.cols());
      for (Eigen::Index t = 0; t < b.rows(); ++t) {
        for (Eigen::Index d = 0; d < b.cols(); ++d) {
          src(t, d) = static_cast<std::uint8_t>(b(t, d) ? CellSource::observed : CellSource::forward_fill);
        }
      }
      r.provenance.push_back(std::move(src));
      r.weights.emplace_back(Matrix::Constant(b.rows(), b.cols(), kMissing));
    }
    return r;
  }
  return tdi_impute(data, mask, std::get<TdiSpec>(c.spec));
}

std::string provenance_csv(const ImputationResult& r) {
  std::string out = "patient_id,time,variable,source,weight\n";
  const auto& data = r.values;
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto& p = data.patient(i);
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < data.n_variables(); ++d) {
        const auto w = r.weight(i, t, d);
        const bool empty = !p.value(t, d).has_value();
        out += fmt::format("{},{},{},{},{}\n", p.id(), csv::format_double(p.time(t)),
                           data.variables()[d].name, empty ? "missing" : to_string(r.source(i, t, d)),
                           w ? csv::format_double(*w) : "");
      }
    }
  }
  return out;
}

StandardizationParams fit_with_warning(const PanelDataset& data) {
  StandardizationParams params = fit_standardizer(data);
  for (const auto& name : params.degenerate) {
    fmt::print(stderr, "warning: variable '{}' has zero spread; its std is clamped to 1\n", name);
  }
  return params;
}

PanelDataset to_output_units(const PanelDataset& values, const StandardizationParams* params) {
  return params ? invert_standardizer(values, *params) : values;
}

void cmd_impute(const RunConfig& cfg, const fs::path& out_dir, Outputs& outputs) {
  const Loaded in = load(cfg);
  std::optional<StandardizationParams> params;
  PanelDataset data = in.data;
  if (cfg.data.standardize) {
    params = fit_with_warning(data);
    data = apply_standardizer(data, *params);
  }
  const MaskMatrix mask = build_mask(data);
  const StandardizationParams* pp = params ? &*params : nullptr;
  const Competitor method = cfg.competitor(cfg.impute_method);

  if (cfg.m >= 2) {
    if (!std::holds_alternative<TdiSpec>(method.spec)) {
      throw Error(ErrorKind::Config, "config: [tdi] m >= 2 requires [impute] method = \"tdi\"");
    }
    const TdiSpec& spec = std::get<TdiSpec>(method.spec);
    const MultipleImputation mi = multiple_impute(data, mask, spec, cfg.m);
    for (std::size_t j = 0; j < cfg.m; ++j) {
      const auto seed = spec.seed + j;
      outputs[out_dir / fmt::format("imputed_seed{}.csv", seed)] =
          to_long_csv(to_output_units(mi.runs[j].values, pp));
      outputs[out_dir / fmt::format("provenance_seed{}.csv", seed)] = provenance_csv(mi.runs[j]);
    }
    std::string summary = "patient_id,time,variable,mean,variance\n";
    for (std::size_t i = 0; i < data.n_patients(); ++i) {
      const auto& p = data.patient(i);
      for (std::size_t t = 0; t < p.rows(); ++t) {
        for (std::size_t d = 0; d < data.n_variables(); ++d) {
          if (mask(i, t, d)) continue;
          const auto r = static_cast<Eigen::Index>(t);
          const auto c = static_cast<Eigen::Index>(d);
          double mean = mi.mean[i](r, c);
          double var = mi.variance[i](r, c);
          if (pp) {
            mean = mean * pp->std[d] + pp->mean[d];
            var *= pp->std[d] * pp->std[d];
          }
          summary += fmt::format("{},{},{},{},{}\n", p.id(), csv::format_double(p.time(t)),
                                 data.variables()[d].name, csv::format_double(mean),
                                 csv::format_double(var));
        }
      }
    }
    outputs[out_dir / "variance.csv"] = std::move(summary);
    return;
  }
  const ImputationResult r = run_single(method, data, mask);
  outputs[out_dir / "imputed.csv"] = to_long_csv(to_output_units(r.values, pp));
  outputs[out_dir / "provenance.csv"] = provenance_csv(r);
}

void cmd_mask_eval(const RunConfig& cfg, const fs::path& out_dir, Outputs& outputs, bool ffill_subset) {
  const Loaded in = load(cfg);
  std::optional<StandardizationParams> params;
  PanelDataset data = in.data;
  if (cfg.data.standardize) {
    params = fit_with_warning(data);
    data = apply_standardizer(data, *params);
  }
  std::vector<Competitor> competitors;
  for (const auto& name : cfg.masking.competitors) competitors.push_back(cfg.competitor(name));
  const StandardizationParams* pp = params ? &*params : nullptr;
  const MaskingReport report =
      ffill_subset ? run_ffill_subset_benchmark(data, competitors, cfg.masking.p, cfg.masking.seed, pp)
                   : run_masking_benchmark(data, competitors, cfg.masking.p, cfg.masking.seed, pp);
  const std::string stem = ffill_subset ? "ffill_eval" : "mask_eval";
  outputs[out_dir / (stem + ".csv")] = report.to_csv();
  if (pp) outputs[out_dir / (stem + "_original_units.csv")] = report.to_csv(true);
  outputs[out_dir / (stem + ".json")] = report.to_json();
  outputs[out_dir / (stem + "_nrmse_plot.csv")] = report.nrmse_plot_csv();
}

void cmd_predict(const RunConfig& cfg, const fs::path& out_dir, Outputs& outputs) {
  const Loaded in = load(cfg);
  if (!in.labels) throw Error(ErrorKind::Config, "config: predict needs [data] labels for ingested data");
  const Cohort cohort =
      build_cohort(in.data, *in.labels, in.statics ? &*in.statics : nullptr, cfg.predict.task);
  std::string summary = "method,n_patients,auroc_mean,auroc_median,auroc_sd,aupr_mean,aupr_median,aupr_sd\n";
  for (const auto& name : cfg.predict.methods) {
    const Competitor c = cfg.competitor(name);
    const ImputationMethod method =
        std::holds_alternative<TdiSpec>(c.spec) ? ImputationMethod(std::get<TdiSpec>(c.spec))
                                                : ImputationMethod(std::get<ImputerSpec>(c.spec));
    const CvResult r = cross_validate(cohort, method, cfg.predict.cv, cfg.predict.task, cfg.predict.logistic);
    outputs[out_dir / fmt::format("predict_{}.csv", name)] = r.to_csv();
    summary += fmt::format("{},{},{},{},{},{},{},{}\n", name, cohort.labels.size(),
                           csv::format_double(r.auroc.mean), csv::format_double(r.auroc.median),
                           csv::format_double(r.auroc.sd), csv::format_double(r.aupr.mean),
                           csv::format_double(r.aupr.median), csv::format_double(r.aupr.sd));
  }
  outputs[out_dir / "predict_summary.csv"] = std::move(summary);
}

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, Outputs& outputs) {
  if (cfg.data.input) throw Error(ErrorKind::Config, "config: synth ignores [data] input; remove it");
  const Loaded in = load(cfg);
  outputs[out_dir / "truth.csv"] = to_long_csv(*in.truth);
  outputs[out_dir / "observed.csv"] = to_long_csv(in.data);
  std::string labels = "patient_id,label\n";
  for (const auto& p : in.data.patients()) {
    labels += fmt::format("{},{}\n", p.id(), in.labels->at(p.id()).label);
  }
  outputs[out_dir / "labels.csv"] = std::move(labels);
}

void cmd_stats(const RunConfig& cfg, const fs::path& out_dir, Outputs& outputs) {
  const Loaded in = load(cfg);
  const PanelDataset& data = in.data;
  const MaskMatrix mask = build_mask(data);
  const auto freq = compute_frequencies(data, mask, cfg.tdi.pooling);
  const auto after_ffill = missing_rate_after_ffill(data, mask);
  const double total = static_cast<double>(data.total_rows());
  std::string out = "variable,n_observed,mean,sd,missing_rate,frequency,missing_rate_after_ffill\n";
  for (std::size_t d = 0; d < data.n_variables(); ++d) {
    std::vector<double> v;
    for (const auto& p : data.patients()) {
      for (std::size_t t = 0; t < p.rows(); ++t) {
        if (const auto x = p.value(t, d)) v.push_back(*x);
      }
    }
    double mean = kMissing, sd = kMissing;
    if (!v.empty()) {
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
    }
    if (v.size() >= 2) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    out += fmt::format("{},{},{},{},{},{},{}\n", data.variables()[d].name, v.size(),
                       csv::format_double(mean), csv::format_double(sd),
                       csv::format_double(1.0 - static_cast<double>(v.size()) / total),
                       csv::format_double(freq[d]), csv::format_double(after_ffill[d]));
  }
  outputs[out_dir / "stats.csv"] = std::move(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-dependent imputation toolkit"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"impute", "Impute a panel and write the completed values with provenance"},
      {"mask-eval", "Mask observed cells at random and score every competitor"},
      {"ffill-eval", "Masking benchmark scored on cells forward filling can reach"},
      {"predict", "Cross-validated outcome prediction on imputed features"},
      {"synth", "Write a synthetic panel, its ground truth and labels"},
      {"stats", "Per-variable missingness and frequency table"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Run configuration file")->required();
    sub->add_option("--seed", seed, "Override the top-level seed");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = load_run_config(config_path, seed);
    Outputs outputs;
    const fs::path out(out_dir);
    if (command == "impute") cmd_impute(cfg, out, outputs);
    else if (command == "mask-eval") cmd_mask_eval(cfg, out, outputs, false);
    else if (command == "ffill-eval") cmd_mask_eval(cfg, out, outputs, true);
    else if (command == "predict") cmd_predict(cfg, out, outputs);
    else if (command == "synth") cmd_synth(cfg, out, outputs);
    else cmd_stats(cfg, out, outputs);
    for (const auto& [path, contents] : outputs) csv::write_file(path, contents);
    for (const auto& [path, _] : outputs) fmt::print("wrote {}\n", path.string());
    return 0;
  } catch (const Error& e) {
    fmt::print(stderr, "tdi {}: {} error: {}\n", command, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "tdi {}: {}\n", command, e.what());
    return 2;
  }
}
