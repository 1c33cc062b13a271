#include "tdi/masking.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "tdi/csv.hpp"
#include "tdi/error.hpp"
#include "tdi/metrics.hpp"
#include "tdi/rng.hpp"

namespace tdi {

std::size_t masked_count(double p, std::size_t n_observed) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorKind::DomainError, "masking fraction must be in (0, 1]");
  const double c = std::round(p * static_cast<double>(n_observed));
  return c <= 0.0 ? 0 : static_cast<std::size_t>(c);
}

MaskedPanel mask_random(const PanelDataset& data, const MaskMatrix& mask, double p,
                        std::uint64_t seed) {
  if (!mask.matches(data)) throw Error(ErrorKind::ShapeMismatch, "mask_random: mask shape");
  const std::size_t D = data.n_variables();
  MaskingPlan plan;
  plan.fraction = p;
  plan.seed = seed;

  std::vector<Matrix> values;
  std::vector<MaskBlock> blocks = mask.blocks();
  for (const auto& pt : data.patients()) values.push_back(pt.values());

  for (std::size_t d = 0; d < D; ++d) {
    std::vector<CellRef> candidates;
    for (std::size_t i = 0; i < data.n_patients(); ++i) {
      for (std::size_t t = 0; t < data.patient(i).rows(); ++t) {
        if (mask(i, t, d)) candidates.push_back({i, t, d});
      }
    }
    const std::size_t take = masked_count(p, candidates.size());
    Rng rng(derive_seed(seed, fmt::format("mask.variable.{}", d)));
    // Partial Fisher-Yates: the first `take` slots become a uniform sample.
    for (std::size_t a = 0; a < take; ++a) {
      const std::size_t b = a + rng.uniform_index(candidates.size() - a);
      std::swap(candidates[a], candidates[b]);
    }
    candidates.resize(take);
    std::sort(candidates.begin(), candidates.end(), [](const CellRef& x, const CellRef& y) {
      return std::tie(x.patient, x.row) < std::tie(y.patient, y.row);
    });
    for (const auto& c : candidates) {
      const auto r = static_cast<Eigen::Index>(c.row);
      const auto col = static_cast<Eigen::Index>(c.variable);
      plan.masked_cells.push_back(c);
      plan.truth.push_back(values[c.patient](r, col));
      values[c.patient](r, col) = kMissing;
      blocks[c.patient](r, col) = 0;
    }
  }
  return MaskedPanel{data.with_values(std::move(values)), MaskMatrix(std::move(blocks)),
                     std::move(plan)};
}

PanelDataset run_competitor(const Competitor& c, const PanelDataset& data, const MaskMatrix& mask) {
  if (const auto* spec = std::get_if<ImputerSpec>(&c.spec)) return impute(data, *spec);
  return tdi_impute(data, mask, std::get<TdiSpec>(c.spec)).values;
}

std::string describe(const Competitor& c) {
  if (const auto* s = std::get_if<ImputerSpec>(&c.spec)) {
    return fmt::format(
        "{}: kind={} k={} lambda={} max_rank={} max_iter={} tol={} ridge_alpha={} clip={} seed={}",
        c.name, to_string(s->kind), s->k, s->lambda ? csv::format_double(*s->lambda) : "auto",
        s->max_rank, s->resolved_max_iter(), csv::format_double(s->resolved_tol()),
        csv::format_double(s->ridge_alpha), s->clip, s->seed);
  }
  const auto& t = std::get<TdiSpec>(c.spec);
  return fmt::format(
      "{}: kind=tdi weight.family={} weight.forced={} iterative.max_iter={} iterative.tol={} "
      "iterative.ridge_alpha={} iterative.clip={} seed={}",
      c.name, to_string(t.weight.family),
      t.weight.forced ? csv::format_double(*t.weight.forced) : "none",
      t.iterative.resolved_max_iter(), csv::format_double(t.iterative.resolved_tol()),
      csv::format_double(t.iterative.ridge_alpha), t.iterative.clip, t.seed);
}

namespace {

double mean_skipping_nan(const std::vector<VariableMetrics>& v, double VariableMetrics::*field) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& m : v) {
    if (std::isnan(m.*field)) continue;
    s += m.*field;
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

MetricBlock score(const PanelDataset& estimate, std::span<const CellRef> cells,
                  std::span<const double> truth, const std::vector<double>& ranges,
                  const std::vector<std::string>& names, const StandardizationParams* to_original) {
  const std::size_t D = names.size();
  std::vector<std::vector<double>> y(D), yhat(D);
  for (std::size_t a = 0; a < cells.size(); ++a) {
    const auto& c = cells[a];
    double est = estimate.patient(c.patient).values()(static_cast<Eigen::Index>(c.row),
                                                      static_cast<Eigen::Index>(c.variable));
    double tru = truth[a];
    if (to_original) {
      est = est * to_original->std[c.variable] + to_original->mean[c.variable];
      tru = tru * to_original->std[c.variable] + to_original->mean[c.variable];
    }
    y[c.variable].push_back(tru);
    yhat[c.variable].push_back(est);
  }
  MetricBlock block;
  for (std::size_t d = 0; d < D; ++d) {
    if (y[d].empty()) continue;
    VariableMetrics vm;
    vm.variable = names[d];
    vm.n_cells = y[d].size();
    vm.rmse = rmse(y[d], yhat[d]);
    vm.nrmse = ranges[d] > 0.0 ? vm.rmse / ranges[d] : std::numeric_limits<double>::quiet_NaN();
    vm.smape = smape(y[d], yhat[d]);
    block.per_variable.push_back(std::move(vm));
  }
  block.rmse = mean_skipping_nan(block.per_variable, &VariableMetrics::rmse);
  block.nrmse = mean_skipping_nan(block.per_variable, &VariableMetrics::nrmse);
  block.smape = mean_skipping_nan(block.per_variable, &VariableMetrics::smape);
  return block;
}

std::vector<double> true_ranges(const PanelDataset& data, const StandardizationParams* to_original) {
  const std::size_t D = data.n_variables();
  std::vector<double> lo(D, std::numeric_limits<double>::infinity());
  std::vector<double> hi(D, -std::numeric_limits<double>::infinity());
  for (const auto& p : data.patients()) {
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        if (const auto v = p.value(t, d)) {
          const double x = to_original ? *v * to_original->std[d] + to_original->mean[d] : *v;
          lo[d] = std::min(lo[d], x);
          hi[d] = std::max(hi[d], x);
        }
      }
    }
  }
  std::vector<double> r(D, 0.0);
  for (std::size_t d = 0; d < D; ++d) r[d] = hi[d] > lo[d] ? hi[d] - lo[d] : 0.0;
  return r;
}

MaskingReport run_benchmark(const PanelDataset& data, std::vector<Competitor> competitors, double p,
                            std::uint64_t seed, const StandardizationParams* params,
                            bool ffill_subset) {
  if (!ffill_subset) {
    for (const auto& c : competitors) {
      const auto* s = std::get_if<ImputerSpec>(&c.spec);
      if (s && s->kind == ImputerKind::forward_fill) {
        throw Error(ErrorKind::Config,
                    fmt::format("competitor '{}': forward_fill leaves cells empty; it is only "
                                "scored by the forward-fill subset benchmark",
                                c.name));
      }
    }
  }
  const MaskMatrix mask = build_mask(data);
  for (std::size_t d = 0; d < data.n_variables(); ++d) {
    bool any = false;
    for (std::size_t i = 0; i < data.n_patients() && !any; ++i) {
      any = mask.patient(i).col(static_cast<Eigen::Index>(d)).cast<int>().sum() > 0;
    }
    if (!any) {
      throw Error(ErrorKind::AllMissingColumn,
                  fmt::format("variable '{}' has no observed value", data.variables()[d].name));
    }
  }
  const MaskedPanel masked = mask_random(data, mask, p, seed);

  // Evaluation cells are fixed before any competitor runs.
  std::vector<CellRef> cells;
  std::vector<double> truth;
  if (ffill_subset) {
    const PanelDataset ff = forward_fill(masked.data);
    for (std::size_t a = 0; a < masked.plan.masked_cells.size(); ++a) {
      const auto& c = masked.plan.masked_cells[a];
      if (ff.patient(c.patient).observed(c.row, c.variable)) {
        cells.push_back(c);
        truth.push_back(masked.plan.truth[a]);
      }
    }
  } else {
    cells = masked.plan.masked_cells;
    truth = masked.plan.truth;
  }

  std::vector<std::string> names;
  for (const auto& v : data.variables()) names.push_back(v.name);
  const auto ranges = true_ranges(data, nullptr);
  const auto ranges_original = params ? true_ranges(data, params) : std::vector<double>{};

  const auto n = static_cast<std::ptrdiff_t>(competitors.size());
  std::vector<ImputerReport> reports(competitors.size());
  std::vector<std::exception_ptr> errors(competitors.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto& c = competitors[static_cast<std::size_t>(j)];
    try {
      const PanelDataset estimate = run_competitor(c, masked.data, masked.mask);
      for (const auto& cell : cells) {
        if (!estimate.patient(cell.patient).observed(cell.row, cell.variable)) {
          throw Error(ErrorKind::IncompleteEstimate, "estimate missing at an evaluated cell");
        }
      }
      ImputerReport rep;
      rep.name = c.name;
      rep.metrics = score(estimate, cells, truth, ranges, names, nullptr);
      if (params) {
        rep.original_units = score(estimate, cells, truth, ranges_original, names, params);
        // SMAPE is unit-dependent and unstable near zero, so the primary block
        // reports it in original units.
        for (std::size_t v = 0; v < rep.metrics.per_variable.size(); ++v) {
          rep.metrics.per_variable[v].smape = rep.original_units->per_variable[v].smape;
        }
        rep.metrics.smape = rep.original_units->smape;
      }
      reports[static_cast<std::size_t>(j)] = std::move(rep);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(j)] = std::make_exception_ptr(
          Error(e.kind(), fmt::format("competitor '{}': {}", c.name, e.what())));
    } catch (...) {
      errors[static_cast<std::size_t>(j)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MaskingReport report;
  report.protocol = ffill_subset ? "ffill_subset" : "random";
  report.fraction = p;
  report.seed = seed;
  report.n_masked_cells = masked.plan.masked_cells.size();
  report.n_evaluated_cells = cells.size();
  for (const auto& c : competitors) report.competitor_config.push_back(describe(c));
  report.imputers = std::move(reports);
  return report;
}

}  // namespace

MaskingReport run_masking_benchmark(const PanelDataset& data, std::span<const Competitor> competitors,
                                    double p, std::uint64_t seed,
                                    const StandardizationParams* params) {
  return run_benchmark(data, {competitors.begin(), competitors.end()}, p, seed, params, false);
}

MaskingReport run_ffill_subset_benchmark(const PanelDataset& data,
                                         std::span<const Competitor> competitors, double p,
                                         std::uint64_t seed, const StandardizationParams* params) {
  std::vector<Competitor> all(competitors.begin(), competitors.end());
  const bool has_ffill = std::any_of(all.begin(), all.end(), [](const Competitor& c) {
    const auto* s = std::get_if<ImputerSpec>(&c.spec);
    return s && s->kind == ImputerKind::forward_fill;
  });
  if (!has_ffill) {
    ImputerSpec ff;
    ff.kind = ImputerKind::forward_fill;
    all.push_back(Competitor{"forward_fill", ff});
  }
  return run_benchmark(data, std::move(all), p, seed, params, true);
}

std::vector<double> missing_rate_after_ffill(const PanelDataset& data, const MaskMatrix& mask) {
  if (!mask.matches(data)) throw Error(ErrorKind::ShapeMismatch, "missing_rate_after_ffill: mask shape");
  const std::size_t D = data.n_variables();
  const std::size_t total = data.total_rows();
  std::vector<double> rate(D, 0.0);
  if (total == 0) return rate;
  for (std::size_t d = 0; d < D; ++d) {
    std::size_t still_missing = 0;
    for (std::size_t i = 0; i < data.n_patients(); ++i) {
      // Everything before the first observation stays empty.
      std::size_t t = 0;
      const std::size_t rows = data.patient(i).rows();
      while (t < rows && !mask(i, t, d)) ++t;
      still_missing += t;
    }
    rate[d] = static_cast<double>(still_missing) / static_cast<double>(total);
  }
  return rate;
}

std::string MaskingReport::to_csv(bool original_units) const {
  std::string out = "imputer,variable,rmse,nrmse,smape\n";
  for (const auto& rep : imputers) {
    const MetricBlock* block = &rep.metrics;
    if (original_units) {
      if (!rep.original_units) continue;
      block = &*rep.original_units;
    }
    for (const auto& v : block->per_variable) {
      out += fmt::format("{},{},{},{},{}\n", rep.name, v.variable, csv::format_double(v.rmse),
                         csv::format_double(v.nrmse), csv::format_double(v.smape));
    }
    out += fmt::format("{},__overall__,{},{},{}\n", rep.name, csv::format_double(block->rmse),
                       csv::format_double(block->nrmse), csv::format_double(block->smape));
  }
  return out;
}

std::string MaskingReport::nrmse_plot_csv() const {
  std::string out = "variable";
  for (const auto& rep : imputers) out += "," + rep.name;
  out += "\n";
  if (imputers.empty()) return out;
  for (const auto& v : imputers.front().metrics.per_variable) {
    out += v.variable;
    for (const auto& rep : imputers) {
      double value = std::numeric_limits<double>::quiet_NaN();
      for (const auto& w : rep.metrics.per_variable) {
        if (w.variable == v.variable) value = w.nrmse;
      }
      out += "," + csv::format_double(value);
    }
    out += "\n";
  }
  return out;
}

namespace {

nlohmann::json number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::json block_json(const MetricBlock& b) {
  nlohmann::json j;
  j["overall"] = {{"rmse", number(b.rmse)}, {"nrmse", number(b.nrmse)}, {"smape", number(b.smape)}};
  auto& vars = j["variables"] = nlohmann::json::array();
  for (const auto& v : b.per_variable) {
    vars.push_back({{"variable", v.variable},
                    {"n_cells", v.n_cells},
                    {"rmse", number(v.rmse)},
                    {"nrmse", number(v.nrmse)},
                    {"smape", number(v.smape)}});
  }
  return j;
}

}  // namespace

std::string MaskingReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["fraction"] = fraction;
  j["seed"] = seed;
  j["n_masked_cells"] = n_masked_cells;
  j["n_evaluated_cells"] = n_evaluated_cells;
  j["config"] = competitor_config;
  const bool original = !imputers.empty() && imputers.front().original_units.has_value();
  j["smape_units"] = original ? "original" : "working";
  auto& imps = j["imputers"] = nlohmann::json::array();
  for (const auto& rep : imputers) {
    nlohmann::json r;
    r["name"] = rep.name;
    r["working_space"] = block_json(rep.metrics);
    if (rep.original_units) r["original_units"] = block_json(*rep.original_units);
    imps.push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

}  // namespace tdi
