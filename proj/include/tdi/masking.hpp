#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tdi/fusion.hpp"
#include "tdi/imputers.hpp"
#include "tdi/ingest.hpp"
#include "tdi/panel.hpp"

namespace tdi {

struct CellRef {
  std::size_t patient;
  std::size_t row;
  std::size_t variable;

  friend bool operator==(const CellRef&, const CellRef&) = default;
};

/// Which observed cells were hidden, and their true values (same order).
struct MaskingPlan {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<CellRef> masked_cells;
  std::vector<double> truth;
};

struct MaskedPanel {
  PanelDataset data;
  MaskMatrix mask;
  MaskingPlan plan;
};

/// round-half-away-from-zero(p * n_observed)
std::size_t masked_count(double p, std::size_t n_observed);

/// Hides exactly masked_count(p, n_d) observed cells of every variable d,
/// drawn uniformly without replacement.
MaskedPanel mask_random(const PanelDataset& data, const MaskMatrix& mask, double p,
                        std::uint64_t seed);

/// A named entry of the benchmark registry.
struct Competitor {
  std::string name;
  std::variant<ImputerSpec, TdiSpec> spec;
};

/// Runs one competitor; the result is complete except for forward_fill.
PanelDataset run_competitor(const Competitor& c, const PanelDataset& data, const MaskMatrix& mask);

struct VariableMetrics {
  std::string variable;
  std::size_t n_cells = 0;
  double rmse = 0.0;
  double nrmse = 0.0;  // NaN when the variable's true range is zero
  double smape = 0.0;
};

struct MetricBlock {
  std::vector<VariableMetrics> per_variable;
  /// Unweighted means over variables (NaN entries skipped).
  double rmse = 0.0;
  double nrmse = 0.0;
  double smape = 0.0;
};

struct ImputerReport {
  std::string name;
  /// Metrics in the space the benchmark ran in (standardized when the
  /// caller standardized upstream).
  MetricBlock metrics;
  /// Same metrics after mapping values back to original units; present when
  /// standardization parameters were supplied.
  std::optional<MetricBlock> original_units;
};

struct MaskingReport {
  std::string protocol;  // "random" or "ffill_subset"
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_masked_cells = 0;
  std::size_t n_evaluated_cells = 0;
  std::vector<std::string> competitor_config;  // echo, one line per competitor
  std::vector<ImputerReport> imputers;

  /// `imputer,variable,rmse,nrmse,smape` with one `__overall__` row per imputer.
  std::string to_csv(bool original_units = false) const;
  /// Variables as rows, one NRMSE column per imputer.
  std::string nrmse_plot_csv() const;
  std::string to_json() const;
};

std::string describe(const Competitor& c);

/// Masks once, runs every competitor on the same masked panel and scores
/// each at the masked cells. forward_fill is rejected here (its output is
/// incomplete); use run_ffill_subset_benchmark for it.
MaskingReport run_masking_benchmark(const PanelDataset& data, std::span<const Competitor> competitors,
                                    double p, std::uint64_t seed,
                                    const StandardizationParams* params = nullptr);

/// As run_masking_benchmark, but scored only on masked cells that forward
/// filling can fill. A forward_fill competitor is added when absent.
MaskingReport run_ffill_subset_benchmark(const PanelDataset& data,
                                         std::span<const Competitor> competitors, double p,
                                         std::uint64_t seed,
                                         const StandardizationParams* params = nullptr);

/// Per variable, the fraction of all cells still missing after forward filling.
std::vector<double> missing_rate_after_ffill(const PanelDataset& data, const MaskMatrix& mask);

}  // namespace tdi
