#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tdi/imputers.hpp"
#include "tdi/panel.hpp"

namespace tdi {

enum class WeightFamily {
  reciprocal,   // 1 / (1 + f r dt)
  exponential,  // exp(-f r dt)
};

std::string_view to_string(WeightFamily family) noexcept;
std::optional<WeightFamily> parse_weight_family(std::string_view name) noexcept;

struct WeightConfig {
  WeightFamily family = WeightFamily::reciprocal;
  /// Ablation override: every fused cell gets this weight instead of the
  /// family's value. 1 reproduces forward filling, 0 the iterative imputer.
  std::optional<double> forced;
};

enum class FrequencyPooling {
  pooled,       // 1 / mean of every consecutive gap in the cohort
  per_patient,  // 1 / mean over patients of each patient's mean gap
};

struct TdiSpec {
  WeightConfig weight;
  ImputerSpec iterative = ImputerSpec::iterative_defaults();
  std::uint64_t seed = 0;
  FrequencyPooling pooling = FrequencyPooling::pooled;

  void validate() const;
};

/// Inputs of the weight function for every cell.
struct TdiStatistics {
  /// Hours since the last observation of each variable (0 when observed now,
  /// +inf before the first observation).
  std::vector<Matrix> delta;
  /// Fraction of the D variables observed at each row.
  std::vector<Vector> availability;
  /// Per-variable measurement frequency (1/hours); 0 when no patient has two
  /// observations of the variable.
  std::vector<double> frequency;
};

std::vector<Matrix> compute_deltas(const PanelDataset& data, const MaskMatrix& mask);
std::vector<Vector> compute_availability(const MaskMatrix& mask);
std::vector<double> compute_frequencies(const PanelDataset& data, const MaskMatrix& mask,
                                        FrequencyPooling pooling = FrequencyPooling::pooled);
TdiStatistics compute_statistics(const PanelDataset& data, const MaskMatrix& mask,
                                 FrequencyPooling pooling = FrequencyPooling::pooled);

/// Forward-fill weight in [0, 1]. dt = +inf gives 0 for every f and r.
double weight(double f, double r, double dt, const WeightConfig& cfg = {});

/// Fuses forward filling and the iterative imputer cell by cell:
/// w * ffill + (1 - w) * iterative, falling back to the iterative estimate
/// where forward filling has no value. `frequencies` overrides the f
/// statistic (e.g. with training-fold values); by default it is computed on
/// `data`.
ImputationResult tdi_impute(const PanelDataset& data, const MaskMatrix& mask, const TdiSpec& spec,
                            std::optional<std::span<const double>> frequencies = std::nullopt);

struct MultipleImputation {
  std::vector<ImputationResult> runs;
  /// Per-cell mean and unbiased variance across runs.
  std::vector<Matrix> mean;
  std::vector<Matrix> variance;
};

/// m runs with seeds spec.seed, spec.seed + 1, ...; the iterative imputer is
/// switched to posterior sampling so that runs differ.
MultipleImputation multiple_impute(const PanelDataset& data, const MaskMatrix& mask,
                                   const TdiSpec& spec, std::size_t m,
                                   std::optional<std::span<const double>> frequencies = std::nullopt);

}  // namespace tdi
