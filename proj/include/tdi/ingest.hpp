#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdi/panel.hpp"

namespace tdi {

/// One raw long-format measurement.
struct LongRecord {
  std::string patient_id;
  double time;  // hours since admission
  std::string variable;
  double value;

  friend bool operator==(const LongRecord&, const LongRecord&) = default;
};

using RangeTable = std::map<std::string, ValueRange, std::less<>>;

/// Parses `patient_id,time,variable,value` records. An empty
/// `declared_variables` accepts any variable name.
std::vector<LongRecord> parse_long_csv(const std::filesystem::path& path,
                                       std::span<const std::string> declared_variables = {});
std::vector<LongRecord> parse_long_csv_text(std::string_view text,
                                            std::span<const std::string> declared_variables = {});

/// Parses a `variable,low,high` table.
RangeTable parse_ranges_csv(const std::filesystem::path& path);
RangeTable parse_ranges_csv_text(std::string_view text);

struct OutlierFilterResult {
  std::vector<LongRecord> records;
  std::size_t n_dropped = 0;
};

/// Drops values outside their variable's inclusive [low, high]. Variables
/// without a range are kept unconditionally.
OutlierFilterResult remove_outliers(std::vector<LongRecord> records, const RangeTable& ranges);

/// Bins records to floor(time / grid_hours) per patient, averaging repeated
/// values of a variable inside a bin. Rows are labelled with the bin start
/// time. Variables are ordered as `variable_order` when given, otherwise by
/// first appearance; patients by first appearance.
PanelDataset discretize(std::span<const LongRecord> records, double grid_hours,
                        std::span<const std::string> variable_order = {},
                        const RangeTable* ranges = nullptr);

/// Long-format CSV of every present cell, in panel order.
std::string to_long_csv(const PanelDataset& data);

struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> std;
  /// Variables whose spread was zero (or had < 2 values); their std is clamped to 1.
  std::vector<std::string> degenerate;
};

StandardizationParams fit_standardizer(const PanelDataset& data);
PanelDataset apply_standardizer(const PanelDataset& data, const StandardizationParams& params);
PanelDataset invert_standardizer(const PanelDataset& data, const StandardizationParams& params);

struct SyntheticConfig {
  std::size_t n_patients = 100;
  std::size_t n_timepoints = 48;
  std::size_t n_variables = 8;
  double temporal_corr = 0.9;
  double cross_corr = 0.5;
  /// Per-variable MCAR probability; a single entry applies to every variable.
  std::vector<double> missing_profile{0.5};
  double step_hours = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  double missing_probability(std::size_t d) const;
};

struct SyntheticPanel {
  PanelDataset truth;
  PanelDataset observed;
  MaskMatrix mask;
};

/// Cross-correlated AR(1) panel: each variable is a loading on a shared
/// latent AR(1) factor plus its own AR(1) noise, both with coefficient
/// `temporal_corr` and unit stationary variance, so every variable has unit
/// variance and pairwise correlation |cross_corr| (sign alternates across
/// variables when cross_corr < 0). Missingness is MCAR per variable.
SyntheticPanel generate_synthetic(const SyntheticConfig& cfg);

/// Uniform seeded subsample of `n` patients, kept in original order.
PanelDataset subsample_patients(const PanelDataset& data, std::size_t n, std::uint64_t seed);

}  // namespace tdi
