#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tdi {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MaskBlock = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Storage-level sentinel for an absent value. Ingestion rejects NaN input, so
// a NaN cell can only ever mean "missing"; 0 and negatives stay valid data.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

struct ValueRange {
  double low;
  double high;

  bool contains(double v) const noexcept { return v >= low && v <= high; }
};

struct VariableMeta {
  std::string name;
  std::string unit;
  std::optional<ValueRange> valid_range;
};

/// One patient's observations: `rows()` time points by D variables, with
/// strictly increasing timestamps in hours.
class PatientSeries {
 public:
  PatientSeries(std::string id, std::vector<double> timestamps, Matrix values);

  const std::string& id() const noexcept { return id_; }
  std::span<const double> timestamps() const noexcept { return timestamps_; }
  double time(std::size_t t) const { return timestamps_[t]; }
  const Matrix& values() const noexcept { return values_; }

  std::size_t rows() const noexcept { return timestamps_.size(); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  std::optional<double> value(std::size_t t, std::size_t d) const;
  bool observed(std::size_t t, std::size_t d) const { return !is_missing(values_(t, d)); }

 private:
  std::string id_;
  std::vector<double> timestamps_;
  Matrix values_;
};

/// Ragged panel of patients. Immutable after construction; transformations
/// return new panels sharing the same variable metadata.
class PanelDataset {
 public:
  PanelDataset() = default;
  PanelDataset(std::vector<VariableMeta> variables, std::vector<PatientSeries> patients);

  std::size_t n_patients() const noexcept { return patients_.size(); }
  std::size_t n_variables() const noexcept { return variables_.size(); }
  std::size_t max_rows() const noexcept;
  std::size_t total_rows() const noexcept;

  const std::vector<PatientSeries>& patients() const noexcept { return patients_; }
  const PatientSeries& patient(std::size_t i) const { return patients_[i]; }
  const std::vector<VariableMeta>& variables() const noexcept { return variables_; }
  std::optional<std::size_t> variable_index(const std::string& name) const;

  /// Same ids, timestamps and metadata with replaced value blocks.
  PanelDataset with_values(std::vector<Matrix> values) const;
  PanelDataset subset(std::span<const std::size_t> patient_indices) const;

 private:
  std::vector<VariableMeta> variables_;
  std::vector<PatientSeries> patients_;
};

class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(std::vector<MaskBlock> blocks) : blocks_(std::move(blocks)) {}

  bool operator()(std::size_t i, std::size_t t, std::size_t d) const {
    return blocks_[i](t, d) != 0;
  }
  const MaskBlock& patient(std::size_t i) const { return blocks_[i]; }
  const std::vector<MaskBlock>& blocks() const noexcept { return blocks_; }
  std::size_t n_patients() const noexcept { return blocks_.size(); }
  std::size_t count_observed() const;

  bool matches(const PanelDataset& data) const;

 private:
  std::vector<MaskBlock> blocks_;
};

enum class CellSource : std::uint8_t {
  observed,
  forward_fill,
  iterative,
  fused,
  imputed,  // any other single engine (mean, knn, ...)
};

std::string_view to_string(CellSource s) noexcept;

// CellSource codes stored as bytes.
using SourceBlock = MaskBlock;

/// Completed panel plus where every cell came from. `weights` holds the
/// forward-fill weight for fused cells and NaN elsewhere.
struct ImputationResult {
  PanelDataset values;
  std::vector<SourceBlock> provenance;
  std::vector<Matrix> weights;

  CellSource source(std::size_t i, std::size_t t, std::size_t d) const {
    return static_cast<CellSource>(provenance[i](t, d));
  }
  std::optional<double> weight(std::size_t i, std::size_t t, std::size_t d) const;
  bool complete() const;
};

MaskMatrix build_mask(const PanelDataset& data);

/// Observed cells from `data`, everything else from `estimate`. Cells taken
/// from the estimate are tagged `tag`.
ImputationResult merge_imputed(const PanelDataset& data, const MaskMatrix& mask,
                               const PanelDataset& estimate,
                               CellSource tag = CellSource::imputed);

bool same_shape(const PanelDataset& a, const PanelDataset& b);

}  // namespace tdi
