#include "tdi/panel.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "tdi/error.hpp"

namespace tdi {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidPanel: return "InvalidPanel";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IncompleteEstimate: return "IncompleteEstimate";
    case ErrorKind::Io: return "Io";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::UnknownVariable: return "UnknownVariable";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptyCohort: return "EmptyCohort";
    case ErrorKind::AllMissingColumn: return "AllMissingColumn";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ZeroRange: return "ZeroRange";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::InsufficientObservations: return "InsufficientObservations";
    case ErrorKind::FoldDegenerate: return "FoldDegenerate";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

std::string_view to_string(CellSource s) noexcept {
  switch (s) {
    case CellSource::observed: return "observed";
    case CellSource::forward_fill: return "forward_fill";
    case CellSource::iterative: return "iterative";
    case CellSource::fused: return "fused";
    case CellSource::imputed: return "imputed";
  }
  return "unknown";
}

PatientSeries::PatientSeries(std::string id, std::vector<double> timestamps, Matrix values)
    : id_(std::move(id)), timestamps_(std::move(timestamps)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != timestamps_.size()) {
    throw Error(ErrorKind::InvalidPanel,
                fmt::format("patient '{}': {} value rows for {} timestamps", id_,
                            values_.rows(), timestamps_.size()));
  }
  if (timestamps_.empty()) {
    throw Error(ErrorKind::InvalidPanel, fmt::format("patient '{}' has no observations", id_));
  }
  for (std::size_t t = 0; t < timestamps_.size(); ++t) {
    if (!std::isfinite(timestamps_[t])) {
      throw Error(ErrorKind::InvalidPanel,
                  fmt::format("patient '{}': non-finite timestamp at row {}", id_, t));
    }
    if (t > 0 && !(timestamps_[t] > timestamps_[t - 1])) {
      throw Error(ErrorKind::InvalidPanel,
                  fmt::format("patient '{}': timestamps not strictly increasing at row {}", id_, t));
    }
  }
  for (Eigen::Index k = 0; k < values_.size(); ++k) {
    const double v = values_.data()[k];
    if (std::isinf(v)) {
      throw Error(ErrorKind::InvalidPanel, fmt::format("patient '{}': infinite value", id_));
    }
  }
}

std::optional<double> PatientSeries::value(std::size_t t, std::size_t d) const {
  const double v = values_(t, d);
  if (is_missing(v)) return std::nullopt;
  return v;
}

PanelDataset::PanelDataset(std::vector<VariableMeta> variables, std::vector<PatientSeries> patients)
    : variables_(std::move(variables)), patients_(std::move(patients)) {
  for (const auto& v : variables_) {
    if (v.valid_range && !(v.valid_range->low < v.valid_range->high)) {
      throw Error(ErrorKind::InvalidPanel,
                  fmt::format("variable '{}': range low must be < high", v.name));
    }
  }
  for (const auto& p : patients_) {
    if (p.cols() != variables_.size()) {
      throw Error(ErrorKind::InvalidPanel,
                  fmt::format("patient '{}' has {} columns, expected {}", p.id(), p.cols(),
                              variables_.size()));
    }
  }
}

std::size_t PanelDataset::max_rows() const noexcept {
  std::size_t m = 0;
  for (const auto& p : patients_) m = std::max(m, p.rows());
  return m;
}

std::size_t PanelDataset::total_rows() const noexcept {
  std::size_t n = 0;
  for (const auto& p : patients_) n += p.rows();
  return n;
}

std::optional<std::size_t> PanelDataset::variable_index(const std::string& name) const {
  for (std::size_t d = 0; d < variables_.size(); ++d) {
    if (variables_[d].name == name) return d;
  }
  return std::nullopt;
}

PanelDataset PanelDataset::with_values(std::vector<Matrix> values) const {
  if (values.size() != patients_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "with_values: patient count differs");
  }
  std::vector<PatientSeries> out;
  out.reserve(patients_.size());
  for (std::size_t i = 0; i < patients_.size(); ++i) {
    const auto& p = patients_[i];
    if (values[i].rows() != p.values().rows() || values[i].cols() != p.values().cols()) {
      throw Error(ErrorKind::ShapeMismatch,
                  fmt::format("with_values: shape differs for patient '{}'", p.id()));
    }
    out.emplace_back(p.id(), std::vector<double>(p.timestamps().begin(), p.timestamps().end()),
                     std::move(values[i]));
  }
  return PanelDataset(variables_, std::move(out));
}

PanelDataset PanelDataset::subset(std::span<const std::size_t> patient_indices) const {
  std::vector<PatientSeries> out;
  out.reserve(patient_indices.size());
  for (std::size_t i : patient_indices) out.push_back(patients_.at(i));
  return PanelDataset(variables_, std::move(out));
}

std::size_t MaskMatrix::count_observed() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.cast<std::size_t>().sum());
  return n;
}

bool MaskMatrix::matches(const PanelDataset& data) const {
  if (blocks_.size() != data.n_patients()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& p = data.patient(i);
    if (static_cast<std::size_t>(blocks_[i].rows()) != p.rows() ||
        static_cast<std::size_t>(blocks_[i].cols()) != data.n_variables()) {
      return false;
    }
  }
  return true;
}

std::optional<double> ImputationResult::weight(std::size_t i, std::size_t t, std::size_t d) const {
  const double w = weights[i](t, d);
  if (std::isnan(w)) return std::nullopt;
  return w;
}

bool ImputationResult::complete() const {
  for (const auto& p : values.patients()) {
    if (p.values().array().isNaN().any()) return false;
  }
  return true;
}

MaskMatrix build_mask(const PanelDataset& data) {
  std::vector<MaskBlock> blocks;
  blocks.reserve(data.n_patients());
  for (const auto& p : data.patients()) {
    blocks.emplace_back((!p.values().array().isNaN()).cast<std::uint8_t>());
  }
  return MaskMatrix(std::move(blocks));
}

bool same_shape(const PanelDataset& a, const PanelDataset& b) {
  if (a.n_patients() != b.n_patients() || a.n_variables() != b.n_variables()) return false;
  for (std::size_t i = 0; i < a.n_patients(); ++i) {
    if (a.patient(i).rows() != b.patient(i).rows()) return false;
  }
  return true;
}

ImputationResult merge_imputed(const PanelDataset& data, const MaskMatrix& mask,
                               const PanelDataset& estimate, CellSource tag) {
  if (!same_shape(data, estimate) || !mask.matches(data)) {
    throw Error(ErrorKind::ShapeMismatch, "merge_imputed: data, mask and estimate shapes differ");
  }
  const std::size_t D = data.n_variables();
  std::vector<Matrix> values;
  std::vector<SourceBlock> provenance;
  std::vector<Matrix> weights;
  values.reserve(data.n_patients());
  provenance.reserve(data.n_patients());
  weights.reserve(data.n_patients());
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto& x = data.patient(i).values();
    const auto& xhat = estimate.patient(i).values();
    const auto rows = x.rows();
    Matrix out(rows, static_cast<Eigen::Index>(D));
    SourceBlock src(rows, static_cast<Eigen::Index>(D));
    for (Eigen::Index t = 0; t < rows; ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        const auto c = static_cast<Eigen::Index>(d);
        if (mask(i, static_cast<std::size_t>(t), d)) {
          out(t, c) = x(t, c);
          src(t, c) = static_cast<std::uint8_t>(CellSource::observed);
        } else {
          if (is_missing(xhat(t, c))) {
            throw Error(ErrorKind::IncompleteEstimate,
                        fmt::format("merge_imputed: estimate missing at patient '{}' row {} "
                                    "variable '{}'",
                                    data.patient(i).id(), t, data.variables()[d].name));
          }
          out(t, c) = xhat(t, c);
          src(t, c) = static_cast<std::uint8_t>(tag);
        }
      }
    }
    values.push_back(std::move(out));
    provenance.push_back(std::move(src));
    weights.emplace_back(Matrix::Constant(rows, static_cast<Eigen::Index>(D), kMissing));
  }
  return ImputationResult{data.with_values(std::move(values)), std::move(provenance),
                          std::move(weights)};
}

}  // namespace tdi
