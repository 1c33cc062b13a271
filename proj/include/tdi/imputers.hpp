#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdi/panel.hpp"

namespace tdi {

enum class ImputerKind { mean, median, forward_fill, knn, soft_impute, iterative };

std::string_view to_string(ImputerKind kind) noexcept;
std::optional<ImputerKind> parse_imputer_kind(std::string_view name) noexcept;

/// Serializable description of one baseline engine. Fields that a kind does
/// not use are ignored. `max_iter` and `tol` fall back to per-kind defaults
/// when unset.
struct ImputerSpec {
  ImputerKind kind = ImputerKind::mean;
  std::size_t k = 5;
  /// Soft-threshold level; unset means 0.1 x top singular value of the
  /// mean-filled matrix.
  std::optional<double> lambda;
  std::size_t max_rank = 0;  // 0: no cap
  std::optional<std::size_t> max_iter;
  std::optional<double> tol;
  double ridge_alpha = 1e-3;
  bool clip = true;
  /// Soft-impute on column-centred data.
  bool center = false;
  /// Iterative imputer draws each prediction from its residual distribution.
  bool sample_posterior = false;
  std::uint64_t seed = 0;

  std::size_t resolved_max_iter() const;
  double resolved_tol() const;
  void validate() const;

  static ImputerSpec iterative_defaults();
};

/// All patients' rows stacked (patient order, then time order). NaN marks a
/// missing cell.
struct FlatMatrix {
  Matrix values;
  /// row -> (patient index, row within patient)
  std::vector<std::pair<std::size_t, std::size_t>> index;
};

FlatMatrix flatten(const PanelDataset& data);
PanelDataset unflatten(const PanelDataset& like, const Matrix& values);

Matrix impute_mean(const Matrix& m);
Matrix impute_median(const Matrix& m);

/// Last observation carried forward within each patient. Cells before a
/// variable's first observation stay missing.
PanelDataset forward_fill(const PanelDataset& data);

/// Mean of the k nearest donor rows, by NaN-aware Euclidean distance over
/// mutually observed coordinates scaled by D / (#used coordinates). Rows
/// sharing no observed coordinate are never donors. Ties go to the lower row
/// index; with no donor at all the column mean is used. Rows are processed
/// in parallel.
Matrix knn_impute(const Matrix& m, std::size_t k);

struct SoftImputeOptions {
  std::optional<double> lambda;
  std::size_t max_rank = 0;
  std::size_t max_iter = 100;
  double tol = 1e-5;
  bool center = false;
  bool track_objective = false;
};

struct SoftImputeResult {
  Matrix values;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// 0.5 * ||P_obs(X - Z)||_F^2 + lambda * ||Z||_* after each iteration
  /// (only filled when requested).
  std::vector<double> objective;
};

SoftImputeResult soft_impute(const Matrix& m, const SoftImputeOptions& opts);

struct RidgeFit {
  Vector coef;
  double intercept = 0.0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return intercept + row.dot(coef.transpose());
  }
};

/// Solves (Ac^T Ac + alpha I) b = Ac^T yc on centred data; the intercept
/// restores the means. Throws SingularSystem only for alpha == 0 with a
/// rank-deficient design.
RidgeFit fit_ridge(const Matrix& design, const Vector& target, double alpha);

struct IterativeOptions {
  std::size_t max_iter = 10;
  double tol = 1e-3;
  double ridge_alpha = 1e-3;
  bool clip = true;
  bool sample_posterior = false;
  std::uint64_t seed = 0;
};

struct IterativeResult {
  Matrix values;
  std::size_t rounds = 0;
  bool converged = false;
};

/// Chained-equation imputation: mean start, then round-robin ridge
/// regressions of each incomplete column on all others, visiting columns by
/// descending missing count (ties by column index).
IterativeResult iterative_impute(const Matrix& m, const IterativeOptions& opts);

IterativeOptions iterative_options(const ImputerSpec& spec);
SoftImputeOptions soft_impute_options(const ImputerSpec& spec);

/// Runs one baseline engine on a panel. The result is complete for every
/// kind except forward_fill.
PanelDataset impute(const PanelDataset& data, const ImputerSpec& spec);

}  // namespace tdi
