#include "tdi/imputers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "tdi/error.hpp"
#include "tdi/rng.hpp"

namespace tdi {

std::string_view to_string(ImputerKind kind) noexcept {
  switch (kind) {
    case ImputerKind::mean: return "mean";
    case ImputerKind::median: return "median";
    case ImputerKind::forward_fill: return "forward_fill";
    case ImputerKind::knn: return "knn";
    case ImputerKind::soft_impute: return "soft_impute";
    case ImputerKind::iterative: return "iterative";
  }
  return "unknown";
}

std::optional<ImputerKind> parse_imputer_kind(std::string_view name) noexcept {
  for (auto k : {ImputerKind::mean, ImputerKind::median, ImputerKind::forward_fill,
                 ImputerKind::knn, ImputerKind::soft_impute, ImputerKind::iterative}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::size_t ImputerSpec::resolved_max_iter() const {
  if (max_iter) return *max_iter;
  return kind == ImputerKind::soft_impute ? 100 : 10;
}

double ImputerSpec::resolved_tol() const {
  if (tol) return *tol;
  return kind == ImputerKind::soft_impute ? 1e-5 : 1e-3;
}

void ImputerSpec::validate() const {
  if (k < 1) throw Error(ErrorKind::Config, "imputer: k must be >= 1");
  if (lambda && !(*lambda >= 0.0)) throw Error(ErrorKind::Config, "imputer: lambda must be >= 0");
  if (resolved_max_iter() < 1) throw Error(ErrorKind::Config, "imputer: max_iter must be >= 1");
  if (!(resolved_tol() > 0.0)) throw Error(ErrorKind::Config, "imputer: tol must be > 0");
  if (!(ridge_alpha >= 0.0)) throw Error(ErrorKind::Config, "imputer: ridge_alpha must be >= 0");
}

ImputerSpec ImputerSpec::iterative_defaults() {
  ImputerSpec spec;
  spec.kind = ImputerKind::iterative;
  return spec;
}

FlatMatrix flatten(const PanelDataset& data) {
  FlatMatrix flat;
  flat.values.resize(static_cast<Eigen::Index>(data.total_rows()),
                     static_cast<Eigen::Index>(data.n_variables()));
  flat.index.reserve(data.total_rows());
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto& v = data.patient(i).values();
    if (v.rows() > 0) flat.values.middleRows(row, v.rows()) = v;
    for (Eigen::Index t = 0; t < v.rows(); ++t) flat.index.emplace_back(i, t);
    row += v.rows();
  }
  return flat;
}

PanelDataset unflatten(const PanelDataset& like, const Matrix& values) {
  if (static_cast<std::size_t>(values.rows()) != like.total_rows() ||
      static_cast<std::size_t>(values.cols()) != like.n_variables()) {
    throw Error(ErrorKind::ShapeMismatch, "unflatten: matrix shape does not match panel");
  }
  std::vector<Matrix> blocks;
  blocks.reserve(like.n_patients());
  Eigen::Index row = 0;
  for (const auto& p : like.patients()) {
    const auto n = static_cast<Eigen::Index>(p.rows());
    blocks.emplace_back(values.middleRows(row, n));
    row += n;
  }
  return like.with_values(std::move(blocks));
}

namespace {

void require_observed_columns(const Matrix& m) {
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    if (m.rows() > 0 && m.col(d).array().isNaN().all()) {
      throw Error(ErrorKind::AllMissingColumn,
                  fmt::format("column {} has no observed value", d));
    }
    if (m.rows() == 0) {
      throw Error(ErrorKind::AllMissingColumn, fmt::format("column {} has no observed value", d));
    }
  }
}

std::vector<double> observed_values(const Matrix& m, Eigen::Index d) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!is_missing(m(r, d))) v.push_back(m(r, d));
  }
  return v;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> means(static_cast<std::size_t>(m.cols()), 0.0);
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    double s = 0.0;
    std::size_t n = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!is_missing(m(r, d))) {
        s += m(r, d);
        ++n;
      }
    }
    means[static_cast<std::size_t>(d)] = n ? s / static_cast<double>(n) : 0.0;
  }
  return means;
}

Matrix fill_columns(const Matrix& m, const std::vector<double>& fill) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index d = 0; d < out.cols(); ++d) {
      if (is_missing(out(r, d))) out(r, d) = fill[static_cast<std::size_t>(d)];
    }
  }
  return out;
}

}  // namespace

Matrix impute_mean(const Matrix& m) {
  require_observed_columns(m);
  return fill_columns(m, column_means(m));
}

Matrix impute_median(const Matrix& m) {
  require_observed_columns(m);
  std::vector<double> medians(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    auto v = observed_values(m, d);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    medians[static_cast<std::size_t>(d)] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return fill_columns(m, medians);
}

PanelDataset forward_fill(const PanelDataset& data) {
  const auto n = static_cast<std::ptrdiff_t>(data.n_patients());
  std::vector<Matrix> blocks(data.n_patients());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Matrix v = data.patient(static_cast<std::size_t>(i)).values();
    for (Eigen::Index d = 0; d < v.cols(); ++d) {
      double last = kMissing;
      for (Eigen::Index t = 0; t < v.rows(); ++t) {
        if (is_missing(v(t, d))) {
          v(t, d) = last;
        } else {
          last = v(t, d);
        }
      }
    }
    blocks[static_cast<std::size_t>(i)] = std::move(v);
  }
  return data.with_values(std::move(blocks));
}

Matrix knn_impute(const Matrix& m, std::size_t k) {
  if (k < 1) throw Error(ErrorKind::DomainError, "knn_impute: k must be >= 1");
  require_observed_columns(m);
  const Eigen::Index n = m.rows();
  const Eigen::Index D = m.cols();
  const auto means = column_means(m);
  const auto observed = (!m.array().isNaN()).cast<std::uint8_t>().eval();

  std::vector<Eigen::Index> incomplete;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (observed.row(r).cast<int>().sum() < D) incomplete.push_back(r);
  }

  Matrix out = m;
  const auto n_incomplete = static_cast<std::ptrdiff_t>(incomplete.size());
#pragma omp parallel
  {
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<std::pair<double, Eigen::Index>> donors;
    donors.reserve(static_cast<std::size_t>(n));
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t q = 0; q < n_incomplete; ++q) {
      const Eigen::Index r = incomplete[static_cast<std::size_t>(q)];
      for (Eigen::Index j = 0; j < n; ++j) {
        double ss = 0.0;
        Eigen::Index used = 0;
        for (Eigen::Index d = 0; d < D; ++d) {
          if (observed(r, d) && observed(j, d)) {
            const double diff = m(r, d) - m(j, d);
            ss += diff * diff;
            ++used;
          }
        }
        dist[static_cast<std::size_t>(j)] =
            (j == r || used == 0) ? std::numeric_limits<double>::infinity()
                                  : std::sqrt(ss * static_cast<double>(D) / static_cast<double>(used));
      }
      for (Eigen::Index d = 0; d < D; ++d) {
        if (observed(r, d)) continue;
        donors.clear();
        for (Eigen::Index j = 0; j < n; ++j) {
          const double dj = dist[static_cast<std::size_t>(j)];
          if (observed(j, d) && std::isfinite(dj)) donors.emplace_back(dj, j);
        }
        if (donors.empty()) {
          out(r, d) = means[static_cast<std::size_t>(d)];
          continue;
        }
        const std::size_t take = std::min(k, donors.size());
        std::partial_sort(donors.begin(), donors.begin() + static_cast<std::ptrdiff_t>(take),
                          donors.end());
        double s = 0.0;
        for (std::size_t a = 0; a < take; ++a) s += m(donors[a].second, d);
        out(r, d) = s / static_cast<double>(take);
      }
    }
  }
  return out;
}

SoftImputeResult soft_impute(const Matrix& m, const SoftImputeOptions& opts) {
  if (opts.max_iter < 1) throw Error(ErrorKind::DomainError, "soft_impute: max_iter must be >= 1");
  if (!(opts.tol > 0.0)) throw Error(ErrorKind::DomainError, "soft_impute: tol must be > 0");
  const auto obs = (!m.array().isNaN()).eval();
  if (!obs.any()) throw Error(ErrorKind::EmptyInput, "soft_impute: no observed cell");

  SoftImputeResult result;
  if (obs.all()) {
    result.values = m;
    result.converged = true;
    result.lambda = opts.lambda.value_or(0.0);
    return result;
  }

  std::vector<double> mu(static_cast<std::size_t>(m.cols()), 0.0);
  if (opts.center) mu = column_means(m);
  const Eigen::Map<const Eigen::RowVectorXd> mu_row(mu.data(), m.cols());

  // Centred observed values; missing cells hold the current estimate Z.
  Matrix x = m;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      x(r, d) = obs(r, d) ? x(r, d) - mu_row(d) : 0.0;
    }
  }

  if (opts.lambda) {
    if (!(*opts.lambda >= 0.0)) throw Error(ErrorKind::DomainError, "soft_impute: lambda < 0");
    result.lambda = *opts.lambda;
  } else {
    const Matrix mean_filled = fill_columns(m, column_means(m));
    Eigen::BDCSVD<Eigen::MatrixXd> svd0(mean_filled);
    result.lambda = 0.1 * svd0.singularValues()(0);
  }
  const double lambda = result.lambda;

  Matrix z = Matrix::Zero(m.rows(), m.cols());
  Matrix w = x;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index d = 0; d < w.cols(); ++d) {
        if (!obs(r, d)) w(r, d) = z(r, d);
      }
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = (svd.singularValues().array() - lambda).max(0.0);
    if (opts.max_rank > 0 && static_cast<Eigen::Index>(opts.max_rank) < s.size()) {
      s.tail(s.size() - static_cast<Eigen::Index>(opts.max_rank)).setZero();
    }
    Matrix z_new = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();

    double delta = 0.0;
    double old_norm = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index d = 0; d < z.cols(); ++d) {
        if (obs(r, d)) continue;
        const double diff = z_new(r, d) - z(r, d);
        delta += diff * diff;
        old_norm += z(r, d) * z(r, d);
      }
    }
    z = std::move(z_new);
    ++result.iterations;

    if (opts.track_objective) {
      double fit = 0.0;
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (Eigen::Index d = 0; d < z.cols(); ++d) {
          if (obs(r, d)) fit += (x(r, d) - z(r, d)) * (x(r, d) - z(r, d));
        }
      }
      result.objective.push_back(0.5 * fit + lambda * s.sum());
    }

    const double rel = old_norm > 0.0 ? std::sqrt(delta / old_norm)
                                      : (delta == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    if (rel < opts.tol) {
      result.converged = true;
      break;
    }
  }

  result.values = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index d = 0; d < m.cols(); ++d) {
      if (!obs(r, d)) result.values(r, d) = z(r, d) + mu_row(d);
    }
  }
  return result;
}

RidgeFit fit_ridge(const Matrix& design, const Vector& target, double alpha) {
  if (design.rows() < 1 || design.rows() != target.size()) {
    throw Error(ErrorKind::ShapeMismatch, "fit_ridge: need >= 1 row and matching target length");
  }
  if (!(alpha >= 0.0)) throw Error(ErrorKind::DomainError, "fit_ridge: alpha must be >= 0");
  const Eigen::RowVectorXd x_mean = design.colwise().mean();
  const double y_mean = target.mean();
  RidgeFit fit;
  if (design.cols() == 0) {
    fit.coef = Vector(0);
    fit.intercept = y_mean;
    return fit;
  }
  const Eigen::MatrixXd xc = design.rowwise() - x_mean;
  const Vector yc = target.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  const Vector rhs = xc.transpose() * yc;
  if (alpha > 0.0) {
    fit.coef = gram.llt().solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    if (qr.rank() < gram.cols()) {
      throw Error(ErrorKind::SingularSystem, "fit_ridge: singular normal equations with alpha = 0");
    }
    fit.coef = qr.solve(rhs);
  }
  fit.intercept = y_mean - x_mean.dot(fit.coef.transpose());
  return fit;
}

IterativeResult iterative_impute(const Matrix& m, const IterativeOptions& opts) {
  if (opts.max_iter < 1) throw Error(ErrorKind::DomainError, "iterative_impute: max_iter must be >= 1");
  if (!(opts.tol > 0.0)) throw Error(ErrorKind::DomainError, "iterative_impute: tol must be > 0");
  if (!(opts.ridge_alpha >= 0.0)) {
    throw Error(ErrorKind::DomainError, "iterative_impute: ridge_alpha must be >= 0");
  }
  require_observed_columns(m);
  const Eigen::Index n = m.rows();
  const Eigen::Index D = m.cols();
  const auto obs = (!m.array().isNaN()).eval();

  struct ColumnInfo {
    Eigen::Index col;
    std::vector<Eigen::Index> observed_rows;
    std::vector<Eigen::Index> missing_rows;
    double lo, hi, scale;
  };
  std::vector<ColumnInfo> order;
  for (Eigen::Index d = 0; d < D; ++d) {
    ColumnInfo info{d, {}, {}, std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), 1.0};
    double s = 0.0, ss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (obs(r, d)) {
        info.observed_rows.push_back(r);
        info.lo = std::min(info.lo, m(r, d));
        info.hi = std::max(info.hi, m(r, d));
        s += m(r, d);
        ss += m(r, d) * m(r, d);
      } else {
        info.missing_rows.push_back(r);
      }
    }
    const double cnt = static_cast<double>(info.observed_rows.size());
    const double var = std::max(0.0, ss / cnt - (s / cnt) * (s / cnt));
    info.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    if (!info.missing_rows.empty()) order.push_back(std::move(info));
  }
  std::stable_sort(order.begin(), order.end(), [](const ColumnInfo& a, const ColumnInfo& b) {
    return a.missing_rows.size() > b.missing_rows.size();
  });

  IterativeResult result;
  result.values = impute_mean(m);
  if (order.empty()) {
    result.converged = true;
    return result;
  }

  Rng rng(derive_seed(opts.seed, "iterative.posterior"));
  Matrix& x = result.values;
  for (std::size_t round = 0; round < opts.max_iter; ++round) {
    bool settled = true;
    for (const auto& info : order) {
      const Eigen::Index d = info.col;
      const auto n_obs = static_cast<Eigen::Index>(info.observed_rows.size());
      const auto n_miss = static_cast<Eigen::Index>(info.missing_rows.size());
      Matrix design(n_obs, D - 1);
      Vector target(n_obs);
      for (Eigen::Index a = 0; a < n_obs; ++a) {
        const Eigen::Index r = info.observed_rows[static_cast<std::size_t>(a)];
        design.row(a).head(d) = x.row(r).head(d);
        design.row(a).tail(D - 1 - d) = x.row(r).tail(D - 1 - d);
        target(a) = x(r, d);
      }
      const RidgeFit fit = fit_ridge(design, target, opts.ridge_alpha);

      double sigma = 0.0;
      if (opts.sample_posterior) {
        const Vector resid = (design * fit.coef).array() + fit.intercept - target.array();
        const double dof = std::max<double>(1.0, static_cast<double>(n_obs - (D - 1) - 1));
        sigma = std::sqrt(resid.squaredNorm() / dof);
      }

      Eigen::RowVectorXd row(D - 1);
      double max_change = 0.0;
      for (Eigen::Index a = 0; a < n_miss; ++a) {
        const Eigen::Index r = info.missing_rows[static_cast<std::size_t>(a)];
        row.head(d) = x.row(r).head(d);
        row.tail(D - 1 - d) = x.row(r).tail(D - 1 - d);
        double pred = fit.predict(row);
        if (opts.sample_posterior) pred += sigma * rng.normal();
        if (opts.clip) pred = std::clamp(pred, info.lo, info.hi);
        max_change = std::max(max_change, std::abs(pred - x(r, d)));
        x(r, d) = pred;
      }
      if (!(max_change <= opts.tol * info.scale)) settled = false;
    }
    ++result.rounds;
    // Sampled predictions never settle; run all rounds in that mode.
    if (settled && !opts.sample_posterior) {
      result.converged = true;
      break;
    }
  }
  return result;
}

IterativeOptions iterative_options(const ImputerSpec& spec) {
  return IterativeOptions{spec.resolved_max_iter(), spec.resolved_tol(), spec.ridge_alpha,
                          spec.clip, spec.sample_posterior, spec.seed};
}

SoftImputeOptions soft_impute_options(const ImputerSpec& spec) {
  return SoftImputeOptions{spec.lambda, spec.max_rank, spec.resolved_max_iter(),
                           spec.resolved_tol(), spec.center, false};
}

PanelDataset impute(const PanelDataset& data, const ImputerSpec& spec) {
  spec.validate();
  if (spec.kind == ImputerKind::forward_fill) return forward_fill(data);
  const FlatMatrix flat = flatten(data);
  Matrix out;
  switch (spec.kind) {
    case ImputerKind::mean: out = impute_mean(flat.values); break;
    case ImputerKind::median: out = impute_median(flat.values); break;
    case ImputerKind::knn: out = knn_impute(flat.values, spec.k); break;
    case ImputerKind::soft_impute:
      out = soft_impute(flat.values, soft_impute_options(spec)).values;
      break;
    case ImputerKind::iterative:
      out = iterative_impute(flat.values, iterative_options(spec)).values;
      break;
    case ImputerKind::forward_fill: break;
  }
  return unflatten(data, out);
}

}  // namespace tdi
