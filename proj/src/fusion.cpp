#include "tdi/fusion.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tdi/error.hpp"
#include "tdi/rng.hpp"

namespace tdi {

std::string_view to_string(WeightFamily family) noexcept {
  switch (family) {
    case WeightFamily::reciprocal: return "reciprocal";
    case WeightFamily::exponential: return "exponential";
  }
  return "unknown";
}

std::optional<WeightFamily> parse_weight_family(std::string_view name) noexcept {
  if (name == "reciprocal") return WeightFamily::reciprocal;
  if (name == "exponential") return WeightFamily::exponential;
  return std::nullopt;
}

void TdiSpec::validate() const {
  if (iterative.kind != ImputerKind::iterative) {
    throw Error(ErrorKind::Config, "tdi: the multivariate engine must be kind=iterative");
  }
  iterative.validate();
  if (weight.forced && !(*weight.forced >= 0.0 && *weight.forced <= 1.0)) {
    throw Error(ErrorKind::Config, "tdi: forced weight must lie in [0, 1]");
  }
}

std::vector<Matrix> compute_deltas(const PanelDataset& data, const MaskMatrix& mask) {
  if (!mask.matches(data)) throw Error(ErrorKind::ShapeMismatch, "compute_deltas: mask shape");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::ptrdiff_t>(data.n_patients());
  const auto D = static_cast<Eigen::Index>(data.n_variables());
  std::vector<Matrix> out(data.n_patients());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& p = data.patient(i);
    const auto& mb = mask.patient(i);
    Matrix delta(static_cast<Eigen::Index>(p.rows()), D);
    for (Eigen::Index d = 0; d < D; ++d) {
      double last = inf;  // time of the latest observation so far
      bool seen = false;
      for (Eigen::Index t = 0; t < delta.rows(); ++t) {
        const double now = p.time(static_cast<std::size_t>(t));
        if (mb(t, d)) {
          delta(t, d) = 0.0;
          last = now;
          seen = true;
        } else {
          delta(t, d) = seen ? now - last : inf;
        }
      }
    }
    out[i] = std::move(delta);
  }
  return out;
}

std::vector<Vector> compute_availability(const MaskMatrix& mask) {
  std::vector<Vector> out;
  out.reserve(mask.n_patients());
  for (const auto& b : mask.blocks()) {
    const double D = static_cast<double>(b.cols());
    Vector r(b.rows());
    for (Eigen::Index t = 0; t < b.rows(); ++t) {
      r(t) = D > 0 ? static_cast<double>(b.row(t).cast<int>().sum()) / D : 0.0;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> compute_frequencies(const PanelDataset& data, const MaskMatrix& mask,
                                        FrequencyPooling pooling) {
  if (!mask.matches(data)) throw Error(ErrorKind::ShapeMismatch, "compute_frequencies: mask shape");
  const std::size_t D = data.n_variables();
  // Fixed summation order (patient, then time) keeps results bit-reproducible.
  std::vector<double> gap_sum(D, 0.0);
  std::vector<std::size_t> gap_count(D, 0);
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto& p = data.patient(i);
    const auto& mb = mask.patient(i);
    for (std::size_t d = 0; d < D; ++d) {
      double first = 0.0, last = 0.0;
      std::size_t seen = 0;
      for (std::size_t t = 0; t < p.rows(); ++t) {
        if (!mb(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d))) continue;
        if (seen == 0) first = p.time(t);
        last = p.time(t);
        ++seen;
      }
      if (seen < 2) continue;
      // Consecutive gaps telescope: their sum is last - first.
      const double span = last - first;
      const std::size_t gaps = seen - 1;
      if (pooling == FrequencyPooling::pooled) {
        gap_sum[d] += span;
        gap_count[d] += gaps;
      } else {
        gap_sum[d] += span / static_cast<double>(gaps);
        gap_count[d] += 1;
      }
    }
  }
  std::vector<double> f(D, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    if (gap_count[d] == 0) continue;
    const double mean_gap = gap_sum[d] / static_cast<double>(gap_count[d]);
    f[d] = mean_gap > 0.0 ? 1.0 / mean_gap : 0.0;
  }
  return f;
}

TdiStatistics compute_statistics(const PanelDataset& data, const MaskMatrix& mask,
                                 FrequencyPooling pooling) {
  return TdiStatistics{compute_deltas(data, mask), compute_availability(mask),
                       compute_frequencies(data, mask, pooling)};
}

double weight(double f, double r, double dt, const WeightConfig& cfg) {
  if (std::isnan(f) || std::isnan(r) || std::isnan(dt) || f < 0.0 || r < 0.0 || r > 1.0 ||
      dt < 0.0 || std::isinf(f)) {
    throw Error(ErrorKind::DomainError,
                fmt::format("weight: invalid inputs f={} r={} dt={}", f, r, dt));
  }
  if (cfg.forced) return *cfg.forced;
  if (std::isinf(dt)) return 0.0;
  const double x = f * r * dt;
  switch (cfg.family) {
    case WeightFamily::reciprocal: return 1.0 / (1.0 + x);
    case WeightFamily::exponential: return std::exp(-x);
  }
  return 0.0;
}

ImputationResult tdi_impute(const PanelDataset& data, const MaskMatrix& mask, const TdiSpec& spec,
                            std::optional<std::span<const double>> frequencies) {
  spec.validate();
  if (!mask.matches(data)) throw Error(ErrorKind::ShapeMismatch, "tdi_impute: mask shape");
  const std::size_t D = data.n_variables();

  std::vector<double> f;
  if (frequencies) {
    if (frequencies->size() != D) {
      throw Error(ErrorKind::ShapeMismatch, "tdi_impute: frequency vector length differs from D");
    }
    f.assign(frequencies->begin(), frequencies->end());
  } else {
    f = compute_frequencies(data, mask, spec.pooling);
  }
  for (double fd : f) {
    if (!(fd >= 0.0) || std::isinf(fd)) {
      throw Error(ErrorKind::DomainError, "tdi_impute: frequencies must be finite and >= 0");
    }
  }

  ImputerSpec iter_spec = spec.iterative;
  iter_spec.seed = derive_seed(spec.seed, "tdi.iterative");
  // Both constituents see only the original data; neither feeds the other.
  const PanelDataset ffill = forward_fill(data);
  const PanelDataset iterative =
      unflatten(data, iterative_impute(flatten(data).values, iterative_options(iter_spec)).values);
  const auto delta = compute_deltas(data, mask);
  const auto availability = compute_availability(mask);

  const auto n = static_cast<std::ptrdiff_t>(data.n_patients());
  std::vector<Matrix> values(data.n_patients());
  std::vector<SourceBlock> provenance(data.n_patients());
  std::vector<Matrix> weights(data.n_patients());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& x = data.patient(i).values();
    const auto& xf = ffill.patient(i).values();
    const auto& xi = iterative.patient(i).values();
    const auto rows = x.rows();
    Matrix out(rows, static_cast<Eigen::Index>(D));
    SourceBlock src(rows, static_cast<Eigen::Index>(D));
    Matrix w_cells = Matrix::Constant(rows, static_cast<Eigen::Index>(D), kMissing);
    for (Eigen::Index t = 0; t < rows; ++t) {
      for (std::size_t dd = 0; dd < D; ++dd) {
        const auto d = static_cast<Eigen::Index>(dd);
        if (mask.patient(i)(t, d)) {
          out(t, d) = x(t, d);
          src(t, d) = static_cast<std::uint8_t>(CellSource::observed);
        } else if (is_missing(xf(t, d))) {
          out(t, d) = xi(t, d);
          src(t, d) = static_cast<std::uint8_t>(CellSource::iterative);
        } else {
          const double w = weight(f[dd], availability[i](t), delta[i](t, d), spec.weight);
          out(t, d) = w * xf(t, d) + (1.0 - w) * xi(t, d);
          src(t, d) = static_cast<std::uint8_t>(CellSource::fused);
          w_cells(t, d) = w;
        }
      }
    }
    values[i] = std::move(out);
    provenance[i] = std::move(src);
    weights[i] = std::move(w_cells);
  }
  return ImputationResult{data.with_values(std::move(values)), std::move(provenance),
                          std::move(weights)};
}

MultipleImputation multiple_impute(const PanelDataset& data, const MaskMatrix& mask,
                                   const TdiSpec& spec, std::size_t m,
                                   std::optional<std::span<const double>> frequencies) {
  if (m < 2) throw Error(ErrorKind::DomainError, "multiple_impute: m must be >= 2");
  MultipleImputation out;
  out.runs.resize(m);
  const auto runs = static_cast<std::ptrdiff_t>(m);
  std::vector<std::exception_ptr> errors(m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < runs; ++j) {
    try {
      TdiSpec run_spec = spec;
      run_spec.seed = spec.seed + static_cast<std::uint64_t>(j);
      run_spec.iterative.sample_posterior = true;
      out.runs[static_cast<std::size_t>(j)] = tdi_impute(data, mask, run_spec, frequencies);
    } catch (...) {
      errors[static_cast<std::size_t>(j)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto rows = static_cast<Eigen::Index>(data.patient(i).rows());
    const auto D = static_cast<Eigen::Index>(data.n_variables());
    Matrix mean(rows, D);
    Matrix var(rows, D);
    for (Eigen::Index t = 0; t < rows; ++t) {
      for (Eigen::Index d = 0; d < D; ++d) {
        const double first = out.runs[0].values.patient(i).values()(t, d);
        bool identical = true;
        double s = 0.0;
        for (const auto& run : out.runs) {
          const double v = run.values.patient(i).values()(t, d);
          identical = identical && v == first;
          s += v;
        }
        if (identical) {
          mean(t, d) = first;
          var(t, d) = 0.0;
          continue;
        }
        const double mu = s / static_cast<double>(m);
        double ss = 0.0;
        for (const auto& run : out.runs) {
          const double v = run.values.patient(i).values()(t, d);
          ss += (v - mu) * (v - mu);
        }
        mean(t, d) = mu;
        var(t, d) = ss / static_cast<double>(m - 1);
      }
    }
    out.mean.push_back(std::move(mean));
    out.variance.push_back(std::move(var));
  }
  return out;
}

}  // namespace tdi
