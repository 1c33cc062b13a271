#pragma once

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "tdi/panel.hpp"
#include "tdi/rng.hpp"

namespace testing {

inline constexpr double NA = tdi::kMissing;

inline tdi::Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  const auto n = static_cast<Eigen::Index>(r.size());
  const auto d = n ? static_cast<Eigen::Index>(r.begin()->size()) : 0;
  tdi::Matrix m(n, d);
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline std::vector<tdi::VariableMeta> vars(std::size_t D) {
  std::vector<tdi::VariableMeta> v;
  for (std::size_t d = 0; d < D; ++d) v.push_back({"v" + std::to_string(d), "", std::nullopt});
  return v;
}

inline tdi::PatientSeries series(std::string id, std::vector<double> times, tdi::Matrix values) {
  return tdi::PatientSeries(std::move(id), std::move(times), std::move(values));
}

/// One patient with hourly timestamps 0, 1, ...
inline tdi::PanelDataset single(tdi::Matrix values) {
  const auto D = static_cast<std::size_t>(values.cols());
  std::vector<double> t(static_cast<std::size_t>(values.rows()));
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k);
  return tdi::PanelDataset(vars(D), {series("p0", std::move(t), std::move(values))});
}

/// Random ragged panel: irregular increasing times, values N(0,1), cells
/// missing with probability `p_missing`. Every variable is observed at least
/// once (first patient's first row is made complete).
inline tdi::PanelDataset random_panel(tdi::Rng& rng, std::size_t n_patients, std::size_t max_rows,
                                      std::size_t D, double p_missing) {
  std::vector<tdi::PatientSeries> ps;
  for (std::size_t i = 0; i < n_patients; ++i) {
    const std::size_t T = 1 + rng.uniform_index(max_rows);
    std::vector<double> times;
    double now = rng.uniform() * 3.0;
    tdi::Matrix v(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(D));
    for (std::size_t t = 0; t < T; ++t) {
      times.push_back(now);
      now += 0.25 + rng.uniform() * 4.0;
      for (std::size_t d = 0; d < D; ++d) {
        const bool keep = (i == 0 && t == 0) || rng.uniform() >= p_missing;
        v(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = keep ? rng.normal() : NA;
      }
    }
    ps.push_back(series("p" + std::to_string(i), std::move(times), std::move(v)));
  }
  return tdi::PanelDataset(vars(D), std::move(ps));
}

/// Bitwise equality of two matrices, NaN == NaN.
inline bool same_bits(const tdi::Matrix& a, const tdi::Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double x = a(i, j), y = b(i, j);
      if (std::isnan(x) != std::isnan(y)) return false;
      if (!std::isnan(x) && std::memcmp(&x, &y, sizeof x) != 0) return false;
    }
  }
  return true;
}

inline bool same_bits(const tdi::PanelDataset& a, const tdi::PanelDataset& b) {
  if (a.n_patients() != b.n_patients()) return false;
  for (std::size_t i = 0; i < a.n_patients(); ++i) {
    if (!same_bits(a.patient(i).values(), b.patient(i).values())) return false;
  }
  return true;
}

}  // namespace testing
