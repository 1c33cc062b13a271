#include "tdi/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tdi/error.hpp"

namespace tdi::reference {

Matrix knn_impute(const Matrix& m, std::size_t k) {
  if (k < 1) throw Error(ErrorKind::DomainError, "knn_impute: k must be >= 1");
  const Eigen::Index n = m.rows();
  const Eigen::Index D = m.cols();
  std::vector<double> means(static_cast<std::size_t>(D));
  for (Eigen::Index d = 0; d < D; ++d) {
    double s = 0.0;
    std::size_t c = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!is_missing(m(r, d))) {
        s += m(r, d);
        ++c;
      }
    }
    if (c == 0) throw Error(ErrorKind::AllMissingColumn, "knn_impute: empty column");
    means[static_cast<std::size_t>(d)] = s / static_cast<double>(c);
  }

  Matrix out = m;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index d = 0; d < D; ++d) {
      if (!is_missing(m(r, d))) continue;
      std::vector<std::pair<double, Eigen::Index>> donors;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == r || is_missing(m(j, d))) continue;
        double ss = 0.0;
        int used = 0;
        for (Eigen::Index c = 0; c < D; ++c) {
          if (is_missing(m(r, c)) || is_missing(m(j, c))) continue;
          ss += (m(r, c) - m(j, c)) * (m(r, c) - m(j, c));
          ++used;
        }
        if (used == 0) continue;
        donors.emplace_back(std::sqrt(ss * static_cast<double>(D) / used), j);
      }
      if (donors.empty()) {
        out(r, d) = means[static_cast<std::size_t>(d)];
        continue;
      }
      std::sort(donors.begin(), donors.end());
      const std::size_t take = std::min(k, donors.size());
      double s = 0.0;
      for (std::size_t a = 0; a < take; ++a) s += m(donors[a].second, d);
      out(r, d) = s / static_cast<double>(take);
    }
  }
  return out;
}

PanelDataset forward_fill(const PanelDataset& data) {
  std::vector<Matrix> blocks;
  for (const auto& p : data.patients()) {
    Matrix v = p.values();
    for (Eigen::Index t = 1; t < v.rows(); ++t) {
      for (Eigen::Index d = 0; d < v.cols(); ++d) {
        if (is_missing(v(t, d))) v(t, d) = v(t - 1, d);
      }
    }
    blocks.push_back(std::move(v));
  }
  return data.with_values(std::move(blocks));
}

std::vector<Matrix> compute_deltas(const PanelDataset& data, const MaskMatrix& mask) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < data.n_patients(); ++i) {
    const auto& p = data.patient(i);
    Matrix delta(static_cast<Eigen::Index>(p.rows()), static_cast<Eigen::Index>(data.n_variables()));
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < data.n_variables(); ++d) {
        double value = std::numeric_limits<double>::infinity();
        // Scan backwards from the current row for the latest observation.
        for (std::size_t back = t + 1; back-- > 0;) {
          if (mask(i, back, d)) {
            value = p.time(t) - p.time(back);
            break;
          }
        }
        delta(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = value;
      }
    }
    out.push_back(std::move(delta));
  }
  return out;
}

}  // namespace tdi::reference
