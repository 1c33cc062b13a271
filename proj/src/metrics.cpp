#include "tdi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tdi/error.hpp"

namespace tdi {
namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error(ErrorKind::ShapeMismatch, "metric: length mismatch");
  if (y.empty()) throw Error(ErrorKind::EmptyInput, "metric: empty input");
}

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_binary(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::ShapeMismatch, "ranking metric: length mismatch");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyInput, "ranking metric: empty input");
  ClassCounts c;
  for (int l : labels) {
    if (l == 1) {
      ++c.pos;
    } else if (l == 0) {
      ++c.neg;
    } else {
      throw Error(ErrorKind::DomainError, "ranking metric: labels must be 0 or 1");
    }
  }
  if (c.pos == 0 || c.neg == 0) throw Error(ErrorKind::SingleClass, "ranking metric: one class only");
  return c;
}

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat);
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double nrmse(std::span<const double> y, std::span<const double> yhat, double y_range) {
  if (!(y_range > 0.0)) throw Error(ErrorKind::ZeroRange, "nrmse: variable range must be > 0");
  return rmse(y, yhat) / y_range;
}

double smape(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = (yhat[i] + y[i]) / 2.0;
    if (std::abs(yhat[i] + y[i]) < 1e-12) continue;
    s += std::abs(yhat[i] - y[i]) / denom;
  }
  return s / static_cast<double>(y.size());
}

double auroc(std::span<const int> labels, std::span<const double> scores) {
  const auto counts = check_binary(labels, scores);
  // Walk groups of tied scores from the top; each positive in a group beats
  // every negative below it and ties with the negatives inside it.
  const auto order = order_by_score_desc(scores);
  double credit = 0.0;
  std::size_t neg_below = counts.neg;
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    std::size_t pos = 0, neg = 0;
    while (b < order.size() && scores[order[b]] == scores[order[a]]) {
      (labels[order[b]] == 1 ? pos : neg) += 1;
      ++b;
    }
    neg_below -= neg;
    credit += static_cast<double>(pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg));
    a = b;
  }
  return credit / (static_cast<double>(counts.pos) * static_cast<double>(counts.neg));
}

double aupr(std::span<const int> labels, std::span<const double> scores) {
  const auto counts = check_binary(labels, scores);
  const auto order = order_by_score_desc(scores);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b < order.size() && scores[order[b]] == scores[order[a]]) {
      tp += labels[order[b]] == 1 ? 1 : 0;
      ++seen;
      ++b;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(counts.pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    a = b;
  }
  return ap;
}

}  // namespace tdi
