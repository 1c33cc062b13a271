#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "tdi/error.hpp"
#include "tdi/metrics.hpp"
#include "tdi/rng.hpp"

using namespace tdi;

namespace {

double auroc_pairs(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

double ap_thresholds(const std::vector<int>& y, const std::vector<double>& s) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double n_pos = 0;
  for (int v : y) n_pos += v;
  double ap = 0, prev_recall = 0;
  for (double th : thresholds) {
    double tp = 0, pred = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (s[i] >= th) {
        pred += 1;
        tp += y[i];
      }
    }
    const double recall = tp / n_pos;
    ap += (recall - prev_recall) * (tp / pred);
    prev_recall = recall;
  }
  return ap;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Config;
}

}  // namespace

TEST_CASE("rmse, nrmse, smape on hand examples") {
  const std::vector<double> y{1, 3}, yh{2, 5};
  CHECK(rmse(y, yh) == std::sqrt(2.5));
  CHECK(nrmse(y, yh, 2.0) == std::sqrt(2.5) / 2.0);
  CHECK(rmse(y, y) == 0.0);
  CHECK(smape(y, y) == 0.0);
  CHECK(smape(std::vector<double>{1}, std::vector<double>{3}) == 1.0);
  // Signed denominator: the formula has no absolute value there.
  CHECK(smape(std::vector<double>{-1}, std::vector<double>{-3}) == -1.0);
  // Zero denominator contributes 0 and still counts.
  CHECK(smape(std::vector<double>{1, 1}, std::vector<double>{-1, 3}) == 0.5);
}

TEST_CASE("metric errors") {
  const std::vector<double> e;
  const std::vector<double> one{1.0}, two{1.0, 2.0};
  CHECK(kind_of([&] { rmse(e, e); }) == ErrorKind::EmptyInput);
  CHECK(kind_of([&] { rmse(one, two); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { nrmse(one, one, 0.0); }) == ErrorKind::ZeroRange);
  CHECK(kind_of([&] { smape(e, e); }) == ErrorKind::EmptyInput);
}

TEST_CASE("metric properties on positive data") {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.uniform_index(20);
    std::vector<double> y(n), yh(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 0.1 + rng.uniform() * 10;
      yh[i] = 0.1 + rng.uniform() * 10;
    }
    const double s = smape(y, yh);
    CHECK(s >= 0.0);
    CHECK(s <= 2.0);
    CHECK(rmse(y, yh) > 0.0);
    CHECK(nrmse(y, yh, 3.0) == rmse(y, yh) / 3.0);
  }
}

TEST_CASE("auroc and aupr") {
  const std::vector<int> y{1, 0, 1, 0};
  CHECK(auroc(y, std::vector<double>{0.9, 0.8, 0.7, 0.1}) == 0.75);
  CHECK(auroc(y, std::vector<double>{1, 0, 1, 0}) == 1.0);
  CHECK(auroc(y, std::vector<double>{0.3, 0.3, 0.3, 0.3}) == 0.5);
  CHECK(aupr(y, std::vector<double>{1, 0, 1, 0}) == 1.0);
  CHECK(aupr(y, std::vector<double>{0.3, 0.3, 0.3, 0.3}) == 0.5);
  // Ranks 1..4 with positives at 1 and 3: AP = (1/2)(1/1) + (1/2)(2/3).
  CHECK(aupr(y, std::vector<double>{0.9, 0.8, 0.7, 0.1}) == doctest::Approx(0.5 + 1.0 / 3.0).epsilon(1e-15));

  CHECK(kind_of([] { auroc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}); }) == ErrorKind::SingleClass);
  CHECK(kind_of([] { aupr(std::vector<int>{0, 0}, std::vector<double>{0.1, 0.2}); }) == ErrorKind::SingleClass);
  CHECK(kind_of([] { auroc(std::vector<int>{1, 2}, std::vector<double>{0.1, 0.2}); }) == ErrorKind::DomainError);
  CHECK(kind_of([] { auroc(std::vector<int>{1, 0}, std::vector<double>{0.1}); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([] { auroc(std::vector<int>{}, std::vector<double>{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("auroc and aupr match brute-force oracles with ties") {
  Rng rng(55);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng.uniform_index(200);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform() < 0.3 ? 1 : 0;
      s[i] = std::floor(rng.uniform() * 10) / 10;  // many ties
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(auroc(y, s) - auroc_pairs(y, s)) <= 1e-12);
    CHECK(std::abs(aupr(y, s) - ap_thresholds(y, s)) <= 1e-12);
  }
}
