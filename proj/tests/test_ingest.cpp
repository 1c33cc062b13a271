#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "tdi/error.hpp"
#include "tdi/ingest.hpp"

using namespace tdi;
using namespace testing;

namespace {

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

TEST_CASE("parse_long_csv") {
  const auto recs = parse_long_csv_text("patient_id,time,variable,value\np1,0.0,HR,80\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0] == LongRecord{"p1", 0.0, "HR", 80.0});

  CHECK(parse_long_csv_text("").empty());
  CHECK(kind_of([] { parse_long_csv_text("patient_id,time,variable,value\np1,0.0,HR,NaN\n"); }) ==
        ErrorKind::NonFiniteValue);
  CHECK(kind_of([] { parse_long_csv_text("patient_id,time,variable,value\np1,0.0,HR\n"); }) ==
        ErrorKind::MalformedRow);
  CHECK(kind_of([] { parse_long_csv_text("patient_id,time,variable,value\np1,-1,HR,3\n"); }) ==
        ErrorKind::MalformedRow);
  CHECK(kind_of([] { parse_long_csv_text("pid,time,variable,value\n"); }) == ErrorKind::MalformedRow);
  const std::vector<std::string> declared{"HR"};
  CHECK(kind_of([&] {
          parse_long_csv_text("patient_id,time,variable,value\np1,0,SBP,120\n", declared);
        }) == ErrorKind::UnknownVariable);
  CHECK(kind_of([] { parse_long_csv("/nonexistent/file.csv"); }) == ErrorKind::Io);
  CHECK(parse_long_csv_text("patient_id,time,variable,value\r\np1,1.5,HR,+7\r\n")[0].value == 7.0);
}

TEST_CASE("remove_outliers") {
  const RangeTable ranges{{"HR", ValueRange{20, 300}}};
  std::vector<LongRecord> recs{{"p", 0, "HR", 80}, {"p", 1, "HR", 1000}, {"p", 2, "X", -5},
                               {"p", 3, "HR", 300}};
  const auto r = remove_outliers(recs, ranges);
  CHECK(r.n_dropped == 1);
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].value == 80);
  CHECK(r.records[1].value == -5);
  CHECK(r.records[2].value == 300);
  const auto again = remove_outliers(r.records, ranges);
  CHECK(again.n_dropped == 0);
  CHECK(again.records == r.records);
}

TEST_CASE("parse_ranges_csv") {
  const auto t = parse_ranges_csv_text("# bounds\nvariable,low,high\nHR,20,300\nTemp,25,45\n");
  CHECK(t.size() == 2);
  CHECK(t.at("HR").low == 20);
  CHECK(t.at("Temp").high == 45);
  CHECK_THROWS_AS(parse_ranges_csv_text("HR,300,20\n"), Error);
}

TEST_CASE("discretize") {
  SUBCASE("bin mean") {
    const std::vector<LongRecord> recs{{"p1", 0.2, "HR", 80}, {"p1", 0.8, "HR", 90}};
    const auto panel = discretize(recs, 1.0);
    REQUIRE(panel.patient(0).rows() == 1);
    CHECK(panel.patient(0).time(0) == 0.0);
    CHECK(panel.patient(0).values()(0, 0) == 85.0);
  }
  SUBCASE("floor binning") {
    const auto panel = discretize(std::vector<LongRecord>{{"p1", 3.5, "HR", 1}}, 1.0);
    CHECK(panel.patient(0).time(0) == 3.0);
  }
  SUBCASE("column union in one bin") {
    const std::vector<LongRecord> recs{{"p1", 0.1, "HR", 80}, {"p1", 0.4, "SBP", 120}};
    const auto panel = discretize(recs, 1.0);
    REQUIRE(panel.patient(0).rows() == 1);
    CHECK(panel.patient(0).values()(0, 0) == 80);
    CHECK(panel.patient(0).values()(0, 1) == 120);
  }
  SUBCASE("quarter-hour grid, declared order, empty bins omitted") {
    const std::vector<LongRecord> recs{{"a", 0.30, "HR", 1}, {"a", 2.0, "SBP", 2}, {"b", 0, "HR", 3}};
    const std::vector<std::string> order{"SBP", "HR"};
    const auto panel = discretize(recs, 0.25, order);
    CHECK(panel.variables()[0].name == "SBP");
    REQUIRE(panel.patient(0).rows() == 2);
    CHECK(panel.patient(0).time(0) == 0.25);
    CHECK(panel.patient(0).time(1) == 2.0);
    CHECK(panel.patient(1).id() == "b");
  }
  SUBCASE("errors") {
    CHECK(kind_of([] { discretize(std::vector<LongRecord>{}, 1.0); }) == ErrorKind::EmptyCohort);
    CHECK(kind_of([] { discretize(std::vector<LongRecord>{{"p", 0, "HR", 1}}, 0.0); }) ==
          ErrorKind::DomainError);
  }
}

TEST_CASE("discretize preserves record multiplicity") {
  Rng rng(3);
  std::vector<LongRecord> recs;
  const char* names[] = {"a", "b", "c"};
  for (int k = 0; k < 500; ++k) {
    recs.push_back({"p" + std::to_string(rng.uniform_index(7)), rng.uniform() * 30.0,
                    names[rng.uniform_index(3)], rng.normal()});
  }
  const double grid = 0.5;
  const auto panel = discretize(recs, grid);
  // Oracle: multiplicity of each (patient, bin, variable).
  std::map<std::tuple<std::string, long, std::string>, int> count;
  for (const auto& r : recs) ++count[{r.patient_id, static_cast<long>(std::floor(r.time / grid)), r.variable}];
  std::size_t cells = 0;
  for (const auto& p : panel.patients()) {
    for (std::size_t t = 0; t < p.rows(); ++t) {
      for (std::size_t d = 0; d < panel.n_variables(); ++d) {
        if (p.observed(t, d)) {
          ++cells;
          CHECK(count.count({p.id(), static_cast<long>(std::floor(p.time(t) / grid)),
                             panel.variables()[d].name}) == 1);
        }
      }
    }
  }
  CHECK(cells == count.size());
  std::size_t total = 0;
  for (const auto& [_, c] : count) total += static_cast<std::size_t>(c);
  CHECK(total == recs.size());
}

TEST_CASE("to_long_csv round trip through discretize") {
  const PanelDataset data(vars(2), {series("a", {0, 1}, rows({{1.5, NA}, {2, 3}}))});
  const auto text = to_long_csv(data);
  CHECK(text == "patient_id,time,variable,value\na,0,v0,1.5\na,1,v0,2\na,1,v1,3\n");
  const auto back = discretize(parse_long_csv_text(text), 1.0);
  CHECK(same_bits(back.patient(0).values(), data.patient(0).values()));
}

TEST_CASE("standardizer") {
  SUBCASE("population std") {
    const auto data = single(rows({{1.0}, {3.0}, {NA}}));
    const auto p = fit_standardizer(data);
    CHECK(p.mean[0] == 2.0);
    CHECK(p.std[0] == 1.0);
    const auto s = apply_standardizer(data, p);
    CHECK(s.patient(0).values()(0, 0) == -1.0);
    CHECK(s.patient(0).values()(1, 0) == 1.0);
    CHECK(std::isnan(s.patient(0).values()(2, 0)));
  }
  SUBCASE("zero-mean unit-std column is a fixed point") {
    const auto data = single(rows({{-1.0}, {1.0}, {-1.0}, {1.0}}));
    const auto s = apply_standardizer(data, fit_standardizer(data));
    CHECK((s.patient(0).values() - data.patient(0).values()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("round trip on random panels") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      auto data = random_panel(rng, 5, 8, 3, 0.3);
      std::vector<Matrix> scaled;
      for (const auto& p : data.patients()) scaled.push_back(p.values() * 40.0 + Matrix::Constant(p.values().rows(), p.values().cols(), 100.0));
      data = data.with_values(std::move(scaled));
      const auto params = fit_standardizer(data);
      const auto back = invert_standardizer(apply_standardizer(data, params), params);
      for (std::size_t i = 0; i < data.n_patients(); ++i) {
        const auto& a = data.patient(i).values();
        const auto& b = back.patient(i).values();
        for (Eigen::Index k = 0; k < a.size(); ++k) {
          if (std::isnan(a.data()[k])) {
            CHECK(std::isnan(b.data()[k]));
          } else {
            CHECK(std::abs(a.data()[k] - b.data()[k]) <= 1e-12 * std::max(1.0, std::abs(a.data()[k])));
          }
        }
      }
    }
  }
  SUBCASE("degenerate variable is clamped and reported") {
    const auto data = single(rows({{5.0, 1.0}, {5.0, 2.0}}));
    const auto p = fit_standardizer(data);
    CHECK(p.std[0] == 1.0);
    REQUIRE(p.degenerate.size() == 1);
    CHECK(p.degenerate[0] == "v0");
  }
}

TEST_CASE("generate_synthetic") {
  SyntheticConfig cfg;
  cfg.n_patients = 20;
  cfg.n_timepoints = 10;
  cfg.n_variables = 3;
  cfg.seed = 42;

  SUBCASE("deterministic") {
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(same_bits(a.truth, b.truth));
    CHECK(same_bits(a.observed, b.observed));
  }
  SUBCASE("no missingness") {
    cfg.missing_profile = {0.0};
    const auto s = generate_synthetic(cfg);
    CHECK(s.mask.count_observed() == 20 * 10 * 3);
    CHECK(same_bits(s.truth, s.observed));
  }
  SUBCASE("observed cells agree with the truth") {
    const auto s = generate_synthetic(cfg);
    for (std::size_t i = 0; i < s.truth.n_patients(); ++i) {
      const auto& o = s.observed.patient(i).values();
      const auto& t = s.truth.patient(i).values();
      for (Eigen::Index k = 0; k < o.size(); ++k) {
        if (!std::isnan(o.data()[k])) CHECK(o.data()[k] == t.data()[k]);
      }
      CHECK(s.truth.patient(i).time(1) - s.truth.patient(i).time(0) == cfg.step_hours);
    }
  }
  SUBCASE("empirical missing rate") {
    cfg.n_patients = 100;
    cfg.n_timepoints = 100;
    cfg.n_variables = 2;
    cfg.temporal_corr = 0.95;
    cfg.missing_profile = {0.1, 0.6};
    const auto s = generate_synthetic(cfg);
    for (std::size_t d = 0; d < 2; ++d) {
      std::size_t miss = 0;
      for (const auto& b : s.mask.blocks()) miss += static_cast<std::size_t>((b.col(static_cast<Eigen::Index>(d)).array() == 0).count());
      const double rate = static_cast<double>(miss) / 10000.0;
      const double p = cfg.missing_profile[d];
      CHECK(std::abs(rate - p) <= 3.0 * std::sqrt(p * (1 - p) / 10000.0));
    }
  }
  SUBCASE("unit variance and cross-correlation") {
    cfg.n_patients = 400;
    cfg.n_timepoints = 50;
    cfg.n_variables = 2;
    cfg.temporal_corr = 0.5;
    cfg.cross_corr = 0.5;
    cfg.missing_profile = {0.0};
    const auto s = generate_synthetic(cfg);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = 0;
    for (const auto& p : s.truth.patients()) {
      for (Eigen::Index t = 0; t < p.values().rows(); ++t) {
        const double x = p.values()(t, 0), y = p.values()(t, 1);
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y; n += 1;
      }
    }
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    const double c = (sxy / n - sx / n * sy / n) / std::sqrt(vx * vy);
    CHECK(vx == doctest::Approx(1.0).epsilon(0.1));
    CHECK(c == doctest::Approx(0.5).epsilon(0.15));
  }
  SUBCASE("invalid config") {
    cfg.temporal_corr = 1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), Error);
    cfg.temporal_corr = 0.5;
    cfg.missing_profile = {1.5};
    CHECK_THROWS_AS(generate_synthetic(cfg), Error);
    cfg.missing_profile = {0.1, 0.2};
    CHECK_THROWS_AS(generate_synthetic(cfg), Error);
  }
}

TEST_CASE("subsample_patients") {
  SyntheticConfig cfg;
  cfg.n_patients = 30;
  cfg.n_timepoints = 3;
  cfg.n_variables = 2;
  const auto s = generate_synthetic(cfg);
  const auto a = subsample_patients(s.observed, 10, 5);
  const auto b = subsample_patients(s.observed, 10, 5);
  CHECK(a.n_patients() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.patient(i).id() == b.patient(i).id());
  for (std::size_t i = 1; i < 10; ++i) CHECK(a.patient(i - 1).id() < a.patient(i).id());
}
