#include <doctest.h>

#include <cmath>
#include <set>

#include <json.hpp>

#include "helpers.hpp"
#include "tdi/error.hpp"
#include "tdi/masking.hpp"
#include "tdi/metrics.hpp"

using namespace tdi;
using namespace testing;

namespace {

Competitor named(std::string name, ImputerKind kind) {
  ImputerSpec s;
  s.kind = kind;
  return Competitor{std::move(name), s};
}

std::size_t observed_in(const MaskMatrix& m, std::size_t d) {
  std::size_t n = 0;
  for (const auto& b : m.blocks()) n += static_cast<std::size_t>(b.col(static_cast<Eigen::Index>(d)).cast<int>().sum());
  return n;
}

}  // namespace

TEST_CASE("masked_count rounding") {
  CHECK(masked_count(0.1, 100) == 10);
  CHECK(masked_count(0.1, 4) == 0);
  CHECK(masked_count(0.1, 5) == 1);   // 0.5 rounds away from zero
  CHECK(masked_count(0.1, 15) == 2);  // 1.5 -> 2
  CHECK(masked_count(1.0, 7) == 7);
  CHECK_THROWS_AS(masked_count(0.0, 10), Error);
  CHECK_THROWS_AS(masked_count(1.5, 10), Error);
}

TEST_CASE("mask_random") {
  Rng rng(3);
  const auto data = random_panel(rng, 20, 15, 3, 0.3);
  const auto mask = build_mask(data);

  SUBCASE("exact counts, only observed cells, truth recorded") {
    const auto m = mask_random(data, mask, 0.1, 9);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
    for (std::size_t a = 0; a < m.plan.masked_cells.size(); ++a) {
      const auto& c = m.plan.masked_cells[a];
      CHECK(mask(c.patient, c.row, c.variable));
      CHECK_FALSE(m.mask(c.patient, c.row, c.variable));
      CHECK(std::isnan(m.data.patient(c.patient).values()(c.row, c.variable)));
      CHECK(m.plan.truth[a] == data.patient(c.patient).values()(c.row, c.variable));
      CHECK(seen.insert({c.patient, c.row, c.variable}).second);
    }
    for (std::size_t d = 0; d < 3; ++d) {
      const std::size_t n_d = observed_in(mask, d);
      CHECK(observed_in(mask, d) - observed_in(m.mask, d) == masked_count(0.1, n_d));
    }
    CHECK(build_mask(m.data).blocks() == m.mask.blocks());
  }
  SUBCASE("p = 1 masks everything observed") {
    const auto m = mask_random(data, mask, 1.0, 1);
    CHECK(m.mask.count_observed() == 0);
    CHECK(m.plan.masked_cells.size() == mask.count_observed());
  }
  SUBCASE("tiny p leaves small variables unmasked") {
    const auto small = single(rows({{1, 2}, {3, NA}}));
    const auto m = mask_random(small, build_mask(small), 0.2, 1);
    CHECK(m.plan.masked_cells.empty());
  }
  SUBCASE("100 observed at p = 0.1 masks exactly 10") {
    Matrix col(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) col(i, 0) = static_cast<double>(i);
    const auto d100 = single(col);
    CHECK(mask_random(d100, build_mask(d100), 0.1, 4).plan.masked_cells.size() == 10);
  }
  SUBCASE("deterministic per seed") {
    const auto a = mask_random(data, mask, 0.2, 5);
    const auto b = mask_random(data, mask, 0.2, 5);
    const auto c = mask_random(data, mask, 0.2, 6);
    CHECK(a.plan.masked_cells == b.plan.masked_cells);
    CHECK_FALSE(a.plan.masked_cells == c.plan.masked_cells);
  }
}

TEST_CASE("masking benchmark scoring") {
  Rng rng(17);
  const auto raw = random_panel(rng, 30, 12, 3, 0.3);
  const auto params = fit_standardizer(raw);
  const auto data = apply_standardizer(raw, params);
  const std::vector<Competitor> comps{named("mean", ImputerKind::mean),
                                      named("median", ImputerKind::median), Competitor{"tdi", TdiSpec{}}};
  const auto report = run_masking_benchmark(data, comps, 0.1, 42);
  REQUIRE(report.imputers.size() == 3);
  CHECK(report.protocol == "random");
  CHECK(report.n_evaluated_cells == report.n_masked_cells);

  SUBCASE("mean imputer matches a brute-force recomputation") {
    const auto masked = mask_random(data, build_mask(data), 0.1, 42);
    const auto flat = flatten(masked.data).values;
    std::vector<double> colmean(3, 0.0), cnt(3, 0.0);
    for (Eigen::Index i = 0; i < flat.rows(); ++i) {
      for (Eigen::Index d = 0; d < 3; ++d) {
        if (!std::isnan(flat(i, d))) {
          colmean[static_cast<std::size_t>(d)] += flat(i, d);
          cnt[static_cast<std::size_t>(d)] += 1;
        }
      }
    }
    for (std::size_t d = 0; d < 3; ++d) {
      colmean[d] /= cnt[d];
      double ss = 0, n = 0;
      for (std::size_t a = 0; a < masked.plan.masked_cells.size(); ++a) {
        if (masked.plan.masked_cells[a].variable != d) continue;
        ss += (masked.plan.truth[a] - colmean[d]) * (masked.plan.truth[a] - colmean[d]);
        n += 1;
      }
      CHECK(report.imputers[0].metrics.per_variable[d].rmse == doctest::Approx(std::sqrt(ss / n)).epsilon(1e-12));
    }
  }
  SUBCASE("overall is the unweighted mean of variables") {
    for (const auto& rep : report.imputers) {
      double s = 0;
      for (const auto& v : rep.metrics.per_variable) s += v.rmse;
      CHECK(rep.metrics.rmse == doctest::Approx(s / 3.0).epsilon(1e-15));
      for (std::size_t d = 0; d < 3; ++d) {
        double lo = 1e300, hi = -1e300;
        for (const auto& p : data.patients()) {
          for (std::size_t t = 0; t < p.rows(); ++t) {
            if (const auto x = p.value(t, d)) {
              lo = std::min(lo, *x);
              hi = std::max(hi, *x);
            }
          }
        }
        const auto& v = rep.metrics.per_variable[d];
        CHECK(v.nrmse == v.rmse / (hi - lo));
      }
    }
  }
  SUBCASE("same seed, identical report") {
    CHECK(run_masking_benchmark(data, comps, 0.1, 42).to_json() == report.to_json());
    CHECK(run_masking_benchmark(data, comps, 0.1, 42).to_csv() == report.to_csv());
  }
  SUBCASE("original units") {
    const auto with = run_masking_benchmark(data, comps, 0.1, 42, &params);
    REQUIRE(with.imputers[0].original_units.has_value());
    const auto& o = *with.imputers[0].original_units;
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(o.per_variable[d].rmse == doctest::Approx(with.imputers[0].metrics.per_variable[d].rmse * params.std[d]));
      CHECK(with.imputers[0].metrics.per_variable[d].smape == o.per_variable[d].smape);
    }
    CHECK(with.to_csv(true).find("__overall__") != std::string::npos);
    CHECK(nlohmann::json::parse(with.to_json())["smape_units"] == "original");
  }
  SUBCASE("report formats") {
    const auto csv = report.to_csv();
    CHECK(csv.rfind("imputer,variable,rmse,nrmse,smape\n", 0) == 0);
    CHECK(csv.find("mean,__overall__,") != std::string::npos);
    const auto j = nlohmann::json::parse(report.to_json());
    CHECK(j["seed"] == 42);
    CHECK(j["fraction"] == 0.1);
    CHECK(j["imputers"].size() == 3);
    CHECK(j["config"].size() == 3);
    const auto plot = report.nrmse_plot_csv();
    CHECK(plot.rfind("variable,mean,median,tdi\n", 0) == 0);
  }
}

TEST_CASE("masking benchmark errors") {
  Rng rng(2);
  const auto data = random_panel(rng, 5, 6, 2, 0.3);
  const std::vector<Competitor> ff{named("ff", ImputerKind::forward_fill)};
  CHECK_THROWS_AS(run_masking_benchmark(data, ff, 0.1, 1), Error);
  ImputerSpec bad;
  bad.kind = ImputerKind::knn;
  bad.k = 0;
  const std::vector<Competitor> broken{Competitor{"broken_knn", bad}};
  try {
    run_masking_benchmark(data, broken, 0.1, 1);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("broken_knn") != std::string::npos);
  }
}

TEST_CASE("forward-fill subset benchmark") {
  SUBCASE("exact forward filling scores zero") {
    // Values constant within a patient, different across patients.
    std::vector<PatientSeries> ps;
    for (int i = 0; i < 10; ++i) {
      Matrix v = Matrix::Constant(8, 2, static_cast<double>(i));
      ps.push_back(series("p" + std::to_string(i), {0, 1, 2, 3, 4, 5, 6, 7}, v));
    }
    const PanelDataset data(vars(2), std::move(ps));
    const auto r = run_ffill_subset_benchmark(data, std::vector<Competitor>{}, 0.2, 3);
    REQUIRE(r.imputers.size() == 1);
    CHECK(r.imputers[0].name == "forward_fill");
    CHECK(r.imputers[0].metrics.rmse == 0.0);
    CHECK(r.imputers[0].metrics.smape == 0.0);
  }
  SUBCASE("evaluated cells are exactly the forward-fillable masked cells") {
    Rng rng(6);
    const auto data = random_panel(rng, 15, 10, 2, 0.3);
    const std::vector<Competitor> comps{named("mean", ImputerKind::mean)};
    const auto r = run_ffill_subset_benchmark(data, comps, 0.3, 8);
    const auto masked = mask_random(data, build_mask(data), 0.3, 8);
    const auto ff = forward_fill(masked.data);
    std::size_t n = 0;
    for (const auto& c : masked.plan.masked_cells) n += ff.patient(c.patient).observed(c.row, c.variable);
    CHECK(r.n_evaluated_cells == n);
    CHECK(r.n_masked_cells == masked.plan.masked_cells.size());
    CHECK(r.n_evaluated_cells < r.n_masked_cells);
  }
  SUBCASE("when every masked cell has a prior value both protocols agree") {
    Matrix v(20, 1);
    Rng rng(1);
    std::vector<PatientSeries> ps;
    for (int i = 0; i < 3; ++i) {
      for (Eigen::Index t = 0; t < 20; ++t) v(t, 0) = rng.normal();
      std::vector<double> times(20);
      for (int t = 0; t < 20; ++t) times[static_cast<std::size_t>(t)] = t;
      ps.push_back(series("p" + std::to_string(i), times, v));
    }
    const PanelDataset data(vars(1), std::move(ps));
    const std::vector<Competitor> comps{named("mean", ImputerKind::mean)};
    bool found = false;
    for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
      const auto masked = mask_random(data, build_mask(data), 0.1, seed);
      bool first_row_hit = false;
      for (const auto& c : masked.plan.masked_cells) first_row_hit = first_row_hit || c.row == 0;
      if (first_row_hit) continue;
      found = true;
      const auto a = run_masking_benchmark(data, comps, 0.1, seed);
      const auto b = run_ffill_subset_benchmark(data, comps, 0.1, seed);
      CHECK(b.n_evaluated_cells == a.n_masked_cells);
      CHECK(a.imputers[0].metrics.rmse == b.imputers[0].metrics.rmse);
    }
    CHECK(found);
  }
}

TEST_CASE("missing_rate_after_ffill") {
  const PanelDataset data(vars(3), {series("a", {0, 1, 2, 3}, rows({{1, NA, NA}, {NA, NA, NA}, {NA, 2, NA}, {NA, NA, NA}})),
                                    series("b", {0, 1}, rows({{1, NA, NA}, {NA, 5, NA}}))});
  const auto r = missing_rate_after_ffill(data, build_mask(data));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.0 / 6.0);
  CHECK(r[2] == 1.0);

  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_panel(rng, 6, 8, 2, 0.6);
    const auto mask = build_mask(d);
    const auto rate = missing_rate_after_ffill(d, mask);
    const auto ff = forward_fill(d);
    for (std::size_t v = 0; v < 2; ++v) {
      double miss = 0;
      for (const auto& p : ff.patients()) {
        for (std::size_t t = 0; t < p.rows(); ++t) miss += !p.observed(t, v);
      }
      CHECK(rate[v] == miss / static_cast<double>(d.total_rows()));
    }
  }
}
