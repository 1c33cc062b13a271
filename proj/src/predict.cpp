#include "tdi/predict.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "tdi/csv.hpp"
#include "tdi/error.hpp"
#include "tdi/ingest.hpp"
#include "tdi/metrics.hpp"
#include "tdi/rng.hpp"

namespace tdi {
namespace {

std::vector<std::vector<std::string_view>> csv_rows(std::string_view text) {
  std::vector<std::vector<std::string_view>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    rows.push_back(csv::split(line));
  }
  return rows;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LabelTable parse_labels_csv_text(std::string_view text) {
  const auto rows = csv_rows(text);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "patient_id" || header[1] != "label" ||
      (header.size() == 3 && header[2] != "event_hours") || header.size() > 3) {
    throw Error(ErrorKind::MalformedRow, "labels: expected header patient_id,label[,event_hours]");
  }
  LabelTable out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != header.size()) {
      throw Error(ErrorKind::MalformedRow, fmt::format("labels row {}: wrong field count", r + 1));
    }
    PatientLabel pl;
    if (f[1] == "1") {
      pl.label = 1;
    } else if (f[1] == "0") {
      pl.label = 0;
    } else {
      throw Error(ErrorKind::MalformedRow, fmt::format("labels row {}: label must be 0 or 1", r + 1));
    }
    if (f.size() == 3 && !f[2].empty()) {
      const auto e = csv::parse_double(f[2]);
      if (!e || !std::isfinite(*e)) {
        throw Error(ErrorKind::MalformedRow, fmt::format("labels row {}: bad event_hours", r + 1));
      }
      pl.event_hours = *e;
    }
    out[std::string(f[0])] = pl;
  }
  return out;
}

LabelTable parse_labels_csv(const std::filesystem::path& path) {
  return parse_labels_csv_text(csv::read_file(path));
}

StaticsTable parse_statics_csv_text(std::string_view text) {
  const auto rows = csv_rows(text);
  StaticsTable out;
  if (rows.empty()) return out;
  const auto& header = rows.front();
  if (header.empty() || header[0] != "patient_id") {
    throw Error(ErrorKind::MalformedRow, "statics: first column must be patient_id");
  }
  for (std::size_t c = 1; c < header.size(); ++c) out.columns.emplace_back(header[c]);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != header.size()) {
      throw Error(ErrorKind::MalformedRow, fmt::format("statics row {}: wrong field count", r + 1));
    }
    std::vector<double> v;
    for (std::size_t c = 1; c < f.size(); ++c) {
      const auto x = csv::parse_double(f[c]);
      if (!x || !std::isfinite(*x)) {
        throw Error(ErrorKind::NonFiniteValue, fmt::format("statics row {}: non-numeric value", r + 1));
      }
      v.push_back(*x);
    }
    out.rows[std::string(f[0])] = std::move(v);
  }
  return out;
}

StaticsTable parse_statics_csv(const std::filesystem::path& path) {
  return parse_statics_csv_text(csv::read_file(path));
}

Cohort build_cohort(const PanelDataset& data, const LabelTable& labels, const StaticsTable* statics,
                    const CohortTask& task) {
  const std::size_t D = data.n_variables();
  std::vector<PatientSeries> kept;
  std::vector<int> y;
  std::vector<std::vector<double>> s;
  for (const auto& p : data.patients()) {
    const auto lab = labels.find(p.id());
    if (lab == labels.end()) continue;
    if (task.min_event_hours && lab->second.event_hours &&
        *lab->second.event_hours < *task.min_event_hours) {
      continue;
    }
    std::vector<double> times;
    std::vector<Eigen::Index> rows;
    for (std::size_t t = 0; t < p.rows(); ++t) {
      if (!(p.time(t) < task.window_hours)) continue;
      if (task.drop_empty_rows && p.values().row(static_cast<Eigen::Index>(t)).array().isNaN().all()) {
        continue;
      }
      times.push_back(p.time(t));
      rows.push_back(static_cast<Eigen::Index>(t));
    }
    if (rows.size() < std::max<std::size_t>(task.min_timepoints, 1)) continue;
    Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(D));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      values.row(static_cast<Eigen::Index>(a)) = p.values().row(rows[a]);
    }
    if (statics) {
      const auto it = statics->rows.find(p.id());
      if (it == statics->rows.end()) {
        throw Error(ErrorKind::MalformedRow, fmt::format("statics: no row for patient '{}'", p.id()));
      }
      s.push_back(it->second);
    }
    kept.emplace_back(p.id(), std::move(times), std::move(values));
    y.push_back(lab->second.label);
  }
  if (kept.empty()) throw Error(ErrorKind::EmptyCohort, "cohort filters removed every patient");

  Cohort c;
  c.data = PanelDataset(data.variables(), std::move(kept));
  c.labels = std::move(y);
  const auto n_static = statics ? static_cast<Eigen::Index>(statics->columns.size()) : 0;
  c.statics = Matrix(static_cast<Eigen::Index>(c.labels.size()), n_static);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (Eigen::Index k = 0; k < n_static; ++k) {
      c.statics(static_cast<Eigen::Index>(i), k) = s[i][static_cast<std::size_t>(k)];
    }
  }
  if (statics) c.static_columns = statics->columns;
  return c;
}

Matrix extract_baseline_features(const PanelDataset& imputed, const MaskMatrix& mask,
                                 double window_hours, std::size_t n_obs, const Matrix* statics) {
  if (!mask.matches(imputed)) throw Error(ErrorKind::ShapeMismatch, "features: mask shape");
  if (n_obs < 1) throw Error(ErrorKind::DomainError, "features: n_obs must be >= 1");
  const auto D = static_cast<Eigen::Index>(imputed.n_variables());
  const Eigen::Index n_static = statics ? statics->cols() : 0;
  if (statics && statics->rows() != static_cast<Eigen::Index>(imputed.n_patients())) {
    throw Error(ErrorKind::ShapeMismatch, "features: statics row count differs from patients");
  }
  const auto block = 2 * D;
  Matrix out(static_cast<Eigen::Index>(imputed.n_patients()),
             static_cast<Eigen::Index>(n_obs) * block + n_static);
  for (std::size_t i = 0; i < imputed.n_patients(); ++i) {
    const auto& p = imputed.patient(i);
    std::vector<Eigen::Index> rows;
    for (std::size_t t = 0; t < p.rows(); ++t) {
      if (p.time(t) < window_hours) rows.push_back(static_cast<Eigen::Index>(t));
    }
    if (rows.size() < n_obs) {
      throw Error(ErrorKind::InsufficientObservations,
                  fmt::format("patient '{}': {} rows in window, need {}", p.id(), rows.size(), n_obs));
    }
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < n_obs; ++k) {
      const Eigen::Index t = rows[rows.size() - n_obs + k];
      const Eigen::Index off = static_cast<Eigen::Index>(k) * block;
      out.row(r).segment(off, D) = p.values().row(t);
      out.row(r).segment(off + D, D) = mask.patient(i).row(t).cast<double>();
    }
    if (n_static > 0) out.row(r).tail(n_static) = statics->row(r);
  }
  return out;
}

Matrix extract_baseline_features(const ImputationResult& imputed, const MaskMatrix& mask,
                                 double window_hours, std::size_t n_obs, const Matrix* statics) {
  return extract_baseline_features(imputed.values, mask, window_hours, n_obs, statics);
}

LogisticModel fit_logistic(const Matrix& features, std::span<const int> labels,
                           const LogisticOptions& opts) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols();
  if (static_cast<std::size_t>(n) != labels.size() || n == 0) {
    throw Error(ErrorKind::ShapeMismatch, "fit_logistic: feature rows and labels differ");
  }
  if (!features.allFinite()) throw Error(ErrorKind::NonFiniteFeature, "fit_logistic: non-finite feature");
  if (!(opts.l2 >= 0.0)) throw Error(ErrorKind::DomainError, "fit_logistic: l2 must be >= 0");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorKind::DomainError, "fit_logistic: labels must be 0/1");
    n_pos += static_cast<std::size_t>(l);
  }
  if (n_pos == 0 || n_pos == labels.size()) {
    throw Error(ErrorKind::SingleClass, "fit_logistic: both classes required");
  }

  // Augmented design: last column is the intercept.
  Eigen::MatrixXd x(n, p + 1);
  x.leftCols(p) = features;
  x.col(p).setOnes();
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];
  const double inv_n = 1.0 / static_cast<double>(n);

  auto objective = [&](const Vector& beta) {
    const Vector z = x * beta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += softplus(z(i)) - y(i) * z(i);
    return loss * inv_n + 0.5 * opts.l2 * beta.head(p).squaredNorm();
  };

  Vector beta = Vector::Zero(p + 1);
  LogisticModel model;
  double f = objective(beta);
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    const Vector z = x * beta;
    Vector prob(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(z(i));
      curv(i) = prob(i) * (1.0 - prob(i));
    }
    Vector grad = x.transpose() * (prob - y) * inv_n;
    grad.head(p) += opts.l2 * beta.head(p);
    if (grad.norm() <= opts.tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd hess = x.transpose() * curv.asDiagonal() * x * inv_n;
    hess.diagonal().head(p).array() += opts.l2;
    hess.diagonal().array() += 1e-12;
    const Vector step = hess.ldlt().solve(grad);

    // Backtracking (Armijo) on the Newton direction.
    double t = 1.0;
    const double slope = grad.dot(step);
    Vector next = beta - step;
    double f_next = objective(next);
    while (f_next > f - 1e-4 * t * slope && t > 1e-10) {
      t *= 0.5;
      next = beta - t * step;
      f_next = objective(next);
    }
    ++model.iterations;
    if (!(f_next <= f)) break;  // no further progress at machine precision
    beta = std::move(next);
    f = f_next;
  }
  if (!model.converged) {
    const Vector z = x * beta;
    Vector prob(n);
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = sigmoid(z(i));
    Vector grad = x.transpose() * (prob - y) * inv_n;
    grad.head(p) += opts.l2 * beta.head(p);
    model.converged = grad.norm() <= opts.tol;
  }
  model.weights = beta.head(p);
  model.intercept = beta(p);
  return model;
}

std::vector<double> predict_proba(const LogisticModel& model, const Matrix& features) {
  if (features.cols() != model.weights.size()) {
    throw Error(ErrorKind::ShapeMismatch, "predict_proba: feature width differs from model");
  }
  if (!features.allFinite()) throw Error(ErrorKind::NonFiniteFeature, "predict_proba: non-finite feature");
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    // Kept strictly inside (0, 1) even when the logistic saturates.
    const double pr = sigmoid(features.row(i).dot(model.weights) + model.intercept);
    out[static_cast<std::size_t>(i)] =
        std::clamp(pr, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  }
  return out;
}

void LogisticRegression::fit(const Matrix& features, std::span<const int> labels) {
  model_ = fit_logistic(features, labels, opts_);
}

std::vector<double> LogisticRegression::predict_proba(const Matrix& features) const {
  return tdi::predict_proba(model_, features);
}

std::vector<std::size_t> assign_folds(std::span<const int> labels, const CvConfig& cv) {
  if (cv.n_folds < 2) throw Error(ErrorKind::Config, "cv: n_folds must be >= 2");
  if (labels.size() < cv.n_folds) throw Error(ErrorKind::FoldDegenerate, "cv: fewer patients than folds");
  std::vector<std::size_t> fold(labels.size());
  std::size_t next = 0;
  auto deal = [&](std::vector<std::size_t> idx, std::string_view stream) {
    Rng rng(derive_seed(cv.seed, stream));
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i : idx) fold[i] = next++ % cv.n_folds;
  };
  if (cv.stratified) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
    deal(std::move(pos), "cv.folds.positive");
    deal(std::move(neg), "cv.folds.negative");
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    deal(std::move(all), "cv.folds");
  }
  return fold;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  s.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  if (m > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::string CvResult::to_csv() const {
  std::string out = "fold,n_train,n_test,auroc,aupr\n";
  for (const auto& f : folds) {
    out += fmt::format("{},{},{},{},{}\n", f.fold, f.n_train, f.n_test, csv::format_double(f.auroc),
                       csv::format_double(f.aupr));
  }
  out += fmt::format("mean,,,{},{}\n", csv::format_double(auroc.mean), csv::format_double(aupr.mean));
  out += fmt::format("median,,,{},{}\n", csv::format_double(auroc.median),
                     csv::format_double(aupr.median));
  out += fmt::format("sd,,,{},{}\n", csv::format_double(auroc.sd), csv::format_double(aupr.sd));
  return out;
}

namespace {

struct StaticScaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
};

StaticScaler fit_static_scaler(const Matrix& s) {
  StaticScaler sc{Eigen::RowVectorXd::Zero(s.cols()), Eigen::RowVectorXd::Ones(s.cols())};
  if (s.rows() == 0) return sc;
  sc.mean = s.colwise().mean();
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    const double var = (s.col(c).array() - sc.mean(c)).square().mean();
    sc.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return sc;
}

Matrix apply_static_scaler(const Matrix& s, const StaticScaler& sc) {
  Matrix out = s;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = (out.row(r) - sc.mean).cwiseQuotient(sc.scale);
  }
  return out;
}

Matrix rows_of(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    out.row(static_cast<Eigen::Index>(a)) = m.row(static_cast<Eigen::Index>(idx[a]));
  }
  return out;
}

ImputationResult impute_partition(const PanelDataset& data, const MaskMatrix& mask,
                                  const ImputationMethod& method, std::span<const double> freq) {
  if (const auto* spec = std::get_if<ImputerSpec>(&method)) {
    return merge_imputed(data, mask, impute(data, *spec));
  }
  return tdi_impute(data, mask, std::get<TdiSpec>(method), freq);
}

}  // namespace

CvResult cross_validate(const Cohort& cohort, const ImputationMethod& method, const CvConfig& cv,
                        const CohortTask& task, const LogisticOptions& logistic,
                        const ClassifierFactory& classifier) {
  if (const auto* spec = std::get_if<ImputerSpec>(&method);
      spec && spec->kind == ImputerKind::forward_fill) {
    throw Error(ErrorKind::Config, "cv: forward_fill leaves cells empty and cannot feed a classifier");
  }
  const auto folds = assign_folds(cohort.labels, cv);
  const std::size_t K = cv.n_folds;
  std::vector<FoldResult> results(K);
  std::vector<std::exception_ptr> errors(K);
  const auto k_folds = static_cast<std::ptrdiff_t>(K);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t kk = 0; kk < k_folds; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    try {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == k ? test : train).push_back(i);
      std::vector<int> y_train, y_test;
      for (std::size_t i : train) y_train.push_back(cohort.labels[i]);
      for (std::size_t i : test) y_test.push_back(cohort.labels[i]);
      const auto has_both = [](const std::vector<int>& v) {
        return std::find(v.begin(), v.end(), 0) != v.end() &&
               std::find(v.begin(), v.end(), 1) != v.end();
      };
      if (!has_both(y_train) || !has_both(y_test)) {
        throw Error(ErrorKind::FoldDegenerate, fmt::format("fold {} lacks a class", k));
      }

      const PanelDataset train_raw = cohort.data.subset(train);
      const PanelDataset test_raw = cohort.data.subset(test);
      const StandardizationParams params = fit_standardizer(train_raw);
      const PanelDataset train_std = apply_standardizer(train_raw, params);
      const PanelDataset test_std = apply_standardizer(test_raw, params);
      const MaskMatrix train_mask = build_mask(train_std);
      const MaskMatrix test_mask = build_mask(test_std);
      const auto pooling = std::holds_alternative<TdiSpec>(method)
                               ? std::get<TdiSpec>(method).pooling
                               : FrequencyPooling::pooled;
      const std::vector<double> freq = compute_frequencies(train_std, train_mask, pooling);

      const ImputationResult train_imp = impute_partition(train_std, train_mask, method, freq);
      const ImputationResult test_imp = impute_partition(test_std, test_mask, method, freq);

      const StaticScaler scaler = fit_static_scaler(rows_of(cohort.statics, train));
      const Matrix s_train = apply_static_scaler(rows_of(cohort.statics, train), scaler);
      const Matrix s_test = apply_static_scaler(rows_of(cohort.statics, test), scaler);
      const Matrix x_train =
          extract_baseline_features(train_imp, train_mask, task.window_hours, task.n_obs, &s_train);
      const Matrix x_test =
          extract_baseline_features(test_imp, test_mask, task.window_hours, task.n_obs, &s_test);

      std::unique_ptr<Classifier> model =
          classifier ? classifier() : std::make_unique<LogisticRegression>(logistic);
      model->fit(x_train, y_train);
      const auto scores = model->predict_proba(x_test);

      FoldResult r;
      r.fold = k;
      r.n_train = train.size();
      r.n_test = test.size();
      r.auroc = auroc(y_test, scores);
      r.aupr = aupr(y_test, scores);
      r.train_patients = std::move(train);
      r.train_frequencies = freq;
      results[k] = std::move(r);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CvResult out;
  out.folds = std::move(results);
  std::vector<double> a, b;
  for (const auto& f : out.folds) {
    a.push_back(f.auroc);
    b.push_back(f.aupr);
  }
  out.auroc = summarize(a);
  out.aupr = summarize(b);
  return out;
}

std::vector<int> linear_risk_labels(const PanelDataset& truth, std::span<const std::size_t> variables,
                                    double window_hours, std::size_t n_obs, double strength,
                                    double offset, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "labels"));
  std::vector<int> labels;
  labels.reserve(truth.n_patients());
  for (const auto& p : truth.patients()) {
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < p.rows(); ++t) {
      if (p.time(t) < window_hours) rows.push_back(t);
    }
    const std::size_t take = std::min(n_obs, rows.size());
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = rows.size() - take; k < rows.size(); ++k) {
      for (std::size_t d : variables) {
        s += p.values()(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(d));
        ++cnt;
      }
    }
    const double risk = sigmoid(strength * (cnt ? s / static_cast<double>(cnt) : 0.0) + offset);
    labels.push_back(rng.uniform() < risk ? 1 : 0);
  }
  return labels;
}

Cohort permute_labels(const Cohort& cohort, std::uint64_t seed) {
  Cohort out = cohort;
  Rng rng(derive_seed(seed, "permute_labels"));
  rng.shuffle(std::span<int>(out.labels));
  return out;
}

}  // namespace tdi
