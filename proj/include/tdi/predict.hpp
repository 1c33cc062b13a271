#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tdi/fusion.hpp"
#include "tdi/imputers.hpp"
#include "tdi/panel.hpp"

namespace tdi {

struct PatientLabel {
  int label = 0;
  /// Hours from admission to the outcome event, when known.
  std::optional<double> event_hours;
};

using LabelTable = std::map<std::string, PatientLabel, std::less<>>;

/// `patient_id,label[,event_hours]`
LabelTable parse_labels_csv_text(std::string_view text);
LabelTable parse_labels_csv(const std::filesystem::path& path);

/// Numeric static covariates: `patient_id,<col>,<col>,...`
struct StaticsTable {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>, std::less<>> rows;
};

StaticsTable parse_statics_csv_text(std::string_view text);
StaticsTable parse_statics_csv(const std::filesystem::path& path);

/// Cohort selection and feature-window settings of the baseline task.
struct CohortTask {
  double window_hours = 48.0;
  std::size_t n_obs = 2;
  std::size_t min_timepoints = 3;
  /// Patients whose event occurred earlier than this are excluded.
  std::optional<double> min_event_hours;
  bool drop_empty_rows = true;
};

struct Cohort {
  PanelDataset data;
  std::vector<int> labels;
  /// One row per patient (0 columns when no statics were given).
  Matrix statics;
  std::vector<std::string> static_columns;
};

/// Applies, in order: labelled patients only, early-event exclusion, the
/// observation window, empty-row removal and the minimum number of rows.
Cohort build_cohort(const PanelDataset& data, const LabelTable& labels, const StaticsTable* statics,
                    const CohortTask& task);

/// Concatenation over the last `n_obs` rows before `window_hours` of
/// (D imputed values, D mask bits), followed by the static covariates.
Matrix extract_baseline_features(const PanelDataset& imputed, const MaskMatrix& mask,
                                 double window_hours, std::size_t n_obs,
                                 const Matrix* statics = nullptr);
Matrix extract_baseline_features(const ImputationResult& imputed, const MaskMatrix& mask,
                                 double window_hours, std::size_t n_obs,
                                 const Matrix* statics = nullptr);

struct LogisticOptions {
  double l2 = 1e-2;
  std::size_t max_iter = 100;
  double tol = 1e-8;
};

struct LogisticModel {
  Vector weights;
  double intercept = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Minimizes mean log-loss + l2/2 ||w||^2 (intercept unpenalized) with
/// damped Newton steps until the gradient norm is <= tol.
LogisticModel fit_logistic(const Matrix& features, std::span<const int> labels,
                           const LogisticOptions& opts);
std::vector<double> predict_proba(const LogisticModel& model, const Matrix& features);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Matrix& features, std::span<const int> labels) = 0;
  virtual std::vector<double> predict_proba(const Matrix& features) const = 0;
};

class LogisticRegression final : public Classifier {
 public:
  explicit LogisticRegression(LogisticOptions opts = {}) : opts_(opts) {}
  void fit(const Matrix& features, std::span<const int> labels) override;
  std::vector<double> predict_proba(const Matrix& features) const override;
  const LogisticModel& model() const { return model_; }

 private:
  LogisticOptions opts_;
  LogisticModel model_;
};

using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;
using ImputationMethod = std::variant<ImputerSpec, TdiSpec>;

struct CvConfig {
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
  bool stratified = true;
};

/// Fold id for every patient.
std::vector<std::size_t> assign_folds(std::span<const int> labels, const CvConfig& cv);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double auroc = 0.0;
  double aupr = 0.0;
  std::vector<std::size_t> train_patients;
  /// f statistic used for both partitions (fit on the training fold).
  std::vector<double> train_frequencies;
};

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;  // sample standard deviation
};

Summary summarize(std::span<const double> values);

struct CvResult {
  std::vector<FoldResult> folds;
  Summary auroc;
  Summary aupr;

  /// One row per fold, then `mean`, `median`, `sd` rows.
  std::string to_csv() const;
};

/// Per fold: standardizer and f statistic fit on the training patients;
/// imputation run separately on the training and test patients; classifier
/// fit on training features and scored on the test fold.
CvResult cross_validate(const Cohort& cohort, const ImputationMethod& method, const CvConfig& cv,
                        const CohortTask& task, const LogisticOptions& logistic = {},
                        const ClassifierFactory& classifier = {});

/// Labels drawn from a logistic model of the mean true value of `variables`
/// over each patient's last `n_obs` rows inside the window.
std::vector<int> linear_risk_labels(const PanelDataset& truth, std::span<const std::size_t> variables,
                                    double window_hours, std::size_t n_obs, double strength,
                                    double offset, std::uint64_t seed);

Cohort permute_labels(const Cohort& cohort, std::uint64_t seed);

}  // namespace tdi
