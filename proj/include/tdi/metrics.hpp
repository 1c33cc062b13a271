#pragma once

#include <span>

namespace tdi {

// Differences between true values `y` and estimates `yhat`.
double rmse(std::span<const double> y, std::span<const double> yhat);
/// rmse / y_range; y_range is (max - min) of the variable's true values.
double nrmse(std::span<const double> y, std::span<const double> yhat, double y_range);
/// Mean of |yhat - y| / ((yhat + y) / 2). Terms whose denominator is below
/// 1e-12 in magnitude contribute 0 but still count towards n.
double smape(std::span<const double> y, std::span<const double> yhat);

// Binary ranking quality; labels are 0/1.
/// Mann-Whitney statistic with half credit for tied scores.
double auroc(std::span<const int> labels, std::span<const double> scores);
/// Average precision: sum over distinct thresholds of (recall step) x precision.
double aupr(std::span<const int> labels, std::span<const double> scores);

}  // namespace tdi
