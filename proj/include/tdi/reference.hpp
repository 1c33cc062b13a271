#pragma once

#include <vector>

#include "tdi/panel.hpp"

// Single-threaded reference versions of the OpenMP kernels. They are kept
// deliberately plain (full sorts, no scratch reuse) and serve as the
// baseline in equality tests and in bench_kernels.
namespace tdi::reference {

Matrix knn_impute(const Matrix& m, std::size_t k);
PanelDataset forward_fill(const PanelDataset& data);
std::vector<Matrix> compute_deltas(const PanelDataset& data, const MaskMatrix& mask);

}  // namespace tdi::reference
