/*
 * Copyright 2026 The xdistill Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef XDISTILL_SRC_TREE_BUILDER_HPP_
#define XDISTILL_SRC_TREE_BUILDER_HPP_

#include <random>
#include <span>
#include <vector>

#include "xdistill/trees.hpp"

namespace xdistill::detail {

// Per-row training statistics. Class trees use `label` and `weight`;
// scalar trees accumulate `sum` (weighted target or negative gradient) over
// `denom` (weight or hessian), shrunk by `l2`.
struct RowStats {
  std::span<const int> label;
  std::span<const double> weight;
  std::span<const double> sum;
  std::span<const double> denom;
  int n_classes = 0;  // > 0 selects the class criterion
  double l2 = 0.0;
};

struct BuildParams {
  int max_depth = 0;  // 0 = unlimited
  int mtry = 0;       // candidate features per node
  int min_leaf = 1;
  bool random_thresholds = false;
};

// Grows one CART tree over `rows` (indices into x). Adds each split's score
// gain to `importances[feature]`.
Tree build_exact_tree(const Matrix& x, std::vector<int> rows, const RowStats& stats, const BuildParams& params,
                      std::mt19937_64& rng, Vector& importances);

// Quantile bins for histogram boosting. A value falls in the first bin whose
// upper cut is >= value.
struct FeatureBins {
  std::vector<Vector> cuts;                  // per feature, ascending
  std::vector<std::vector<std::uint16_t>> codes;  // per feature, per row

  static FeatureBins build(const Matrix& x, int n_bins);
};

// Leaf-wise histogram tree limited to `max_leaves` leaves.
Tree build_histogram_tree(const FeatureBins& bins, const RowStats& stats, int max_leaves, int min_leaf,
                          Vector& importances);

}  // namespace xdistill::detail

#endif  // XDISTILL_SRC_TREE_BUILDER_HPP_
