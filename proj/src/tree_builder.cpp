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

#include "tree_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace xdistill::detail {
namespace {

// Splits must improve the score by more than this fraction of the parent
// score; anything smaller is rounding noise.
constexpr double kMinRelativeGain = 1e-12;

// Sum of squared class weights over total weight. For a node this is
// W * (1 - gini) rearranged; differences of it are weighted Gini decreases.
struct ClassAcc {
  Vector counts;
  double total = 0.0;
  double sumsq = 0.0;
  int n = 0;

  explicit ClassAcc(int k) : counts(static_cast<std::size_t>(k), 0.0) {}

  void add(int label, double w) {
    double& c = counts[static_cast<std::size_t>(label)];
    sumsq += (2.0 * c + w) * w;
    c += w;
    total += w;
    ++n;
  }
  void remove(int label, double w) {
    double& c = counts[static_cast<std::size_t>(label)];
    sumsq += (w - 2.0 * c) * w;
    c -= w;
    total -= w;
    --n;
  }
  double score() const { return total > 0.0 ? sumsq / total : 0.0; }
};

struct ScalarAcc {
  double sum = 0.0;
  double denom = 0.0;
  int n = 0;

  void add(double s, double h) {
    sum += s;
    denom += h;
    ++n;
  }
  void remove(double s, double h) {
    sum -= s;
    denom -= h;
    --n;
  }
  double score(double l2) const {
    const double d = denom + l2;
    return d > 1e-300 ? sum * sum / d : 0.0;
  }
};

struct Candidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;

  bool better_than(const Candidate& other) const {
    if (other.feature < 0) return true;
    if (gain != other.gain) return gain > other.gain;
    if (feature != other.feature) return feature < other.feature;
    return threshold < other.threshold;
  }
};

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

class ExactGrower {
 public:
  ExactGrower(const Matrix& x, const RowStats& stats, const BuildParams& params, std::mt19937_64& rng,
              Vector& importances)
      : x_(x), stats_(stats), params_(params), rng_(rng), importances_(importances) {
    features_.resize(static_cast<std::size_t>(x.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree grow(std::vector<int> rows) {
    rows_ = std::move(rows);
    tree_.value_dim = stats_.n_classes > 0 ? stats_.n_classes : 1;
    grow_node(0, static_cast<int>(rows_.size()), 0);
    return std::move(tree_);
  }

 private:
  bool is_class() const { return stats_.n_classes > 0; }

  int grow_node(int begin, int end, int depth) {
    const int node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    Candidate best;
    const int n = end - begin;
    const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
    if (depth_ok && n >= 2 * params_.min_leaf && !is_pure(begin, end)) best = find_split(begin, end);

    if (best.feature < 0) {
      write_leaf(node, begin, end);
      return node;
    }
    importances_[static_cast<std::size_t>(best.feature)] += best.gain;
    const auto mid_it =
        std::stable_partition(rows_.begin() + begin, rows_.begin() + end,
                              [&](int r) { return x_(r, best.feature) <= best.threshold; });
    const int mid = static_cast<int>(mid_it - rows_.begin());
    tree_.nodes[node].feature = best.feature;
    tree_.nodes[node].threshold = best.threshold;
    const int left = grow_node(begin, mid, depth + 1);
    const int right = grow_node(mid, end, depth + 1);
    tree_.nodes[node].left = left;
    tree_.nodes[node].right = right;
    return node;
  }

  bool is_pure(int begin, int end) const {
    if (is_class()) {
      const int first = stats_.label[rows_[begin]];
      for (int i = begin + 1; i < end; ++i) {
        if (stats_.label[rows_[i]] != first) return false;
      }
      return true;
    }
    return false;
  }

  void write_leaf(int node, int begin, int end) {
    tree_.nodes[node].value = static_cast<int>(tree_.values.size());
    if (is_class()) {
      ClassAcc acc(stats_.n_classes);
      for (int i = begin; i < end; ++i) acc.add(stats_.label[rows_[i]], stats_.weight[rows_[i]]);
      for (double c : acc.counts) tree_.values.push_back(acc.total > 0.0 ? c / acc.total : 0.0);
    } else {
      ScalarAcc acc;
      for (int i = begin; i < end; ++i) acc.add(stats_.sum[rows_[i]], stats_.denom[rows_[i]]);
      const double d = acc.denom + stats_.l2;
      tree_.values.push_back(d > 1e-300 ? acc.sum / d : 0.0);
    }
  }

  // Visits features in random order until `mtry` non-constant ones have been
  // evaluated; with mtry == p every feature is visited in index order.
  Candidate find_split(int begin, int end) {
    const int p = static_cast<int>(features_.size());
    const int mtry = params_.mtry > 0 ? std::min(params_.mtry, p) : p;
    if (mtry < p) std::shuffle(features_.begin(), features_.end(), rng_);

    Candidate best;
    int evaluated = 0;
    for (int k = 0; k < p && evaluated < mtry; ++k) {
      const int f = mtry < p ? features_[k] : k;
      Candidate c;
      bool constant = false;
      if (params_.random_thresholds) {
        c = random_split(f, begin, end, constant);
      } else {
        c = best_split(f, begin, end, constant);
      }
      if (constant) continue;
      ++evaluated;
      if (c.feature >= 0 && c.better_than(best)) best = c;
    }
    if (mtry < p) std::sort(features_.begin(), features_.end());
    return best;
  }

  template <typename Acc, typename AddFn, typename RemoveFn, typename ScoreFn>
  Candidate scan_sorted(int f, Acc left, Acc right, AddFn add, RemoveFn remove, ScoreFn score) {
    const double parent = score(right);
    const double min_gain = kMinRelativeGain * std::max(1.0, std::abs(parent));
    Candidate best;
    const int m = static_cast<int>(sorted_.size());
    for (int i = 0; i + 1 < m; ++i) {
      add(left, sorted_[i].second);
      remove(right, sorted_[i].second);
      if (sorted_[i].first == sorted_[i + 1].first) continue;
      if (left.n < params_.min_leaf || right.n < params_.min_leaf) continue;
      const double gain = score(left) + score(right) - parent;
      if (gain > min_gain && (best.feature < 0 || gain > best.gain)) {
        best.feature = f;
        best.gain = gain;
        best.threshold = midpoint(sorted_[i].first, sorted_[i + 1].first);
      }
    }
    return best;
  }

  Candidate best_split(int f, int begin, int end, bool& constant) {
    sorted_.clear();
    for (int i = begin; i < end; ++i) sorted_.emplace_back(x_(rows_[i], f), rows_[i]);
    std::sort(sorted_.begin(), sorted_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    constant = sorted_.front().first == sorted_.back().first;
    if (constant) return {};

    if (is_class()) {
      ClassAcc all(stats_.n_classes);
      for (int i = begin; i < end; ++i) all.add(stats_.label[rows_[i]], stats_.weight[rows_[i]]);
      return scan_sorted(
          f, ClassAcc(stats_.n_classes), all,
          [&](ClassAcc& a, int r) { a.add(stats_.label[r], stats_.weight[r]); },
          [&](ClassAcc& a, int r) { a.remove(stats_.label[r], stats_.weight[r]); },
          [](const ClassAcc& a) { return a.score(); });
    }
    ScalarAcc all;
    for (int i = begin; i < end; ++i) all.add(stats_.sum[rows_[i]], stats_.denom[rows_[i]]);
    const double l2 = stats_.l2;
    return scan_sorted(
        f, ScalarAcc{}, all, [&](ScalarAcc& a, int r) { a.add(stats_.sum[r], stats_.denom[r]); },
        [&](ScalarAcc& a, int r) { a.remove(stats_.sum[r], stats_.denom[r]); },
        [l2](const ScalarAcc& a) { return a.score(l2); });
  }

  Candidate random_split(int f, int begin, int end, bool& constant) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int i = begin; i < end; ++i) {
      const double v = x_(rows_[i], f);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    constant = !(lo < hi);
    if (constant) return {};
    std::uniform_real_distribution<double> draw(lo, hi);
    const double threshold = draw(rng_);

    double gain = 0.0;
    int n_left = 0;
    int n_right = 0;
    if (is_class()) {
      ClassAcc left(stats_.n_classes), right(stats_.n_classes), all(stats_.n_classes);
      for (int i = begin; i < end; ++i) {
        const int r = rows_[i];
        all.add(stats_.label[r], stats_.weight[r]);
        (x_(r, f) <= threshold ? left : right).add(stats_.label[r], stats_.weight[r]);
      }
      gain = left.score() + right.score() - all.score();
      n_left = left.n;
      n_right = right.n;
    } else {
      ScalarAcc left, right;
      for (int i = begin; i < end; ++i) {
        const int r = rows_[i];
        (x_(r, f) <= threshold ? left : right).add(stats_.sum[r], stats_.denom[r]);
      }
      ScalarAcc all{left.sum + right.sum, left.denom + right.denom, left.n + right.n};
      gain = left.score(stats_.l2) + right.score(stats_.l2) - all.score(stats_.l2);
      n_left = left.n;
      n_right = right.n;
    }
    if (n_left < params_.min_leaf || n_right < params_.min_leaf) return {};
    if (!(gain > kMinRelativeGain)) return {};
    return {f, threshold, gain};
  }

  const Matrix& x_;
  const RowStats& stats_;
  const BuildParams& params_;
  std::mt19937_64& rng_;
  Vector& importances_;
  std::vector<int> rows_;
  std::vector<int> features_;
  std::vector<std::pair<double, int>> sorted_;
  Tree tree_;
};

}  // namespace

Tree build_exact_tree(const Matrix& x, std::vector<int> rows, const RowStats& stats, const BuildParams& params,
                      std::mt19937_64& rng, Vector& importances) {
  require(!rows.empty(), "tree: no training rows");
  ExactGrower grower(x, stats, params, rng, importances);
  return grower.grow(std::move(rows));
}

FeatureBins FeatureBins::build(const Matrix& x, int n_bins) {
  require(n_bins >= 2 && n_bins <= 65536, "histogram: n_bins must be in [2, 65536]");
  FeatureBins bins;
  const auto n = static_cast<std::size_t>(x.rows());
  bins.cuts.resize(static_cast<std::size_t>(x.cols()));
  bins.codes.resize(static_cast<std::size_t>(x.cols()));
  Vector sorted(n);
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    for (std::size_t i = 0; i < n; ++i) sorted[i] = x(static_cast<Eigen::Index>(i), f);
    std::sort(sorted.begin(), sorted.end());
    Vector distinct;
    std::vector<std::size_t> cumulative;
    for (std::size_t i = 0; i < n; ++i) {
      if (distinct.empty() || sorted[i] != distinct.back()) {
        distinct.push_back(sorted[i]);
        cumulative.push_back(0);
      }
      cumulative.back() = i + 1;
    }
    Vector& cuts = bins.cuts[static_cast<std::size_t>(f)];
    if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(midpoint(distinct[i], distinct[i + 1]));
    } else {
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        const double target = static_cast<double>(cuts.size() + 1) * static_cast<double>(n) / n_bins;
        if (static_cast<double>(cumulative[i]) >= target && cuts.size() + 1 < static_cast<std::size_t>(n_bins)) {
          cuts.push_back(midpoint(distinct[i], distinct[i + 1]));
        }
      }
    }
    auto& codes = bins.codes[static_cast<std::size_t>(f)];
    codes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), f);
      codes[i] = static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
  }
  return bins;
}

namespace {

struct HistLeaf {
  int node = 0;
  std::vector<int> rows;
  Candidate best;
  int best_bin = -1;
};

}  // namespace

Tree build_histogram_tree(const FeatureBins& bins, const RowStats& stats, int max_leaves, int min_leaf,
                          Vector& importances) {
  const std::size_t n = stats.sum.size();
  require(n > 0, "tree: no training rows");
  Tree tree;
  tree.value_dim = 1;
  const double l2 = stats.l2;

  std::vector<ScalarAcc> hist;
  auto evaluate = [&](HistLeaf& leaf) {
    leaf.best = {};
    leaf.best_bin = -1;
    if (static_cast<int>(leaf.rows.size()) < 2 * min_leaf) return;
    ScalarAcc all;
    for (int r : leaf.rows) all.add(stats.sum[r], stats.denom[r]);
    const double parent = all.score(l2);
    const double min_gain = kMinRelativeGain * std::max(1.0, std::abs(parent));
    for (std::size_t f = 0; f < bins.cuts.size(); ++f) {
      const auto& cuts = bins.cuts[f];
      if (cuts.empty()) continue;
      hist.assign(cuts.size() + 1, ScalarAcc{});
      const auto& codes = bins.codes[f];
      for (int r : leaf.rows) hist[codes[r]].add(stats.sum[r], stats.denom[r]);
      ScalarAcc left;
      for (std::size_t b = 0; b + 1 < hist.size(); ++b) {
        left.sum += hist[b].sum;
        left.denom += hist[b].denom;
        left.n += hist[b].n;
        const ScalarAcc right{all.sum - left.sum, all.denom - left.denom, all.n - left.n};
        if (left.n < min_leaf || right.n < min_leaf || hist[b].n == 0) continue;
        const double gain = left.score(l2) + right.score(l2) - parent;
        if (gain > min_gain && (leaf.best.feature < 0 || gain > leaf.best.gain)) {
          leaf.best = {static_cast<int>(f), cuts[b], gain};
          leaf.best_bin = static_cast<int>(b);
        }
      }
    }
  };

  std::vector<HistLeaf> leaves(1);
  leaves[0].rows.resize(n);
  std::iota(leaves[0].rows.begin(), leaves[0].rows.end(), 0);
  tree.nodes.emplace_back();
  evaluate(leaves[0]);

  while (static_cast<int>(leaves.size()) < max_leaves) {
    int pick = -1;
    for (int i = 0; i < static_cast<int>(leaves.size()); ++i) {
      if (leaves[i].best.feature < 0) continue;
      if (pick < 0 || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
    }
    if (pick < 0) break;
    HistLeaf parent = std::move(leaves[pick]);
    const auto& codes = bins.codes[static_cast<std::size_t>(parent.best.feature)];
    HistLeaf left, right;
    for (int r : parent.rows) {
      (codes[r] <= parent.best_bin ? left : right).rows.push_back(r);
    }
    importances[static_cast<std::size_t>(parent.best.feature)] += parent.best.gain;
    auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
    node.feature = parent.best.feature;
    node.threshold = parent.best.threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    left.node = node.left;
    right.node = node.right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    evaluate(left);
    evaluate(right);
    leaves[static_cast<std::size_t>(pick)] = std::move(left);
    leaves.push_back(std::move(right));
  }

  for (const auto& leaf : leaves) {
    ScalarAcc acc;
    for (int r : leaf.rows) acc.add(stats.sum[r], stats.denom[r]);
    const double d = acc.denom + l2;
    tree.nodes[static_cast<std::size_t>(leaf.node)].value = static_cast<int>(tree.values.size());
    tree.values.push_back(d > 1e-300 ? acc.sum / d : 0.0);
  }
  return tree;
}

}  // namespace xdistill::detail
