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

#ifndef XDISTILL_COMMON_HPP_
#define XDISTILL_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace xdistill {

// Row-major so that a sample is a contiguous span of features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = std::vector<double>;

enum class Task { kClassification, kRegression };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

// Thrown when an input violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown on file and parse failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when optimization diverges (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

// SplitMix64 finalizer. Used to derive independent RNG streams from a
// master seed so that stream i does not depend on how many threads ran.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// Runs body(i) for i in [0, n) over up to n_threads workers. Work items are
// claimed dynamically; callers write results into slot i only.
// n_threads == 0 picks the hardware concurrency.
void parallel_for(std::size_t n, unsigned n_threads,
                  const std::function<void(std::size_t)>& body);

// Index of the largest entry; lowest index wins ties.
template <typename Row>
int argmax(const Row& row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

}  // namespace xdistill

#endif  // XDISTILL_COMMON_HPP_
