/*
 * Copyright 2026 The gprop Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gprop {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters, out-of-range indices, inconsistent shapes.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed input files. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        source_(source),
        line_(line) {}

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Divergence, non-convergence and other numerical failures. `step` is the
// iteration at which the failure was detected, or -1.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what), step_(step) {}

  long step() const { return step_; }

 private:
  long step_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InvalidArgument(std::string(name) + ": expected " + shape_string(rows, cols) +
                          ", got " + shape_string(m.rows(), m.cols()));
  }
}

// Counters for the operations performed by propagation code. Edge work is
// everything proportional to the number of edges, node work everything
// proportional to the number of nodes.
struct OpCounter {
  std::uint64_t edge_flops = 0;
  std::uint64_t node_flops = 0;
  std::uint64_t dense_flops = 0;

  void reset() { *this = OpCounter{}; }
};

inline OpCounter& op_counter() {
  thread_local OpCounter counter;
  return counter;
}

}  // namespace gprop
