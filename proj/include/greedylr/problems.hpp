// SPDX-License-Identifier: Apache-2.0
/**
 * @file   problems.hpp
 * @brief  Finite-sum objectives f(x) = (1/n) sum_i f_i(x) with exact
 *         per-component loss and gradient.
 *
 * Four families are provided:
 *  - quadratic_sum: f_i(x) = 1/2 x^T A_i x - b_i^T x + c_i with symmetric
 *    positive definite A_i. L_max, x* and f* are known exactly.
 *  - logistic: binary logistic regression on synthetic data with label noise.
 *    Each component is one minibatch.
 *  - mlp: one-hidden-layer tanh network regressing a random teacher network.
 *    Each component is one minibatch.
 *  - rosenbrock: the classic two-dimensional banana function, n = 1.
 *
 * Problems are immutable after construction and may be shared across
 * threads. Component indices are zero-based.
 */
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace greedylr::problems {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ProblemKind { quadratic_sum, logistic, mlp, rosenbrock };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::quadratic_sum;
  // Parameter dimension for quadratic_sum; input feature count for logistic
  // and mlp; ignored for rosenbrock.
  int dimension = 8;
  int n_components = 16;
  double condition_number = 10.0;
  // Target L_max for quadratic_sum.
  double smoothness = 1.0;
  // Spread of the component minimizers around their common mean
  // (quadratic_sum). Zero gives an interpolating problem.
  double heterogeneity = 0.5;
  int hidden = 16;
  int batch_size = 8;
  double label_noise = 0.1;
  double target_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Evaluation {
  double loss = 0.0;
  Vector grad;
};

struct QuadraticSum {
  std::vector<Matrix> a;
  std::vector<Vector> b;
  std::vector<double> c;
  Matrix a_mean;
  Vector b_mean;
  double c_mean = 0.0;
};

struct Logistic {
  Matrix features;  // rows are samples
  Vector labels;    // +1 / -1
  int batch_size = 1;
};

struct Mlp {
  Matrix inputs;
  Vector targets;
  int input_dim = 1;
  int hidden = 1;
  int batch_size = 1;
};

struct Rosenbrock {};

class Problem {
 public:
  /// Deterministic generator: the same spec always yields bitwise-identical
  /// data and initial point.
  static Problem make(const ProblemSpec& spec);

  /// Quadratic sum from explicit matrices. Each A_i must be symmetric with
  /// a positive definite average; c defaults to zeros.
  static Problem quadratic(std::vector<Matrix> a, std::vector<Vector> b,
                           std::vector<double> c = {});

  ProblemKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  int n_components() const { return n_components_; }
  const std::optional<double>& l_max() const { return l_max_; }
  const std::optional<double>& f_star() const { return f_star_; }
  const std::optional<Vector>& x_star() const { return x_star_; }
  const Vector& initial_point() const { return x0_; }
  const ProblemSpec& spec() const { return spec_; }

  Evaluation eval_component(int i, const Vector& x) const;
  Evaluation eval_full(const Vector& x) const;

  const QuadraticSum* quadratic_data() const {
    return std::get_if<QuadraticSum>(&data_);
  }

 private:
  Problem() = default;
  void finish_quadratic();

  ProblemKind kind_ = ProblemKind::quadratic_sum;
  ProblemSpec spec_;
  int dimension_ = 0;
  int n_components_ = 0;
  std::optional<double> l_max_;
  std::optional<double> f_star_;
  std::optional<Vector> x_star_;
  Vector x0_;
  std::variant<QuadraticSum, Logistic, Mlp, Rosenbrock> data_;
};

/// Parameter count of the tanh network: W1 (hidden x input), b1, w2, b2.
int mlp_parameter_count(int input_dim, int hidden);

}  // namespace greedylr::problems
