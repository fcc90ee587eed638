// SPDX-License-Identifier: Apache-2.0
#include "greedylr/problems.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "greedylr/rng.hpp"

namespace greedylr::problems {

namespace {

[[noreturn]] void spec_fail(const std::string& what) {
  throw std::invalid_argument("invalid problem spec: " + what);
}

Matrix gaussian_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on Eigen's storage.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

Vector gaussian_vector(RngStream& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Matrix random_orthogonal(RngStream& rng, int d) {
  const Matrix g = gaussian_matrix(rng, d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  // Sign-fix against R's diagonal so Q is Haar distributed.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

double softplus(double z) {
  // log(1 + exp(z)) without overflow.
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double max_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double mlp_forward(const Vector& x, const Eigen::Ref<const Eigen::RowVectorXd>& in,
                   int input_dim, int hidden, Vector* act) {
  const int w2_off = hidden * input_dim + hidden;
  double out = x[w2_off + hidden];
  for (int h = 0; h < hidden; ++h) {
    double z = x[hidden * input_dim + h];
    for (int p = 0; p < input_dim; ++p) z += x[h * input_dim + p] * in[p];
    const double a = std::tanh(z);
    if (act) (*act)[h] = a;
    out += x[w2_off + h] * a;
  }
  return out;
}

}  // namespace

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::quadratic_sum: return "quadratic_sum";
    case ProblemKind::logistic: return "logistic";
    case ProblemKind::mlp: return "mlp";
    case ProblemKind::rosenbrock: return "rosenbrock";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
  for (auto k : {ProblemKind::quadratic_sum, ProblemKind::logistic,
                 ProblemKind::mlp, ProblemKind::rosenbrock}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown problem kind '" + std::string(name) + "'");
}

int mlp_parameter_count(int input_dim, int hidden) {
  return hidden * input_dim + 2 * hidden + 1;
}

void ProblemSpec::validate() const {
  if (kind != ProblemKind::rosenbrock) {
    if (dimension < 1) spec_fail("dimension must be positive");
    if (n_components < 1) spec_fail("n_components must be positive");
  }
  if (!(condition_number >= 1.0)) spec_fail("condition_number must be >= 1");
  if (!(smoothness > 0.0)) spec_fail("smoothness must be positive");
  if (!(heterogeneity >= 0.0)) spec_fail("heterogeneity must be nonnegative");
  if (kind == ProblemKind::mlp && (hidden < 1 || hidden > 32)) {
    spec_fail("hidden width must lie in [1, 32]");
  }
  if ((kind == ProblemKind::mlp || kind == ProblemKind::logistic) &&
      batch_size < 1) {
    spec_fail("batch_size must be positive");
  }
  if (!(label_noise >= 0.0 && label_noise <= 0.5)) {
    spec_fail("label_noise must lie in [0, 0.5]");
  }
  if (!(target_noise >= 0.0)) spec_fail("target_noise must be nonnegative");
}

Problem Problem::make(const ProblemSpec& spec) {
  spec.validate();
  Problem p;
  p.kind_ = spec.kind;
  p.spec_ = spec;
  RngStream data_rng(spec.seed, StreamTag::problem_data);
  RngStream init_rng(spec.seed, StreamTag::initial_point);

  switch (spec.kind) {
    case ProblemKind::quadratic_sum: {
      const int d = spec.dimension;
      const int n = spec.n_components;
      const double top = spec.smoothness;
      const double bottom = spec.smoothness / spec.condition_number;
      const Vector center = gaussian_vector(data_rng, d);
      QuadraticSum q;
      for (int i = 0; i < n; ++i) {
        Vector eig(d);
        for (int j = 0; j < d; ++j) {
          eig[j] = std::exp(data_rng.uniform(std::log(bottom), std::log(top)));
        }
        // Pin the pooled extremes so L_max and the pooled condition number
        // come out exact.
        if (i == 0) eig[0] = top;
        if (i == n - 1 && (d > 1 || n > 1)) eig[d - 1] = bottom;
        const Matrix qm = random_orthogonal(data_rng, d);
        Matrix a = qm * eig.asDiagonal() * qm.transpose();
        a = 0.5 * (a + a.transpose());
        const Vector z = center + gaussian_vector(data_rng, d, spec.heterogeneity);
        q.b.push_back(a * z);
        q.c.push_back(0.5 * z.dot(a * z));
        q.a.push_back(std::move(a));
      }
      p.data_ = std::move(q);
      p.dimension_ = d;
      p.n_components_ = n;
      p.finish_quadratic();
      p.l_max_ = top;
      p.x0_ = gaussian_vector(init_rng, d, 2.0);
      break;
    }
    case ProblemKind::logistic: {
      const int d = spec.dimension;
      const int samples = spec.n_components * spec.batch_size;
      Logistic lg;
      lg.batch_size = spec.batch_size;
      lg.features = gaussian_matrix(data_rng, samples, d);
      const Vector w_true = gaussian_vector(data_rng, d);
      lg.labels.resize(samples);
      for (int s = 0; s < samples; ++s) {
        double y = lg.features.row(s).dot(w_true) >= 0.0 ? 1.0 : -1.0;
        if (data_rng.uniform() < spec.label_noise) y = -y;
        lg.labels[s] = y;
      }
      const Matrix gram =
          lg.features.transpose() * lg.features / static_cast<double>(samples);
      p.l_max_ = 0.25 * max_eigenvalue(gram);
      p.data_ = std::move(lg);
      p.dimension_ = d;
      p.n_components_ = spec.n_components;
      p.x0_ = Vector::Zero(d);
      break;
    }
    case ProblemKind::mlp: {
      const int in = spec.dimension;
      const int hid = spec.hidden;
      const int samples = spec.n_components * spec.batch_size;
      Mlp m;
      m.input_dim = in;
      m.hidden = hid;
      m.batch_size = spec.batch_size;
      m.inputs = gaussian_matrix(data_rng, samples, in);
      const int np = mlp_parameter_count(in, hid);
      Vector teacher(np);
      for (int k = 0; k < hid * in; ++k) {
        teacher[k] = data_rng.normal() / std::sqrt(static_cast<double>(in));
      }
      for (int k = hid * in; k < np; ++k) teacher[k] = data_rng.normal();
      m.targets.resize(samples);
      for (int s = 0; s < samples; ++s) {
        m.targets[s] = mlp_forward(teacher, m.inputs.row(s), in, hid, nullptr) +
                       spec.target_noise * data_rng.normal();
      }
      p.data_ = std::move(m);
      p.dimension_ = np;
      p.n_components_ = spec.n_components;
      p.x0_ = Vector::Zero(np);
      for (int k = 0; k < hid * in; ++k) {
        p.x0_[k] = init_rng.normal() / std::sqrt(static_cast<double>(in));
      }
      const int w2_off = hid * in + hid;
      for (int h = 0; h < hid; ++h) {
        p.x0_[w2_off + h] = init_rng.normal() / std::sqrt(static_cast<double>(hid));
      }
      break;
    }
    case ProblemKind::rosenbrock: {
      p.data_ = Rosenbrock{};
      p.dimension_ = 2;
      p.n_components_ = 1;
      p.f_star_ = 0.0;
      p.x_star_ = Vector::Ones(2);
      p.x0_ = Vector(2);
      p.x0_ << -1.2, 1.0;
      break;
    }
  }
  return p;
}

Problem Problem::quadratic(std::vector<Matrix> a, std::vector<Vector> b,
                           std::vector<double> c) {
  if (a.empty() || a.size() != b.size()) {
    throw std::invalid_argument("quadratic needs matching, nonempty A and b lists");
  }
  if (c.empty()) c.assign(a.size(), 0.0);
  if (c.size() != a.size()) {
    throw std::invalid_argument("quadratic offset list has the wrong length");
  }
  const Eigen::Index d = a.front().rows();
  double l_max = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != d || a[i].cols() != d || b[i].size() != d) {
      throw std::invalid_argument("quadratic component " + std::to_string(i) +
                                  " has inconsistent shape");
    }
    if (!a[i].isApprox(a[i].transpose())) {
      throw std::invalid_argument("quadratic component " + std::to_string(i) +
                                  " is not symmetric");
    }
    l_max = std::max(l_max, max_eigenvalue(a[i]));
  }
  Problem p;
  p.kind_ = ProblemKind::quadratic_sum;
  p.spec_.kind = ProblemKind::quadratic_sum;
  p.spec_.dimension = static_cast<int>(d);
  p.spec_.n_components = static_cast<int>(a.size());
  p.dimension_ = static_cast<int>(d);
  p.n_components_ = static_cast<int>(a.size());
  p.data_ = QuadraticSum{std::move(a), std::move(b), std::move(c), {}, {}, 0.0};
  p.finish_quadratic();
  p.l_max_ = l_max;
  p.x0_ = Vector::Zero(d);
  return p;
}

void Problem::finish_quadratic() {
  auto& q = std::get<QuadraticSum>(data_);
  const double n = static_cast<double>(q.a.size());
  q.a_mean = Matrix::Zero(dimension_, dimension_);
  q.b_mean = Vector::Zero(dimension_);
  q.c_mean = 0.0;
  for (std::size_t i = 0; i < q.a.size(); ++i) {
    q.a_mean += q.a[i];
    q.b_mean += q.b[i];
    q.c_mean += q.c[i];
  }
  q.a_mean /= n;
  q.b_mean /= n;
  q.c_mean /= n;
  Eigen::LDLT<Matrix> ldlt(q.a_mean);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw std::invalid_argument("averaged quadratic is not positive definite");
  }
  Vector xs = ldlt.solve(q.b_mean);
  f_star_ = 0.5 * xs.dot(q.a_mean * xs) - q.b_mean.dot(xs) + q.c_mean;
  x_star_ = std::move(xs);
}

Evaluation Problem::eval_component(int i, const Vector& x) const {
  if (i < 0 || i >= n_components_) {
    throw std::out_of_range("component index " + std::to_string(i) +
                            " outside [0, " + std::to_string(n_components_) + ")");
  }
  if (x.size() != dimension_) {
    throw std::invalid_argument("point dimension " + std::to_string(x.size()) +
                                " does not match problem dimension " +
                                std::to_string(dimension_));
  }
  Evaluation out;
  switch (kind_) {
    case ProblemKind::quadratic_sum: {
      const auto& q = std::get<QuadraticSum>(data_);
      const Vector ax = q.a[i] * x;
      out.loss = 0.5 * x.dot(ax) - q.b[i].dot(x) + q.c[i];
      out.grad = ax - q.b[i];
      break;
    }
    case ProblemKind::logistic: {
      const auto& lg = std::get<Logistic>(data_);
      out.loss = 0.0;
      out.grad = Vector::Zero(dimension_);
      const int begin = i * lg.batch_size;
      for (int s = begin; s < begin + lg.batch_size; ++s) {
        const double y = lg.labels[s];
        const double margin = y * lg.features.row(s).dot(x);
        out.loss += softplus(-margin);
        out.grad -= (y * sigmoid(-margin)) * lg.features.row(s).transpose();
      }
      out.loss /= lg.batch_size;
      out.grad /= lg.batch_size;
      break;
    }
    case ProblemKind::mlp: {
      const auto& m = std::get<Mlp>(data_);
      const int in = m.input_dim;
      const int hid = m.hidden;
      const int b1_off = hid * in;
      const int w2_off = b1_off + hid;
      const int b2_off = w2_off + hid;
      out.loss = 0.0;
      out.grad = Vector::Zero(dimension_);
      Vector act(hid);
      const int begin = i * m.batch_size;
      for (int s = begin; s < begin + m.batch_size; ++s) {
        const auto row = m.inputs.row(s);
        const double pred = mlp_forward(x, row, in, hid, &act);
        const double r = pred - m.targets[s];
        out.loss += 0.5 * r * r;
        out.grad[b2_off] += r;
        for (int h = 0; h < hid; ++h) {
          out.grad[w2_off + h] += r * act[h];
          const double dz = r * x[w2_off + h] * (1.0 - act[h] * act[h]);
          out.grad[b1_off + h] += dz;
          for (int p = 0; p < in; ++p) out.grad[h * in + p] += dz * row[p];
        }
      }
      out.loss /= m.batch_size;
      out.grad /= m.batch_size;
      break;
    }
    case ProblemKind::rosenbrock: {
      const double a = x[0];
      const double b = x[1];
      const double u = 1.0 - a;
      const double v = b - a * a;
      out.loss = u * u + 100.0 * v * v;
      out.grad = Vector(2);
      out.grad << -2.0 * u - 400.0 * a * v, 200.0 * v;
      break;
    }
  }
  return out;
}

Evaluation Problem::eval_full(const Vector& x) const {
  Evaluation acc{0.0, Vector::Zero(dimension_)};
  for (int i = 0; i < n_components_; ++i) {
    const Evaluation e = eval_component(i, x);
    acc.loss += e.loss;
    acc.grad += e.grad;
  }
  acc.loss /= n_components_;
  acc.grad /= n_components_;
  return acc;
}

}  // namespace greedylr::problems
