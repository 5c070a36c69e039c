#include "contractive/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace contractive {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

double activate_slope(Activation a, double x) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

Vector activate(Activation a, const Vector& x) {
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

Vector activate_slope(Activation a, const Vector& x) {
  return x.unaryExpr([a](double v) { return activate_slope(a, v); });
}

Vector RecurrentSystem::rhs(const Vector& x, const Vector& u) const {
  Vector dx = W * activate(activation, x) - x + u;
  if (L.size() != 0) dx.noalias() += L * x;
  return dx / tau;
}

void RecurrentSystem::validate() const {
  require_square(W, "RecurrentSystem(W)");
  if (L.size() != 0 && (L.rows() != W.rows() || L.cols() != W.cols())) {
    throw NumericsError("RecurrentSystem: L and W differ in shape");
  }
  if (!(tau > 0.0)) throw NumericsError("RecurrentSystem: tau must be positive");
}

RecurrentSystem RecurrentSystem::single(Matrix w, double tau, Activation activation) {
  RecurrentSystem sys;
  sys.L = Matrix::Zero(w.rows(), w.cols());
  sys.W = std::move(w);
  sys.tau = tau;
  sys.activation = activation;
  return sys;
}

void InputSequence::validate(Eigen::Index dim) const {
  if (!(dt > 0.0)) throw NumericsError("InputSequence: dt must be positive");
  for (const auto& v : values) {
    if (v.size() != dim) throw NumericsError("InputSequence: input has wrong dimension");
    if (!v.allFinite()) throw NumericsError("InputSequence: non-finite input");
  }
}

InputSequence InputSequence::constant(const Vector& u, std::size_t steps, double dt) {
  return InputSequence{std::vector<Vector>(steps, u), dt};
}

InputSequence InputSequence::sampled(const std::function<Vector(double)>& u, std::size_t steps,
                                     double dt) {
  InputSequence seq;
  seq.dt = dt;
  seq.values.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) seq.values.push_back(u(static_cast<double>(k) * dt));
  return seq;
}

Vector step(const Vector& x, const Vector& u, const RecurrentSystem& sys, double dt,
            Integrator method) {
  if (!(dt > 0.0)) throw NumericsError("step: dt must be positive");
  if (x.size() != sys.dim() || u.size() != sys.dim()) {
    throw NumericsError("step: state or input dimension mismatch");
  }
  Vector next;
  if (method == Integrator::Euler) {
    next = x + dt * sys.rhs(x, u);
  } else {
    const Vector k1 = sys.rhs(x, u);
    const Vector k2 = sys.rhs(x + 0.5 * dt * k1, u);
    const Vector k3 = sys.rhs(x + 0.5 * dt * k2, u);
    const Vector k4 = sys.rhs(x + dt * k3, u);
    next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!next.allFinite()) throw DivergenceError("step: state became non-finite");
  return next;
}

Trajectory simulate(const Vector& x0, const InputSequence& inputs, const RecurrentSystem& sys,
                    Integrator method) {
  sys.validate();
  inputs.validate(sys.dim());
  if (x0.size() != sys.dim()) throw NumericsError("simulate: x0 has wrong dimension");
  Trajectory traj;
  traj.times.reserve(inputs.steps() + 1);
  traj.states.reserve(inputs.steps() + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.steps(); ++k) {
    traj.states.push_back(step(traj.states.back(), inputs.values[k], sys, inputs.dt, method));
    traj.times.push_back(static_cast<double>(k + 1) * inputs.dt);
  }
  return traj;
}

std::vector<double> metric_distance(const Trajectory& a, const Trajectory& b,
                                    const Matrix& metric) {
  if (a.states.size() != b.states.size()) {
    throw NumericsError("metric_distance: trajectories differ in length");
  }
  std::vector<double> d(a.states.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    const Vector delta = a.states[k] - b.states[k];
    d[k] = std::sqrt(std::max(0.0, delta.dot(metric * delta)));
  }
  return d;
}

RateFit contraction_rate(const Trajectory& a, const Trajectory& b, const Matrix& metric,
                         double skip, double floor) {
  if (a.times.size() != b.times.size()) {
    throw NumericsError("contraction_rate: trajectories use different time grids");
  }
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (a.times[k] != b.times[k]) {
      throw NumericsError("contraction_rate: trajectories use different time grids");
    }
  }
  const std::vector<double> dist = metric_distance(a, b, metric);
  double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
  RateFit fit;
  bool started = false;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double t = a.times[k];
    if (t + 1e-12 < skip) continue;
    if (dist[k] < floor) break;
    const double y = std::log(std::max(dist[k], 1e-300));
    if (!started) fit.window_start = t;
    started = true;
    fit.window_end = t;
    ++fit.points;
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    syy += y * y;
  }
  if (fit.points < 3) {
    throw NumericsError("contraction_rate: fewer than 3 points in the fit window");
  }
  const auto n = static_cast<double>(fit.points);
  const double var_t = stt - st * st / n;
  const double cov = sty - st * sy / n;
  const double var_y = syy - sy * sy / n;
  const double slope = cov / var_t;
  fit.rate = -slope;
  fit.r2 = var_y > 0.0 ? (cov * cov) / (var_t * var_y) : 1.0;
  return fit;
}

Theorem6Report monitor_theorem6(const Trajectory& traj, const RecurrentSystem& sys,
                                const DiagonalMatrix& p, double c, double g, double beta) {
  Theorem6Report report;
  sys.validate();
  const Eigen::Index n = sys.dim();
  if (sys.activation != Activation::Tanh) {
    report.refusal = "monitor needs a differentiable activation (tanh)";
    return report;
  }
  if (sys.L.size() != 0 && !sys.L.isZero(0.0)) {
    report.refusal = "monitor applies to a single RNN (L must be zero)";
    return report;
  }
  if (p.size() != n || !p.is_positive() || !(c > 0.0) || !(g > 0.0) || !(beta > 0.0)) {
    report.refusal = "P must be positive diagonal and c, g, beta positive";
    return report;
  }
  Matrix a = g * sys.W;
  a.diagonal().array() -= 1.0;
  const Matrix pd = p.dense();
  const Matrix lhs = sym_part(a * pd + pd * a.transpose() + c * pd);
  report.first_condition = max_eig_sym(lhs);
  if (report.first_condition > tol::kRelative * (1.0 + lhs.norm())) {
    report.refusal = "first condition (gW - I)P + P(gW^T - I) <= -cP fails";
    return report;
  }
  const std::size_t steps = traj.states.size();
  if (steps < 2) {
    report.refusal = "trajectory too short";
    return report;
  }
  std::vector<Vector> d(steps);
  for (std::size_t k = 0; k < steps; ++k) d[k] = activate_slope(sys.activation, traj.states[k]);

  std::size_t ok = 0;
  report.worst_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == steps ? k : k + 1;
    const double span = traj.times[hi] - traj.times[lo];
    const Vector ddot = (d[hi] - d[lo]) / span;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = ddot(i) - (c / g) * d[k](i) + beta * d[k](i);
      report.worst_violation = std::max(report.worst_violation, v);
      if (v <= 1e-12) ++ok;
      ++report.checked;
    }
  }
  report.fraction_satisfied = static_cast<double>(ok) / static_cast<double>(report.checked);
  report.ran = true;
  return report;
}

EquivalenceReport y_form_equivalence(const Matrix& w, const std::function<Vector(double)>& b,
                                     const Vector& y0, double dt, double horizon, double tau,
                                     Activation activation, Integrator method) {
  require_square(w, "y_form_equivalence");
  if (!(dt > 0.0) || !(horizon > 0.0)) {
    throw NumericsError("y_form_equivalence: dt and horizon must be positive");
  }
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  constexpr double h = 1e-5;
  auto bdot = [&](double t) -> Vector { return (b(t + h) - b(t - h)) / (2.0 * h); };

  // y-form: tau y' = -y + phi(W y + b(t)); x-form driven by v = b + tau b'.
  auto y_rhs = [&](const Vector& y, double t) -> Vector {
    return (activate(activation, Vector(w * y + b(t))) - y) / tau;
  };
  auto x_rhs = [&](const Vector& x, double t) -> Vector {
    return (w * activate(activation, x) - x + b(t) + tau * bdot(t)) / tau;
  };
  auto advance = [&](const auto& f, const Vector& s, double t) -> Vector {
    if (method == Integrator::Euler) return s + dt * f(s, t);
    const Vector k1 = f(s, t);
    const Vector k2 = f(Vector(s + 0.5 * dt * k1), t + 0.5 * dt);
    const Vector k3 = f(Vector(s + 0.5 * dt * k2), t + 0.5 * dt);
    const Vector k4 = f(Vector(s + dt * k3), t + dt);
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  Vector y = y0;
  Vector x = w * y0 + b(0.0);
  EquivalenceReport report;
  report.steps = steps;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    y = advance(y_rhs, y, t);
    x = advance(x_rhs, x, t);
    if (!x.allFinite() || !y.allFinite()) throw DivergenceError("y_form_equivalence: diverged");
    const double dev = (x - (w * y + b(t + dt))).norm();
    report.max_deviation = std::max(report.max_deviation, dev);
    report.final_deviation = dev;
  }
  return report;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x_" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << traj.times[k];
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << traj.states[k](i);
    os << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_trajectory_csv(os, traj);
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path + ": empty trajectory file");
  const auto n = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  Trajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(row.size()) != n + 1) {
      throw std::runtime_error(path + ": ragged row");
    }
    traj.times.push_back(row[0]);
    traj.states.push_back(Eigen::Map<Vector>(row.data() + 1, n));
  }
  return traj;
}

}  // namespace contractive
