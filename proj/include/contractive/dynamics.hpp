#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "contractive/numerics.hpp"

namespace contractive {

enum class Activation { ReLU, Tanh };
enum class Integrator { Euler, RK4 };

/// phi(x). ReLU uses slope 0 at exactly 0.
double activate(Activation a, double x);
double activate_slope(Activation a, double x);
Vector activate(Activation a, const Vector& x);
Vector activate_slope(Activation a, const Vector& x);

/// tau x' = -x + W phi(x) + L x + u
struct RecurrentSystem {
  Matrix W;
  Matrix L;
  double tau = 1.0;
  Activation activation = Activation::ReLU;

  [[nodiscard]] Eigen::Index dim() const { return W.rows(); }
  [[nodiscard]] Vector rhs(const Vector& x, const Vector& u) const;
  void validate() const;

  static RecurrentSystem single(Matrix w, double tau = 1.0,
                                Activation activation = Activation::ReLU);
};

/// Zero-order-hold input: values[k] drives the step from t_k to t_{k+1}.
struct InputSequence {
  std::vector<Vector> values;
  double dt = 0.01;

  [[nodiscard]] std::size_t steps() const { return values.size(); }
  void validate(Eigen::Index dim) const;

  static InputSequence constant(const Vector& u, std::size_t steps, double dt);
  static InputSequence sampled(const std::function<Vector(double)>& u, std::size_t steps,
                               double dt);
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
};

/// Raised when a state stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Vector step(const Vector& x, const Vector& u, const RecurrentSystem& sys, double dt,
            Integrator method = Integrator::Euler);

Trajectory simulate(const Vector& x0, const InputSequence& inputs, const RecurrentSystem& sys,
                    Integrator method = Integrator::Euler);

struct RateFit {
  double rate = 0.0;  ///< -slope of log distance vs t
  double r2 = 0.0;
  std::size_t points = 0;
  double window_start = 0.0;
  double window_end = 0.0;
};

/// Metric distance sqrt(d^T M d) between two trajectories on the same grid.
std::vector<double> metric_distance(const Trajectory& a, const Trajectory& b, const Matrix& metric);

/// Least-squares fit of log distance against time, skipping t < skip and
/// stopping once the distance falls below `floor`.
RateFit contraction_rate(const Trajectory& a, const Trajectory& b, const Matrix& metric,
                         double skip = 1.0, double floor = 1e-12);

struct Theorem6Report {
  bool ran = false;
  std::string refusal;
  /// lambda_max of (gW - I)P + P(gW^T - I) + cP; must be <= 0 for the monitor to run.
  double first_condition = 0.0;
  std::size_t checked = 0;
  double fraction_satisfied = 0.0;
  /// max over (t, i) of D'_ii - (c/g) D_ii + beta D_ii; <= 0 where the condition holds.
  double worst_violation = 0.0;
};

/// Runtime check of the time-varying metric condition D' - (c/g) D <= -beta D
/// along a tanh trajectory of a single RNN (L = 0). D' by finite differences.
Theorem6Report monitor_theorem6(const Trajectory& traj, const RecurrentSystem& sys,
                                const DiagonalMatrix& p, double c, double g, double beta);

struct EquivalenceReport {
  double max_deviation = 0.0;
  double final_deviation = 0.0;
  std::size_t steps = 0;
};

/// Simulates tau y' = -y + phi(W y + b) and tau x' = -x + W phi(x) + b + tau b'
/// from x0 = W y0 + b(0) and reports max_t |x(t) - (W y(t) + b(t))|.
EquivalenceReport y_form_equivalence(const Matrix& w, const std::function<Vector(double)>& b,
                                     const Vector& y0, double dt, double horizon,
                                     double tau = 1.0, Activation activation = Activation::ReLU,
                                     Integrator method = Integrator::Euler);

/// CSV with header t,x_1..x_n and round-trip precision.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);

}  // namespace contractive
