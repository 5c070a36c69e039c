#include "contractive/samplers.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace contractive {

namespace {

std::string exhausted_message(std::size_t tries, const SparseInitConfig& cfg) {
  std::ostringstream os;
  os << "sample_sparse_subnet: no candidate passed after " << tries << " tries (n=" << cfg.n
     << ", density=" << cfg.density << ", pre_scalar=" << cfg.pre_scalar
     << "); lower the density or scalar";
  return os.str();
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string_view to_string(SparsePattern p) {
  return p == SparsePattern::ExactCount ? "exact" : "bernoulli";
}

SparsePattern sparse_pattern_from_string(std::string_view s) {
  if (s == "exact") return SparsePattern::ExactCount;
  if (s == "bernoulli") return SparsePattern::Bernoulli;
  throw std::invalid_argument("unknown sparsity pattern '" + std::string(s) + "'");
}

void SparseInitConfig::validate() const {
  if (n < 1) throw std::invalid_argument("SparseInitConfig: n must be >= 1");
  if (!(density >= 0.0 && density <= 1.0)) {
    throw std::invalid_argument("SparseInitConfig: density must be in [0, 1]");
  }
  if (!(pre_scalar >= 0.0) || !std::isfinite(pre_scalar)) {
    throw std::invalid_argument("SparseInitConfig: pre_scalar must be >= 0");
  }
  if (!(post_scalar > 0.0 && post_scalar <= 1.0)) {
    throw std::invalid_argument("SparseInitConfig: post_scalar must be in (0, 1]");
  }
  if (max_tries < 1) throw std::invalid_argument("SparseInitConfig: max_tries must be >= 1");
}

SamplingExhausted::SamplingExhausted(std::size_t t, const SparseInitConfig& cfg)
    : std::runtime_error(exhausted_message(t, cfg)), tries(t) {}

Matrix draw_sparse_candidate(Rng& rng, Eigen::Index n, double density, double scalar,
                             SparsePattern pattern) {
  Matrix w = Matrix::Zero(n, n);
  if (pattern == SparsePattern::Bernoulli) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double keep = rng.uniform();
        const double value = rng.uniform();
        if (keep < density) w(i, j) = (2.0 * value - 1.0) * scalar;
      }
    }
  } else {
    const auto cells = static_cast<std::size_t>(n * n);
    const auto k = std::min(cells, static_cast<std::size_t>(std::llround(density * cells)));
    std::vector<std::size_t> pos(cells);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
      std::swap(pos[i], pos[j]);
      const auto r = static_cast<Eigen::Index>(pos[i] / static_cast<std::size_t>(n));
      const auto c = static_cast<Eigen::Index>(pos[i] % static_cast<std::size_t>(n));
      w(r, c) = (2.0 * rng.uniform() - 1.0) * scalar;
    }
  }
  w.diagonal().setZero();
  return w;
}

SparseSample sample_sparse_subnet(const SparseInitConfig& cfg, Rng& rng) {
  cfg.validate();
  for (std::size_t t = 1; t <= cfg.max_tries; ++t) {
    const Matrix candidate = draw_sparse_candidate(rng, cfg.n, cfg.density, cfg.pre_scalar, cfg.pattern);
    if (!satisfies_abs_condition(candidate, 1.0)) continue;
    SparseSample out;
    out.W = cfg.post_scalar * candidate;
    auto result = certify_abs(out.W, 1.0);
    if (!result) {
      throw CertificationError("sample_sparse_subnet: scaled candidate lost its certificate: " +
                               result.reason);
    }
    out.cert = std::move(*result.certificate);
    out.tries = t;
    return out;
  }
  throw SamplingExhausted(cfg.max_tries, cfg);
}

SparseSample sample_sparse_subnet(const SparseInitConfig& cfg) {
  Rng rng(cfg.seed);
  return sample_sparse_subnet(cfg, rng);
}

double estimate_acceptance_rate(Eigen::Index n, double density, double scalar, std::size_t trials,
                                std::uint64_t rng_seed, SparsePattern pattern) {
  if (trials < 1) throw std::invalid_argument("estimate_acceptance_rate: trials must be >= 1");
  Rng rng(rng_seed);
  std::size_t accepted = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    if (satisfies_abs_condition(draw_sparse_candidate(rng, n, density, scalar, pattern), 1.0)) ++accepted;
  }
  return static_cast<double>(accepted) / static_cast<double>(trials);
}

void SVDSubnetParams::validate() const {
  const Eigen::Index m = n();
  if (m < 1) throw std::invalid_argument("SVDSubnetParams: empty");
  if (skew_u.size() != m * (m - 1) / 2 || skew_v.size() != m * (m - 1) / 2 ||
      sigma_raw.size() != m) {
    throw std::invalid_argument("SVDSubnetParams: inconsistent sizes");
  }
  if (!(g > 0.0)) throw std::invalid_argument("SVDSubnetParams: g must be positive");
  if (!phi_raw.allFinite() || !skew_u.allFinite() || !skew_v.allFinite() ||
      !sigma_raw.allFinite()) {
    throw std::invalid_argument("SVDSubnetParams: non-finite parameters");
  }
}

SVDSubnetParams SVDSubnetParams::zeros(Eigen::Index n, double g) {
  return SVDSubnetParams{Vector::Zero(n), Vector::Zero(n * (n - 1) / 2),
                         Vector::Zero(n * (n - 1) / 2), Vector::Zero(n), g};
}

SVDSubnetParams SVDSubnetParams::random(Eigen::Index n, Rng& rng, double g) {
  SVDSubnetParams p = zeros(n, g);
  for (Eigen::Index i = 0; i < n; ++i) p.phi_raw(i) = 1.0 + 0.1 * rng.normal();
  for (Eigen::Index i = 0; i < p.skew_u.size(); ++i) {
    p.skew_u(i) = 0.5 * rng.normal();
    p.skew_v(i) = 0.5 * rng.normal();
  }
  for (Eigen::Index i = 0; i < n; ++i) p.sigma_raw(i) = rng.normal();
  return p;
}

Vector SVDSubnetParams::flatten() const {
  Vector flat(flat_size());
  flat << phi_raw, skew_u, skew_v, sigma_raw;
  return flat;
}

SVDSubnetParams SVDSubnetParams::unflatten(const Vector& flat, Eigen::Index n, double g) {
  SVDSubnetParams p = zeros(n, g);
  if (flat.size() != p.flat_size()) throw std::invalid_argument("SVDSubnetParams: bad flat size");
  const Eigen::Index k = n * (n - 1) / 2;
  p.phi_raw = flat.segment(0, n);
  p.skew_u = flat.segment(n, k);
  p.skew_v = flat.segment(n + k, k);
  p.sigma_raw = flat.segment(n + 2 * k, n);
  return p;
}

SVDSubnet build_svd_subnet(const SVDSubnetParams& params) {
  params.validate();
  const Eigen::Index n = params.n();
  SVDSubnet s;
  s.skew_u = skew_from_lower(params.skew_u, n);
  s.skew_v = skew_from_lower(params.skew_v, n);
  s.U = matrix_exp(s.skew_u);
  s.V = matrix_exp(s.skew_v);
  const double cap = (1.0 - svd_constants::kSigmaEps) / params.g;
  s.sigma = params.sigma_raw.unaryExpr([cap](double r) { return cap * logistic(r); });
  s.phi = params.phi_raw.array().square() + svd_constants::kPhiEps;
  const Matrix core = s.U * s.sigma.asDiagonal() * s.V.transpose();
  s.W = s.phi.cwiseInverse().asDiagonal() * core * s.phi.asDiagonal();
  s.metric = s.phi.cwiseAbs2().asDiagonal();
  return s;
}

Vector svd_subnet_gradient(const SVDSubnetParams& params, const SVDSubnet& built,
                           const Matrix& grad_w, const Matrix& grad_metric) {
  const Eigen::Index n = params.n();
  const Vector& phi = built.phi;
  // W_ij = A_ij phi_j / phi_i.
  const Matrix grad_a = phi.cwiseInverse().asDiagonal() * grad_w * phi.asDiagonal();
  const Matrix gw_w = grad_w.cwiseProduct(built.W);
  Vector grad_phi = (gw_w.colwise().sum().transpose() - gw_w.rowwise().sum()).cwiseQuotient(phi);
  grad_phi += 2.0 * phi.cwiseProduct(grad_metric.diagonal());

  const Matrix grad_u = grad_a * built.V * built.sigma.asDiagonal();
  const Matrix grad_v = grad_a.transpose() * built.U * built.sigma.asDiagonal();
  const Vector grad_sigma = (built.U.transpose() * grad_a * built.V).diagonal();

  const Matrix grad_ku = matrix_exp_frechet(built.skew_u.transpose(), grad_u);
  const Matrix grad_kv = matrix_exp_frechet(built.skew_v.transpose(), grad_v);

  const double cap = (1.0 - svd_constants::kSigmaEps) / params.g;
  Vector grad_sigma_raw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = logistic(params.sigma_raw(i));
    grad_sigma_raw(i) = grad_sigma(i) * cap * s * (1.0 - s);
  }
  Vector flat(params.flat_size());
  flat << grad_phi.cwiseProduct(2.0 * params.phi_raw), skew_lower_gradient(grad_ku),
      skew_lower_gradient(grad_kv), grad_sigma_raw;
  return flat;
}

Certificate certify_svd_subnet(const SVDSubnetParams& params, const SVDSubnet& built) {
  auto result = certify_svd_condition(built.W, params.g, DiagonalMatrix(built.metric.diagonal()));
  if (!result) {
    throw CertificationError("certify_svd_subnet: parameterization failed Theorem 5 check: " +
                             result.reason);
  }
  result.certificate->notes = "SVD parameterization, metric = Phi^2";
  return std::move(*result.certificate);
}

}  // namespace contractive
