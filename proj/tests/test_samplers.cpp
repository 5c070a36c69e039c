#include <gtest/gtest.h>

#include <map>

#include "contractive/samplers.hpp"
#include "test_support.hpp"

using namespace contractive;
using namespace contractive::testing;

namespace {

// Brute force: redraw with the documented stream order and test Hurwitz-ness
// of |W| - I with a general eigensolver.
// Same draw order as the sampler; the exact-count shuffle is kept as a sparse
// swap map instead of a full index array.
double brute_force_rate(Eigen::Index n, double density, double scalar, std::size_t trials,
                        std::uint64_t seed, SparsePattern pattern) {
  Rng rng(seed);
  std::size_t ok = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Matrix a = Matrix::Zero(n, n);
    if (pattern == SparsePattern::Bernoulli) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const double keep = rng.uniform();
          const double v = rng.uniform();
          if (i != j && keep < density) a(i, j) = std::abs((2.0 * v - 1.0) * scalar);
        }
      }
    } else {
      const std::uint64_t cells = static_cast<std::uint64_t>(n * n);
      const auto k = static_cast<std::uint64_t>(std::llround(density * static_cast<double>(cells)));
      std::map<std::uint64_t, std::uint64_t> swapped;
      auto at = [&](std::uint64_t i) { return swapped.count(i) ? swapped[i] : i; };
      for (std::uint64_t i = 0; i < k; ++i) {
        const std::uint64_t j = i + rng.below(cells - i);
        const std::uint64_t pi = at(i), pj = at(j);
        swapped[i] = pj;
        swapped[j] = pi;
        const double v = rng.uniform();
        const auto r = static_cast<Eigen::Index>(pj / n), c = static_cast<Eigen::Index>(pj % n);
        EXPECT_EQ(a(r, c), 0.0);
        if (r != c) a(r, c) = std::abs((2.0 * v - 1.0) * scalar);
      }
    }
    a -= Matrix::Identity(n, n);
    const Eigen::EigenSolver<Matrix> es(a, false);
    if (es.eigenvalues().real().maxCoeff() < 0.0) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(trials);
}

}  // namespace

TEST(SparseSampler, DeterministicAndCertified) {
  SparseInitConfig cfg{16, 0.4, 0.4, 1.0, 100000, 5};
  const SparseSample a = sample_sparse_subnet(cfg);
  const SparseSample b = sample_sparse_subnet(cfg);
  EXPECT_EQ(a.W, b.W);
  EXPECT_EQ(a.tries, b.tries);
  EXPECT_GE(a.tries, 1u);
  EXPECT_EQ(a.W.diagonal().norm(), 0.0);
  EXPECT_EQ(a.cert.theorem, Theorem::Abs);
  EXPECT_TRUE(validate_certificate(a.cert, 1000, 0).valid());
  cfg.seed = 6;
  EXPECT_NE(sample_sparse_subnet(cfg).W, a.W);
}

TEST(SparseSampler, EntriesRespectDensityAndScale) {
  SparseInitConfig cfg{32, 0.05, 10.0, 0.2, 100000, 1};
  const SparseSample s = sample_sparse_subnet(cfg);
  EXPECT_LE(s.W.cwiseAbs().maxCoeff(), 10.0 * 0.2);
  // Post-scaling keeps the certificate.
  EXPECT_TRUE(validate_certificate(s.cert, 200, 1).valid());
}

TEST(SparseSampler, AcceptanceRateMatchesBruteForce) {
  for (const auto& [n, dens, sc] : std::vector<std::tuple<int, double, double>>{
           {8, 0.3, 1.0}, {16, 0.4, 0.4}, {10, 0.2, 2.0}}) {
    for (SparsePattern pat : {SparsePattern::ExactCount, SparsePattern::Bernoulli}) {
      const double rate = estimate_acceptance_rate(n, dens, sc, 400, 3, pat);
      EXPECT_DOUBLE_EQ(rate, brute_force_rate(n, dens, sc, 400, 3, pat)) << n;
    }
  }
  EXPECT_EQ(estimate_acceptance_rate(8, 0.0, 5.0, 50, 1), 1.0);
}

TEST(SparseSampler, ExactCountPlacesRoundedNonzeros) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const Matrix w = draw_sparse_candidate(rng, 10, 0.33, 2.0);
    // 33 off-grid slots, minus whichever landed on the diagonal
    const auto nnz = (w.array() != 0.0).count();
    EXPECT_LE(nnz, 33);
    EXPECT_GE(nnz, 23);
    EXPECT_LE(w.cwiseAbs().maxCoeff(), 2.0);
  }
  EXPECT_EQ(sparse_pattern_from_string("bernoulli"), SparsePattern::Bernoulli);
  EXPECT_EQ(to_string(SparsePattern::ExactCount), "exact");
  EXPECT_THROW(sparse_pattern_from_string("dense"), std::invalid_argument);
}

TEST(SparseSampler, ExhaustionReportsTries) {
  SparseInitConfig cfg{8, 1.0, 50.0, 1.0, 25, 0};
  try {
    sample_sparse_subnet(cfg);
    FAIL() << "expected SamplingExhausted";
  } catch (const SamplingExhausted& e) {
    EXPECT_EQ(e.tries, 25u);
    EXPECT_NE(std::string(e.what()).find("25 tries"), std::string::npos);
  }
  cfg.post_scalar = 1.5;
  EXPECT_THROW(sample_sparse_subnet(cfg), std::invalid_argument);
}

TEST(SVDSubnet, ZeroParamsGiveScaledIdentityMetric) {
  const SVDSubnetParams p = SVDSubnetParams::zeros(4);
  const SVDSubnet s = build_svd_subnet(p);
  EXPECT_LE((s.U - Matrix::Identity(4, 4)).norm(), 1e-15);
  const double sigma = (1.0 - svd_constants::kSigmaEps) * 0.5;
  EXPECT_LE((s.W - sigma * Matrix::Identity(4, 4)).norm(), 1e-14);
  EXPECT_NEAR(s.metric(0, 0), svd_constants::kPhiEps * svd_constants::kPhiEps, 1e-20);
  const Certificate c = certify_svd_subnet(p, s);
  EXPECT_TRUE(validate_certificate(c, 500, 0).valid());
}

TEST(SVDSubnet, RandomParamsAlwaysCertify) {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const double g = t % 3 == 0 ? 2.0 : 1.0;
    SVDSubnetParams p = SVDSubnetParams::random(6, rng, g);
    for (Eigen::Index i = 0; i < 6; ++i) p.sigma_raw(i) = 8.0 * rng.normal();
    const SVDSubnet s = build_svd_subnet(p);
    // Singular values of Phi W Phi^-1 are sigma < 1/g.
    const Matrix core = s.phi.asDiagonal() * s.W * s.phi.cwiseInverse().asDiagonal();
    const Eigen::JacobiSVD<Matrix> svd(core);
    EXPECT_LT(svd.singularValues().maxCoeff(), 1.0 / g);
    EXPECT_LE((s.U.transpose() * s.U - Matrix::Identity(6, 6)).norm(), 1e-12);
    const Certificate c = certify_svd_subnet(p, s);
    EXPECT_TRUE(validate_certificate(c, 200, t).valid());
  }
}

TEST(SVDSubnet, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (Eigen::Index n : {2, 3, 5}) {
    const SVDSubnetParams p = SVDSubnetParams::random(n, rng);
    const Matrix gw = random_matrix(rng, n, n);
    const Matrix gm = random_matrix(rng, n, n);
    auto f = [&](const Vector& flat) {
      const SVDSubnet s = build_svd_subnet(SVDSubnetParams::unflatten(flat, n, 1.0));
      return (gw.array() * s.W.array()).sum() + (gm.array() * s.metric.array()).sum();
    };
    const SVDSubnet built = build_svd_subnet(p);
    const Vector grad = svd_subnet_gradient(p, built, gw, gm);
    const Vector flat = p.flatten();
    for (Eigen::Index k = 0; k < flat.size(); ++k) {
      const double fd = central_difference(f, flat, k, 1e-6);
      EXPECT_LT(relative_error(grad(k), fd, 1e-6), 1e-5) << "n=" << n << " k=" << k;
    }
  }
}

TEST(SVDSubnet, FlattenRoundTrip) {
  Rng rng(14);
  const SVDSubnetParams p = SVDSubnetParams::random(5, rng, 1.5);
  const SVDSubnetParams q = SVDSubnetParams::unflatten(p.flatten(), 5, 1.5);
  EXPECT_EQ(q.flatten(), p.flatten());
  EXPECT_EQ(p.flat_size(), 5 * 2 + 5 * 4);
  EXPECT_THROW(SVDSubnetParams::unflatten(Vector(3), 5, 1.0), std::invalid_argument);
}
