#include <gtest/gtest.h>

#include "contractive/certificates.hpp"
#include "test_support.hpp"

using namespace contractive;
using namespace contractive::testing;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Largest eigenvalue of a symmetric 2x2 in closed form (oracle).
double sym2_max(const Matrix& s) {
  const double mean = 0.5 * (s(0, 0) + s(1, 1));
  const double half = 0.5 * (s(0, 0) - s(1, 1));
  return mean + std::sqrt(half * half + s(0, 1) * s(0, 1));
}

void expect_valid(const Certificate& c, std::size_t samples = 1000) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ValidationReport r = validate_certificate(c, samples, seed);
    ASSERT_TRUE(r.valid()) << to_string(c.theorem) << " seed " << seed << " worst "
                           << r.worst_margin;
  }
  EXPECT_GT(min_eig_sym(c.metric), 0.0);
  EXPECT_GT(c.margin, 0.0);
}

Matrix sparse_random(Rng& rng, Eigen::Index n, double density, double scale) {
  Matrix w = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (rng.uniform() < density) w(i, j) = rng.uniform(-scale, scale);
    }
  }
  return w;
}

}  // namespace

TEST(CertifyAbs, RejectsRotationCounterexample) {
  const Matrix w = m2(0, -2, 2, 0);
  // oracle: |W| - I = [[-1,2],[2,-1]] has eigenvalue +1
  EXPECT_NEAR(sym2_max(abs_condition_matrix(w, 1.0)), 1.0, 1e-15);
  const CertifyResult r = certify_abs(w, 1.0);
  EXPECT_FALSE(r);
  EXPECT_NE(r.reason.find("Hurwitz"), std::string::npos);
}

TEST(CertifyAbs, ZeroMatrixGivesHalfIdentity) {
  for (int n : {1, 3, 6}) {
    const CertifyResult r = certify_abs(Matrix::Zero(n, n), 1.0);
    ASSERT_TRUE(r);
    EXPECT_LE((r.certificate->metric - 0.5 * Matrix::Identity(n, n)).norm(), 1e-14);
    expect_valid(*r.certificate);
  }
}

TEST(CertifyAbs, SmallSkewCertified) {
  const Matrix w = m2(0, 0.3, -0.3, 0);
  const Matrix a = abs_condition_matrix(w, 1.0);
  EXPECT_NEAR(sym2_max(a), -0.7, 1e-15);
  const CertifyResult r = certify_abs(w, 1.0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.certificate->theorem, Theorem::Abs);
  expect_valid(*r.certificate);
}

TEST(CertifyAbs, NegativeDiagonalIsZeroed) {
  const Matrix w = m2(-5, 0.5, 0.5, -5);
  const Matrix a = abs_condition_matrix(w, 1.0);
  EXPECT_EQ(a(0, 0), -1.0);
  EXPECT_TRUE(certify_abs(w, 1.0));
  EXPECT_THROW(certify_abs(w, 0.0), NumericsError);
  EXPECT_THROW(certify_abs(Matrix(2, 3), 1.0), NumericsError);
}

TEST(CertifyAbs, AcceptanceIffHurwitzOn500Random) {
  Rng rng(21);
  int accepted = 0;
  for (int t = 0; t < 500; ++t) {
    const Matrix w = sparse_random(rng, 8, 0.3, rng.uniform(0.1, 0.8));
    // Independent predicate: build |W|' by hand and test its eigenvalues.
    Matrix a = w.cwiseAbs();
    for (int i = 0; i < 8; ++i) {
      if (w(i, i) <= 0) a(i, i) = 0;
    }
    a -= Matrix::Identity(8, 8);
    const Eigen::EigenSolver<Matrix> es(a);
    const bool hurwitz = es.eigenvalues().real().maxCoeff() < 0.0;
    const CertifyResult r = certify_abs(w, 1.0);
    ASSERT_EQ(static_cast<bool>(r), hurwitz) << t;
    if (r) {
      ++accepted;
      ASSERT_TRUE(validate_certificate(*r.certificate, 200, t).valid());
    }
  }
  EXPECT_GT(accepted, 20);
  EXPECT_LT(accepted, 480);
}

TEST(CertifyAbs, MonotoneUnderDownscaling) {
  Rng rng(22);
  int fixtures = 0;
  while (fixtures < 100) {
    const Matrix w = sparse_random(rng, 6, 0.4, 0.8);
    if (!certify_abs(w, 1.0)) continue;
    ++fixtures;
    for (double s : {0.9, 0.5, 0.1, 1e-3}) ASSERT_TRUE(certify_abs(s * w, 1.0)) << s;
  }
}

TEST(CertifyAbs, SlopeBoundScalesCondition) {
  const Matrix w = m2(0, 0.6, 0.6, 0);
  EXPECT_TRUE(certify_abs(w, 1.0));
  EXPECT_FALSE(certify_abs(w, 2.0));  // 2 * 0.6 > 1
}

TEST(CertifySymmetric, HalfIdentity) {
  const Matrix w = 0.5 * Matrix::Identity(3, 3);
  const CertifyResult r = certify_symmetric(w, 1.0);
  ASSERT_TRUE(r);
  const Certificate& c = *r.certificate;
  ASSERT_TRUE(c.proof_metric.has_value());
  // Rebuild R from the stored proof metric M_y = gamma^2 RR and check W = R - gamma^2 RR.
  const double beta = 0.25;
  const double gamma2 = 1.0 / (2.0 * (2.0 - beta));
  const Matrix r_mat = symmetric_sqrt(*c.proof_metric / gamma2);
  EXPECT_LE((w - (r_mat - gamma2 * r_mat * r_mat)).norm(), 1e-8 * w.norm());
  EXPECT_LE((c.metric * *c.proof_metric - Matrix::Identity(3, 3)).norm(), 1e-12);
  expect_valid(c);
}

TEST(CertifySymmetric, BoundaryAndAsymmetry) {
  EXPECT_FALSE(certify_symmetric(Matrix::Identity(2, 2), 1.0));
  EXPECT_TRUE(certify_symmetric(m2(0, 0.4, 0.4, 0), 1.0));
  EXPECT_THROW(certify_symmetric(m2(0, 0.4, 0.3, 0), 1.0), NumericsError);
}

TEST(CertifySymmetric, VeryNegativeSpectrum) {
  // lambda_max(gW) = -9: the unclamped rate split would make gamma^2 negative.
  const CertifyResult r = certify_symmetric(-9.0 * Matrix::Identity(2, 2), 1.0);
  ASSERT_TRUE(r);
  expect_valid(*r.certificate);
}

TEST(CertifyPQP, DiagonalExamples) {
  const Certificate id = certify_pqp(DiagonalMatrix(Vector::Ones(3)), Matrix::Identity(3, 3),
                                     DiagonalMatrix(Vector::Ones(3)));
  EXPECT_EQ(id.W, -Matrix::Identity(3, 3));
  EXPECT_LE((id.metric - Matrix::Identity(3, 3)).norm(), 1e-15);

  const Certificate c = certify_pqp(DiagonalMatrix(Eigen::Vector2d(2, 1)), Matrix::Identity(2, 2),
                                    DiagonalMatrix(Eigen::Vector2d(1, 3)));
  EXPECT_EQ(c.W, m2(-2, 0, 0, -3));
  EXPECT_LE((c.metric - m2(0.25, 0, 0, 1)).norm(), 1e-15);
}

TEST(CertifyPQP, RandomPositiveInputsValidate) {
  Rng rng(31);
  for (int t = 0; t < 5; ++t) {
    Vector p1(6), p2(6);
    for (int i = 0; i < 6; ++i) {
      p1(i) = rng.uniform(0.2, 3.0);
      p2(i) = rng.uniform(0.2, 3.0);
    }
    const Certificate c = certify_pqp(DiagonalMatrix(p1), random_spd(rng, 6), DiagonalMatrix(p2));
    const ValidationReport v = validate_certificate(c, 50, t);
    EXPECT_TRUE(v.valid());
  }
  EXPECT_THROW(certify_pqp(DiagonalMatrix(Vector::Ones(2)), -Matrix::Identity(2, 2),
                           DiagonalMatrix(Vector::Ones(2))),
               NumericsError);
  EXPECT_THROW(certify_pqp(DiagonalMatrix(Eigen::Vector2d(1, 0)), Matrix::Identity(2, 2),
                           DiagonalMatrix(Vector::Ones(2))),
               NumericsError);
}

TEST(CertifyTriangular, Examples) {
  const CertifyResult diag = certify_triangular(0.5 * Matrix::Identity(3, 3), 1.0);
  ASSERT_TRUE(diag);
  expect_valid(*diag.certificate);

  const Matrix w = m2(0.5, 0, 10, 0.5);
  const CertifyResult r = certify_triangular(w, 1.0);
  ASSERT_TRUE(r);
  // oracle: at eps = 0.01, sym(Gamma(W - I)Gamma^-1) = [[-0.5, 0.05], [0.05, -0.5]]
  const Matrix gamma = m2(1, 0, 0, 0.01);
  const Matrix s = sym_part(gamma * (w - Matrix::Identity(2, 2)) * gamma.inverse());
  EXPECT_NEAR(sym2_max(s), -0.45, 1e-12);
  EXPECT_LE(r.certificate->metric(1, 1), 0.01 * 0.01 + 1e-18);
  expect_valid(*r.certificate);

  EXPECT_FALSE(certify_triangular(m2(1.5, 0, 0, 0), 1.0));
  EXPECT_THROW(certify_triangular(m2(0, 1, 1, 0), 1.0), NumericsError);
  EXPECT_THROW(certify_triangular(w, 1.0, 1.5), NumericsError);
}

TEST(CertifyTriangular, UpperTriangular) {
  const CertifyResult r = certify_triangular(m2(0.2, -7, 0, 0.9), 1.0);
  ASSERT_TRUE(r);
  expect_valid(*r.certificate);
}

TEST(CertifySVD, Examples) {
  ASSERT_TRUE(certify_svd_condition(0.5 * Matrix::Identity(2, 2), 1.0,
                                    DiagonalMatrix(Vector::Ones(2))));
  const Matrix rot = m2(0, -1, 1, 0);
  EXPECT_FALSE(certify_svd_condition(rot, 1.0, DiagonalMatrix(Vector::Ones(2))));
  const Matrix w = m2(0, 2, 0, 0);
  EXPECT_FALSE(certify_svd_condition(w, 1.0, DiagonalMatrix(Eigen::Vector2d(4, 1))));
  const CertifyResult ok = certify_svd_condition(w, 1.0, DiagonalMatrix(Eigen::Vector2d(1, 8)));
  ASSERT_TRUE(ok);
  expect_valid(*ok.certificate);
}

TEST(CertifySVD, ScaleInvariantInP) {
  const Matrix w = 0.9 * Matrix::Identity(3, 3);
  EXPECT_TRUE(certify_svd_condition(w, 1.0, DiagonalMatrix(Vector::Constant(3, 1e-8))));
  EXPECT_TRUE(certify_svd_condition(w, 1.0, DiagonalMatrix(Vector::Constant(3, 1e8))));
}

TEST(ConstantMetric, TheoremSevenCounterexamples) {
  DSet d1;
  d1.vertices = {DiagonalMatrix(Eigen::Vector2d(1, 0)), DiagonalMatrix(Eigen::Vector2d(0, 1))};
  const FeasibilityResult r1 = constant_metric_feasible(m2(0, -2, 2, 0), 1.0, d1);
  EXPECT_FALSE(r1.feasible);
  EXPECT_GT(r1.candidates_evaluated, 1000u);

  DSet d2;
  d2.vertices = {DiagonalMatrix(Eigen::Vector2d(1, 0.5)), DiagonalMatrix(Eigen::Vector2d(0.5, 1))};
  EXPECT_FALSE(constant_metric_feasible(m2(0, -4, 4, 0), 1.0, d2).feasible);

  // Below the c = 2 threshold the identity works.
  EXPECT_TRUE(constant_metric_feasible(m2(0, -1.5, 1.5, 0), 1.0, d1).feasible);
}

TEST(ConstantMetric, NegativeIdentityFeasibleWithIdentity) {
  for (int n : {1, 2, 3, 4}) {
    const FeasibilityResult r =
        constant_metric_feasible(-Matrix::Identity(n, n), 1.0, DSet::box_vertices(n, 1.0));
    ASSERT_TRUE(r.feasible);
    EXPECT_LE((r.metric - Matrix::Identity(n, n)).norm(), 1e-14);
  }
  EXPECT_THROW(constant_metric_feasible(Matrix::Zero(5, 5), 1.0, DSet::box_vertices(5, 1.0)),
               NumericsError);
}

TEST(ConstantMetric, FindsNonDiagonalMetricWithoutSeed) {
  // Identity fails here (sym(WD - I) has eigenvalue > 0 at D = diag(1, 0)),
  // but a diagonal rescaling works.
  const Matrix w = m2(0, 3.5, 0.1, 0);
  DSet d;
  d.vertices = DSet::box_vertices(2, 1.0).vertices;
  EXPECT_GT(differential_margin(Matrix::Identity(2, 2), w, Eigen::Vector2d(0, 1)), 0.0);
  const FeasibilityResult r = constant_metric_feasible(w, 1.0, d);
  ASSERT_TRUE(r.feasible);
  Certificate c;
  c.theorem = Theorem::Search;
  c.W = w;
  c.metric = r.metric;
  EXPECT_TRUE(validate_certificate(c, 500, 1).valid());
}

TEST(ConstantMetric, TheoremOneCertificatesAreWitnesses) {
  Rng rng(41);
  int fixtures = 0;
  while (fixtures < 10) {
    const Matrix w = sparse_random(rng, 4, 0.6, 1.0);
    const CertifyResult c = certify_abs(w, 1.0);
    if (!c) continue;
    ++fixtures;
    DSet d;
    for (int k = 0; k < 16; ++k) {
      Vector v(4);
      for (int i = 0; i < 4; ++i) v(i) = rng.uniform();
      d.vertices.emplace_back(v);
    }
    const FeasibilityResult r = constant_metric_feasible(w, 1.0, d, 20, {c.certificate->metric});
    EXPECT_TRUE(r.feasible);
  }
}

TEST(Validator, TheoremOneProofCounterexample) {
  Certificate c;
  c.W = m2(-9, 2.5, 2.5, 0);
  c.metric = Matrix::Identity(2, 2);
  const ValidationReport r = validate_certificate(c, 100, 0);
  EXPECT_FALSE(r.valid());
  EXPECT_NEAR(r.worst_margin, 0.25, 1e-9);
  EXPECT_EQ(r.worst_d, Eigen::Vector2d(0, 1));
  EXPECT_NEAR(differential_margin(c.metric, c.W, Eigen::Vector2d(0, 1)), 0.25, 1e-12);
}

TEST(Validator, ZeroWeights) {
  Certificate c;
  c.W = Matrix::Zero(3, 3);
  c.metric = Matrix::Identity(3, 3);
  const ValidationReport r = validate_certificate(c, 100, 0);
  EXPECT_TRUE(r.valid());
  EXPECT_EQ(r.worst_margin, -1.0);
  EXPECT_EQ(r.samples_checked, 100u);
  EXPECT_EQ(r.vertices_checked, 8u);
}

TEST(Validator, RejectsMalformed) {
  Certificate c;
  c.W = Matrix::Zero(2, 2);
  c.metric = m2(1, 2, 0, 1);
  EXPECT_THROW(validate_certificate(c, 10, 0), NumericsError);
}

TEST(Theorem, NamesRoundTrip) {
  for (Theorem t : {Theorem::Abs, Theorem::Symmetric, Theorem::PQP, Theorem::Triangular,
                    Theorem::SVDCond, Theorem::Search}) {
    EXPECT_EQ(theorem_from_string(to_string(t)), t);
  }
  EXPECT_THROW(theorem_from_string("nope"), std::invalid_argument);
}
