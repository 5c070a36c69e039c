#include <gtest/gtest.h>

#include "contractive/composition.hpp"
#include "contractive/samplers.hpp"
#include "contractive/training.hpp"
#include "test_support.hpp"

using namespace contractive;
using namespace contractive::testing;

namespace {

std::vector<SubnetworkSpec> certified_subnets(const std::vector<Eigen::Index>& sizes,
                                              std::uint64_t seed) {
  std::vector<SubnetworkSpec> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    SparseInitConfig cfg{sizes[k], 0.4, 0.4, 1.0, 100000, seed + k};
    out.push_back(SubnetworkSpec::from_certificate(sample_sparse_subnet(cfg).cert));
  }
  return out;
}

// Independent check of M~L + L^T M~ = 0, block by block.
double skew_residual(const Matrix& l, const std::vector<SubnetworkSpec>& subs) {
  const auto off = block_offsets(subs);
  double worst = 0.0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    for (std::size_t j = 0; j < subs.size(); ++j) {
      const Matrix lij = l.block(off[i], off[j], subs[i].size(), subs[j].size());
      const Matrix lji = l.block(off[j], off[i], subs[j].size(), subs[i].size());
      const Matrix r = subs[i].metric * lij + lji.transpose() * subs[j].metric;
      worst = std::max(worst, r.norm() / (1.0 + (subs[i].metric * lij).norm()));
    }
  }
  return worst;
}

}  // namespace

TEST(Composition, ParamCountFormula) {
  EXPECT_EQ(param_count(16, 32, 1, 10), 129034u);
  EXPECT_EQ(param_count(16, 32, 3, 10), 130058u);
  // Direct count: lower blocks, input, output, biases.
  std::uint64_t direct = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < i; ++j) direct += 16 * 16;
  }
  direct += 28 * 64 + 64 * 10 + 64 + 10;
  EXPECT_EQ(param_count(4, 16, 28, 10), direct);
  const ParamLayout layout =
      make_layout(std::vector<Eigen::Index>(16, 32), InterconnectionMask::all_pairs(16),
                  FeedbackMode::LowerTriangular, 1, 10, false);
  EXPECT_EQ(static_cast<std::uint64_t>(layout.total), 129034u);
}

TEST(Composition, LowerModeSatisfiesSkewCondition) {
  Rng rng(1);
  const auto subs = certified_subnets({3, 5, 4}, 10);
  const Matrix b = random_matrix(rng, 12, 12);
  const Matrix l = build_L(b, subs, InterconnectionMask::all_pairs(3));
  EXPECT_LT(skew_residual(l, subs), 1e-12);
  EXPECT_TRUE(verify_interconnection(l, block_metric(subs)).ok);
  // Upper B blocks are ignored; lower blocks pass through.
  const auto off = block_offsets(subs);
  EXPECT_EQ(Matrix(l.block(off[2], off[0], 4, 3)), Matrix(b.block(off[2], off[0], 4, 3)));
  EXPECT_EQ(l.block(0, 0, 3, 3).norm(), 0.0);
  // Lower-mode result depends only on the strictly lower blocks.
  Matrix b2 = b;
  b2.block(off[0], off[1], 3, 5).setRandom();
  EXPECT_EQ(build_L(b2, subs, InterconnectionMask::all_pairs(3)), l);
}

TEST(Composition, AllBlocksAndControlModes) {
  Rng rng(2);
  const auto subs = certified_subnets({4, 4, 4, 4}, 20);
  const Matrix b = random_matrix(rng, 16, 16);
  const auto mask = InterconnectionMask::all_pairs(4);
  const Matrix l_all = build_L(b, subs, mask, FeedbackMode::AllBlocks);
  EXPECT_LT(skew_residual(l_all, subs), 1e-12);
  const Matrix l_ctl = build_L(b, subs, mask, FeedbackMode::Control);
  Matrix expect = b;
  for (int i = 0; i < 4; ++i) expect.block(4 * i, 4 * i, 4, 4).setZero();
  EXPECT_EQ(l_ctl, expect);
  EXPECT_FALSE(verify_interconnection(l_ctl, block_metric(subs)).ok);
}

TEST(Composition, ScaledBlockMetricStillValid) {
  Rng rng(3);
  const auto subs = certified_subnets({3, 3}, 30);
  const Matrix l = build_L(random_matrix(rng, 6, 6), subs, InterconnectionMask::all_pairs(2));
  // Uniform rescaling of all blocks keeps the skew condition; non-uniform does not.
  EXPECT_TRUE(verify_interconnection(l, block_metric(subs, {2.5, 2.5})).ok);
  EXPECT_FALSE(verify_interconnection(l, block_metric(subs, {1.0, 7.0})).ok);
}

TEST(Composition, HierarchicalIsDissipativeWithWeights) {
  Rng rng(4);
  const auto subs = certified_subnets({3, 3, 3}, 40);
  std::map<BlockIndex, Matrix> blocks{{{1, 0}, random_matrix(rng, 3, 3)},
                                      {{2, 1}, random_matrix(rng, 3, 3)}};
  const Matrix l = build_hierarchical_L(blocks, subs);
  EXPECT_EQ(l.block(0, 3, 3, 3).norm(), 0.0);
  // General-C mode: with geometrically shrinking weights the coupling term
  // is dominated by the subnet margins.
  ComposedNetwork net = ComposedNetwork::compose(
      subs, Matrix::Zero(9, 9), InterconnectionMask{}, FeedbackMode::LowerTriangular,
      Matrix::Zero(9, 1), Vector::Zero(9), Matrix::Zero(1, 9), Vector::Zero(1), 1.0,
      {1.0, 1e-4, 1e-8});
  net.L = l;
  for (int t = 0; t < 50; ++t) {
    Vector d(9);
    for (int i = 0; i < 9; ++i) d(i) = rng.uniform();
    EXPECT_LT(composed_jacobian_margin(net, d), 0.0);
  }
  EXPECT_THROW(build_hierarchical_L({{{0, 1}, Matrix::Zero(3, 3)}}, subs), NumericsError);
}

TEST(Composition, ComposedJacobianBoundedBySubnetMargins) {
  Rng rng(5);
  const auto subs = certified_subnets({4, 6, 5}, 50);
  const auto net = ComposedNetwork::compose(
      subs, 5.0 * random_matrix(rng, 15, 15), InterconnectionMask::all_pairs(3),
      FeedbackMode::LowerTriangular, random_matrix(rng, 15, 2), Vector::Zero(15),
      random_matrix(rng, 3, 15), Vector::Zero(3));
  const auto off = block_offsets(subs);
  for (int t = 0; t < 100; ++t) {
    Vector d(15);
    for (int i = 0; i < 15; ++i) d(i) = rng.uniform();
    double worst_sub = -1e300;
    for (std::size_t k = 0; k < subs.size(); ++k) {
      worst_sub = std::max(worst_sub, differential_margin(subs[k].metric, subs[k].W,
                                                          d.segment(off[k], subs[k].size())));
    }
    const double m = composed_jacobian_margin(net, d);
    EXPECT_LT(m, 0.0);
    EXPECT_LE(m, worst_sub + 1e-9);
  }
}

TEST(Composition, FeedbackDensity) {
  const auto full = InterconnectionMask::all_pairs(8);
  EXPECT_EQ(full.trainable_blocks.size(), 28u);
  const auto half = apply_feedback_density(full, 8, 0.5, 7);
  EXPECT_EQ(half.trainable_blocks.size(), 14u);
  EXPECT_EQ(apply_feedback_density(full, 8, 0.5, 7).trainable_blocks, half.trainable_blocks);
  EXPECT_NE(apply_feedback_density(full, 8, 0.5, 8).trainable_blocks, half.trainable_blocks);
  EXPECT_EQ(apply_feedback_density(full, 8, 0.0, 7).trainable_blocks.size(), 0u);
  EXPECT_EQ(apply_feedback_density(full, 8, 0.01, 7).trainable_blocks.size(), 1u);
  for (const auto& [i, j] : half.trainable_blocks) EXPECT_TRUE(full.contains(i, j));
  EXPECT_THROW(apply_feedback_density(full, 8, 1.5, 7), NumericsError);
}

TEST(Composition, RejectsBadShapes) {
  const auto subs = certified_subnets({2, 2}, 60);
  EXPECT_THROW(build_L(Matrix::Zero(3, 3), subs, InterconnectionMask::all_pairs(2)), NumericsError);
  InterconnectionMask bad{{{0, 1}}, 1.0};
  EXPECT_THROW(build_L(Matrix::Zero(4, 4), subs, bad), NumericsError);
  EXPECT_THROW(feedback_mode_from_string("sideways"), std::invalid_argument);
}
