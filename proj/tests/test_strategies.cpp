#include <gtest/gtest.h>

#include <cmath>

#include "rfn/strategies.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace rfn::strategy {
namespace {

using test::random_tensor;
using Td = Tensor<double>;
using oracle::jacobi_nuclear_norm;
using oracle::l1_oracle;
using oracle::nuclear_oracle;
using oracle::sca_oracle;

Td scaled(const Td& t, double k) {
    Td out = t;
    for (auto& v : out.data()) v *= k;
    return out;
}

// Feature maps are post-ReLU, so strategy inputs are nonnegative.
Td features(std::uint64_t seed) { return random_tensor(Shape{1, 4, 8, 8}, seed, 0.0, 1.0); }

TEST(FuseAdd, Basics) {
    const Td a = features(1), b = features(2);
    EXPECT_EQ(fuse_add(a, a), scaled(a, 2.0));
    EXPECT_EQ(fuse_add(a, Td(a.shape())), a);
    EXPECT_EQ(fuse_add(a, b), fuse_add(b, a));
}

TEST(FuseMax, Basics) {
    const Td a = features(3), b = features(4);
    EXPECT_EQ(fuse_max(a, a), a);
    Td a1 = a;
    for (auto& v : a1.data()) v += 1.0;
    EXPECT_EQ(fuse_max(a, a1), a1);
    EXPECT_EQ(fuse_max(fuse_max(a, b), b), fuse_max(a, b));
    EXPECT_EQ(fuse_max(a, b), fuse_max(b, a));
}

TEST(FuseL1, EqualInputsReturnInput) {
    const Td a = features(5);
    EXPECT_LT(max_abs_diff(fuse_l1norm(a, a), a), 1e-12);
    const Td weights = l1norm_weights(a, a);
    for (double w : weights.data()) EXPECT_DOUBLE_EQ(w, 0.5);
}

TEST(FuseL1, ZeroPartnerGivesFullWeight) {
    const Td a = features(6);
    EXPECT_LT(max_abs_diff(fuse_l1norm(a, Td(a.shape())), a), 1e-12);
}

TEST(FuseL1, MatchesPerPixelOracle) {
    const Td a = random_tensor(Shape{2, 3, 8, 8}, 7), b = random_tensor(Shape{2, 3, 8, 8}, 8);
    EXPECT_LT(max_abs_diff(fuse_l1norm(a, b), l1_oracle(a, b, 1)), 1e-10);
    EXPECT_LT(max_abs_diff(fuse_l1norm(a, b, 2), l1_oracle(a, b, 2)), 1e-10);
}

TEST(FuseL1, BothZeroFallsBackToHalf) {
    const Td z(Shape{1, 2, 4, 4});
    const Td weights = l1norm_weights(z, z);
    for (double w : weights.data()) EXPECT_EQ(w, 0.5);
}

TEST(NuclearNorm, DiagonalMatrix) {
    EXPECT_NEAR(nuclear_norm(std::vector<double>{3, 0, 0, 4}, 2, 2), 7.0, 1e-12);
}

TEST(NuclearNorm, MatchesJacobiOracle) {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const Td m = random_tensor(Shape{1, 1, 8, 8}, seed);
        std::vector<double> v(m.data().begin(), m.data().end());
        EXPECT_NEAR(nuclear_norm(v, 8, 8), jacobi_nuclear_norm(v, 8, 8), 1e-8);
    }
    const Td r = random_tensor(Shape{1, 1, 5, 9}, 16);
    std::vector<double> v(r.data().begin(), r.data().end());
    EXPECT_NEAR(nuclear_norm(v, 5, 9), jacobi_nuclear_norm(v, 5, 9), 1e-8);
}

TEST(FuseNuclear, EqualInputsReturnInput) {
    const Td a = features(20);
    EXPECT_LT(max_abs_diff(fuse_nuclear(a, a), a), 1e-12);
}

TEST(FuseNuclear, MatchesChannelOracle) {
    const Td a = features(21), b = features(22);
    EXPECT_LT(max_abs_diff(fuse_nuclear(a, b), nuclear_oracle(a, b)), 1e-8);
}

TEST(FuseSca, EqualInputsReturnInput) {
    const Td a = features(30);
    EXPECT_LT(max_abs_diff(fuse_sca(a, a), a), 1e-12);
}

TEST(FuseSca, Homogeneous) {
    const Td a = features(31), b = features(32);
    EXPECT_LT(max_abs_diff(fuse_sca(scaled(a, 2), scaled(b, 2)), scaled(fuse_sca(a, b), 2)), 1e-12);
}

TEST(FuseSca, MatchesTwoBranchOracle) {
    const Td a = features(33), b = features(34);
    EXPECT_LT(max_abs_diff(fuse_sca(a, b), sca_oracle(a, b)), 1e-10);
}

TEST(Strategies, WeightsSumToOneAndSwapSymmetric) {
    const Td a = features(40), b = features(41);
    const Td wl = l1norm_weights(a, b), wl_swapped = l1norm_weights(b, a);
    const Td wn = nuclear_weights(a, b), wn_swapped = nuclear_weights(b, a);
    const Td wc = channel_weights(a, b), wc_swapped = channel_weights(b, a);
    for (std::size_t i = 0; i < wl.size(); ++i) EXPECT_NEAR(wl[i] + wl_swapped[i], 1.0, 1e-12);
    for (std::size_t i = 0; i < wn.size(); ++i) EXPECT_NEAR(wn[i] + wn_swapped[i], 1.0, 1e-12);
    for (std::size_t i = 0; i < wc.size(); ++i) EXPECT_NEAR(wc[i] + wc_swapped[i], 1.0, 1e-12);
    for (auto kind : {StrategyKind::add, StrategyKind::max, StrategyKind::l1_norm, StrategyKind::nuclear_norm,
                      StrategyKind::sca}) {
        const Td ab = apply(kind, a, b), ba = apply(kind, b, a);
        EXPECT_EQ(ab.shape(), a.shape());
        EXPECT_LT(max_abs_diff(ab, ba), 1e-12) << static_cast<int>(kind);
    }
}

TEST(Strategies, SelfFusionIsIdentity) {
    const Td a = features(50);
    for (auto kind : {StrategyKind::max, StrategyKind::l1_norm, StrategyKind::nuclear_norm, StrategyKind::sca}) {
        EXPECT_LT(max_abs_diff(apply(kind, a, a), a), 1e-12) << static_cast<int>(kind);
    }
}

TEST(Strategies, ShapeMismatchIsShapeError) {
    const Td a(Shape{1, 2, 4, 4}), b(Shape{1, 2, 4, 2});
    EXPECT_THROW(fuse_add(a, b), ShapeError);
    EXPECT_THROW(fuse_max(a, b), ShapeError);
    EXPECT_THROW(fuse_l1norm(a, b), ShapeError);
    EXPECT_THROW(fuse_nuclear(a, b), ShapeError);
    EXPECT_THROW(fuse_sca(a, b), ShapeError);
}

TEST(FusionMethod, ParsesNames) {
    for (auto m : {FusionMethod::rfn, FusionMethod::add, FusionMethod::max, FusionMethod::l1, FusionMethod::nuclear,
                   FusionMethod::sca}) {
        EXPECT_EQ(parse_fusion_method(to_string(m)), m);
    }
    EXPECT_THROW(parse_fusion_method("median"), ConfigError);
}

TEST(FuseWith, StrategiesRunThroughPipeline) {
    const auto w = init_weights<double>(ArchitectureConfig::with_widths(4, {4, 6, 8, 10}), 3);
    const ImagePair<double> pair{random_tensor(Shape{1, 1, 40, 36}, 60, 0, 1), random_tensor(Shape{1, 1, 40, 36}, 61, 0, 1),
                                 "p"};
    EXPECT_EQ(fuse_with(pair, w, FusionMethod::rfn), fuse_forward(pair, w));
    for (auto m : {FusionMethod::add, FusionMethod::max, FusionMethod::l1, FusionMethod::nuclear, FusionMethod::sca}) {
        const Td out = fuse_with(pair, w, m);
        EXPECT_EQ(out.shape(), pair.ir.shape());
        EXPECT_EQ(out, fuse_with(pair, w, m));
        for (double v : out.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
}

}  // namespace
}  // namespace rfn::strategy
