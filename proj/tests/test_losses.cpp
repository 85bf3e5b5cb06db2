#include <gtest/gtest.h>

#include <cmath>

#include "rfn/data.hpp"
#include "rfn/gradcheck.hpp"
#include "rfn/losses.hpp"
#include "test_util.hpp"

namespace rfn {
namespace {

using test::random_tensor;
using V = Var<double>;
using Td = Tensor<double>;

// Windowed SSIM computed straight from the definition, one window at a time.
double brute_ssim(const Td& x, const Td& y) {
    const std::size_t k = 11;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    std::vector<double> g(k * k);
    double gsum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double di = double(i) - 5.0, dj = double(j) - 5.0;
            g[i * k + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            gsum += g[i * k + j];
        }
    for (double& v : g) v /= gsum;
    const auto& s = x.shape();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < s.n() * s.c(); ++p) {
        const std::size_t n = p / s.c(), c = p % s.c();
        for (std::size_t y0 = 0; y0 + k <= s.h(); ++y0)
            for (std::size_t x0 = 0; x0 + k <= s.w(); ++x0) {
                double mx = 0, my = 0;
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        mx += g[i * k + j] * x.at(n, c, y0 + i, x0 + j);
                        my += g[i * k + j] * y.at(n, c, y0 + i, x0 + j);
                    }
                double vx = 0, vy = 0, cxy = 0;
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double a = x.at(n, c, y0 + i, x0 + j) - mx, b = y.at(n, c, y0 + i, x0 + j) - my;
                        vx += g[i * k + j] * a * a;
                        vy += g[i * k + j] * b * b;
                        cxy += g[i * k + j] * a * b;
                    }
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    }
    return total / double(count);
}

Td checkerboard(std::size_t n) {
    Td t(Shape{1, 1, n, n});
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) t.at(0, 0, y, x) = (x + y) % 2 ? 1.0 : 0.0;
    return t;
}

Td one_minus(const Td& x) {
    Td out = x;
    for (auto& v : out.data()) v = 1.0 - v;
    return out;
}

double value(const V& v) { return v.value().item(); }

TEST(Ssim, SelfSimilarityIsOne) {
    const Td x = random_tensor(Shape{2, 1, 16, 20}, 1, 0, 1);
    EXPECT_NEAR(value(loss::ssim(V::leaf(x), V::leaf(x))), 1.0, 1e-9);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
    const Td x = checkerboard(11);
    const double got = value(loss::ssim(V::leaf(x), V::leaf(one_minus(x))));
    EXPECT_LT(got, 0.0);
    EXPECT_NEAR(got, brute_ssim(x, one_minus(x)), 1e-12);
}

TEST(Ssim, MatchesBruteForceOracle) {
    const Td x = random_tensor(Shape{2, 1, 16, 18}, 2, 0, 1);
    const Td y = random_tensor(Shape{2, 1, 16, 18}, 3, 0, 1);
    EXPECT_NEAR(value(loss::ssim(V::leaf(x), V::leaf(y))), brute_ssim(x, y), 1e-12);
    EXPECT_NEAR(ssim_plane<double>(x.sample(0).data(), y.sample(0).data(), 16, 18).ssim,
                brute_ssim(x.sample(0), y.sample(0)), 1e-12);
}

TEST(Ssim, Symmetric) {
    const Td x = random_tensor(Shape{1, 1, 16, 16}, 4, 0, 1);
    const Td y = random_tensor(Shape{1, 1, 16, 16}, 5, 0, 1);
    EXPECT_NEAR(value(loss::ssim(V::leaf(x), V::leaf(y))), value(loss::ssim(V::leaf(y), V::leaf(x))), 1e-15);
}

TEST(Ssim, RepeatableToTheBit) {
    const Td x = random_tensor(Shape{1, 1, 16, 16}, 6, 0, 1);
    const Td y = random_tensor(Shape{1, 1, 16, 16}, 7, 0, 1);
    EXPECT_EQ(value(loss::ssim(V::leaf(x), V::leaf(y))), value(loss::ssim(V::leaf(x), V::leaf(y))));
}

TEST(Ssim, ShapeMismatchAndTooSmall) {
    EXPECT_THROW(loss::ssim(V::leaf(Td(Shape{1, 1, 16, 16})), V::leaf(Td(Shape{1, 1, 16, 17}))), InputError);
    EXPECT_THROW(loss::ssim(V::leaf(Td(Shape{1, 1, 10, 16})), V::leaf(Td(Shape{1, 1, 10, 16}))), InputError);
}

TEST(Ssim, GaussianTapsNormalised) {
    const auto taps = gaussian_taps(11, 1.5);
    double sum = 0.0;
    for (double t : taps) sum += t;
    EXPECT_NEAR(sum, 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(taps[0], taps[10]);
}

TEST(LPixel, IdenticalIsZero) {
    const Td x = random_tensor(Shape{2, 1, 8, 8}, 8);
    EXPECT_EQ(value(loss::l_pixel(V::leaf(x), V::leaf(x))), 0.0);
}

TEST(LPixel, ConstantOffset) {
    const Td x = random_tensor(Shape{2, 1, 8, 8}, 9, 0, 0.5);
    Td y = x;
    for (auto& v : y.data()) v += 0.1;
    EXPECT_NEAR(value(loss::l_pixel(V::leaf(y), V::leaf(x))), 0.01, 1e-12);
}

TEST(LPixel, MatchesNaiveSum) {
    const Td a = random_tensor(Shape{3, 1, 7, 9}, 10);
    const Td b = random_tensor(Shape{3, 1, 7, 9}, 11);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_NEAR(value(loss::l_pixel(V::leaf(a), V::leaf(b))), s / double(a.size()), 1e-12);
    EXPECT_NEAR(value(loss::l_pixel(V::leaf(a), V::leaf(b), false)), s / 3.0, 1e-12);
}

TEST(LPixel, ShapeMismatchIsInputError) {
    EXPECT_THROW(loss::l_pixel(V::leaf(Td(Shape{1, 1, 4, 4})), V::leaf(Td(Shape{1, 1, 4, 5}))), InputError);
}

TEST(LAuto, PerfectReconstructionIsZero) {
    const Td x = random_tensor(Shape{2, 1, 16, 16}, 12, 0, 1);
    EXPECT_EQ(value(loss::l_auto(V::leaf(x), V::leaf(x)).total), 0.0);
}

TEST(LAuto, LambdaZeroEqualsPixel) {
    const Td a = random_tensor(Shape{1, 1, 16, 16}, 13, 0, 1);
    const Td b = random_tensor(Shape{1, 1, 16, 16}, 14, 0, 1);
    EXPECT_EQ(value(loss::l_auto(V::leaf(a), V::leaf(b), {0.0}).total), value(loss::l_pixel(V::leaf(a), V::leaf(b))));
}

TEST(LAuto, ComposesPixelAndSsim) {
    const Td x = random_tensor(Shape{1, 1, 16, 16}, 15, 0, 0.9);
    Td out = x;
    for (auto& v : out.data()) v += 0.1;
    const double expected = 0.01 + 100.0 * (1.0 - brute_ssim(out, x));
    const auto terms = loss::l_auto(V::leaf(out), V::leaf(x), {100.0});
    EXPECT_NEAR(value(terms.total), expected, 1e-10);
    EXPECT_NEAR(value(terms.pixel), 0.01, 1e-12);
    EXPECT_NEAR(value(terms.ssim), 1.0 - brute_ssim(out, x), 1e-12);
}

TEST(LAuto, NegativeLambdaRejected) {
    EXPECT_THROW((loss::Stage1LossConfig{-1.0}).validate(), ConfigError);
}

TEST(LDetail, PerfectIsZeroAndRangeBounded) {
    const Td vi = random_tensor(Shape{1, 1, 16, 16}, 16, 0, 1);
    EXPECT_NEAR(value(loss::l_detail(V::leaf(vi), V::leaf(vi))), 0.0, 1e-12);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const double d = value(loss::l_detail(V::leaf(random_tensor(Shape{1, 1, 16, 16}, 100 + s, 0, 1)), V::leaf(vi)));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 2.0);
    }
    const Td cb = checkerboard(12);
    const double worst = value(loss::l_detail(V::leaf(one_minus(cb)), V::leaf(cb)));
    EXPECT_GT(worst, 1.0);
    EXPECT_LE(worst, 2.0);
}

TEST(LDetail, DecreasesWhenBlendedTowardVisible) {
    const auto scene = data::synth_pair(64, 17);
    const Td ir = to_tensor<double>(scene.ir), vi = to_tensor<double>(scene.vi);
    auto blend = [&](double t) {
        Td out = vi;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = t * vi[i] + (1 - t) * ir[i];
        return value(loss::l_detail(V::leaf(out), V::leaf(vi)));
    };
    EXPECT_LT(blend(0.9), blend(0.5));
}

MultiScaleFeatures<double> random_features(std::uint64_t seed, double lo = -1, double hi = 1) {
    MultiScaleFeatures<double> f;
    for (std::size_t m = 0; m < kScales; ++m) {
        const std::size_t side = 16 >> m;
        f[m] = V::leaf(random_tensor(Shape{2, 2 + m, side, side}, seed + m, lo, hi));
    }
    return f;
}

MultiScaleFeatures<double> weighted_target(const MultiScaleFeatures<double>& vi, const MultiScaleFeatures<double>& ir,
                                           double w_vi, double w_ir) {
    MultiScaleFeatures<double> f;
    for (std::size_t m = 0; m < kScales; ++m) {
        Td t = vi[m].value();
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = w_vi * vi[m].value()[i] + w_ir * ir[m].value()[i];
        f[m] = V::leaf(t);
    }
    return f;
}

TEST(LFeature, ZeroResidualIsZero) {
    const auto vi = random_features(20), ir = random_features(30);
    const auto f = weighted_target(vi, ir, 3.0, 6.0);
    EXPECT_EQ(value(loss::l_feature(f, vi, ir)), 0.0);
}

TEST(LFeature, MatchesNaiveOracle) {
    const auto f = random_features(40), vi = random_features(50), ir = random_features(60);
    loss::Stage2LossConfig cfg;
    double expected = 0.0;
    for (std::size_t m = 0; m < kScales; ++m) {
        const Td& a = f[m].value();
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double r = a[i] - (3.0 * vi[m].value()[i] + 6.0 * ir[m].value()[i]);
            s += r * r;
        }
        expected += std::pow(10.0, double(m)) * s / double(a.size());
    }
    EXPECT_NEAR(value(loss::l_feature(f, vi, ir, cfg)), expected, 1e-12 * expected);

    // one scale on its own
    cfg.w1 = {0.0, 0.0, 1.0, 0.0};
    const Td& a = f[2].value();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double r = a[i] - (3.0 * vi[2].value()[i] + 6.0 * ir[2].value()[i]);
        s += r * r;
    }
    EXPECT_NEAR(value(loss::l_feature(f, vi, ir, cfg)), s / double(a.size()), 1e-12);
}

TEST(LFeature, LinearInEachScaleWeight) {
    const auto f = random_features(70), vi = random_features(80), ir = random_features(90);
    loss::Stage2LossConfig cfg;
    const double base = value(loss::l_feature(f, vi, ir, cfg));
    auto doubled = cfg;
    for (auto& w : doubled.w1) w *= 2.0;
    EXPECT_NEAR(value(loss::l_feature(f, vi, ir, doubled)), 2.0 * base, 1e-12 * base);
    for (std::size_t m = 0; m < kScales; ++m) {
        auto one = cfg, bumped = cfg;
        one.w1 = {0, 0, 0, 0};
        one.w1[m] = cfg.w1[m];
        bumped.w1[m] *= 3.0;
        const double part = value(loss::l_feature(f, vi, ir, one));
        EXPECT_NEAR(value(loss::l_feature(f, vi, ir, bumped)), base + 2.0 * part, 1e-11 * base);
    }
}

TEST(LFeature, ScaleMismatchIsInputError) {
    auto f = random_features(1);
    const auto vi = random_features(2), ir = random_features(3);
    f[1] = V::leaf(Td(Shape{2, 3, 4, 4}));
    EXPECT_THROW(loss::l_feature(f, vi, ir), InputError);
}

TEST(Stage2Config, Validation) {
    loss::Stage2LossConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.w_vi = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.alpha = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.w1[3] = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(LRfn, AlphaZeroEqualsFeature) {
    const auto f = random_features(100, 0, 1), vi = random_features(110, 0, 1), ir = random_features(120, 0, 1);
    const V o = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 130, 0, 1));
    const V img = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 131, 0, 1));
    loss::Stage2LossConfig cfg;
    cfg.alpha = 0.0;
    EXPECT_NEAR(value(loss::l_rfn(o, img, f, vi, ir, cfg).total), value(loss::l_feature(f, vi, ir, cfg)), 1e-12);
}

TEST(LRfn, PerfectInputsGiveZero) {
    const auto vi = random_features(140, 0, 1), ir = random_features(150, 0, 1);
    const auto f = weighted_target(vi, ir, 3.0, 6.0);
    const V img = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 160, 0, 1));
    const auto terms = loss::l_rfn(img, img, f, vi, ir);
    EXPECT_NEAR(value(terms.total), 0.0, 1e-9);
    EXPECT_EQ(value(terms.feature), 0.0);
}

TEST(LRfn, IsDetailPlusFeature) {
    const auto f = random_features(170, 0, 1), vi = random_features(180, 0, 1), ir = random_features(190, 0, 1);
    const V o = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 200, 0, 1));
    const V img = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 201, 0, 1));
    const auto t = loss::l_rfn(o, img, f, vi, ir);
    EXPECT_NEAR(value(t.total), 700.0 * value(t.detail) + value(t.feature), 1e-9);
}

TEST(LRfn, GradCheckWithRespectToFusedFeatures) {
    const auto vi = random_features(210, 0, 1), ir = random_features(220, 0, 1);
    const auto f0 = random_features(230, 0, 1);
    const V o = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 240, 0, 1));
    const V img = V::leaf(random_tensor(Shape{2, 1, 16, 16}, 241, 0, 1));
    for (std::size_t m = 0; m < kScales; ++m) {
        auto fn = [&](const V& v) {
            auto f = f0;
            f[m] = v;
            return loss::l_rfn(o, img, f, vi, ir).total;
        };
        // quadratic in phi_f: the largest step keeps roundoff of the large loss value small
        EXPECT_LT(grad_check<double>(fn, f0[m].value(), 1e-3, 64).max_relative_error, 1e-3) << "scale " << m;
    }
}

TEST(Losses, NonnegativeOnRandomInputs) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const V a = V::leaf(random_tensor(Shape{1, 1, 16, 16}, 300 + s, 0, 1));
        const V b = V::leaf(random_tensor(Shape{1, 1, 16, 16}, 400 + s, 0, 1));
        EXPECT_GE(value(loss::l_pixel(a, b)), 0.0);
        EXPECT_GE(value(loss::l_auto(a, b).total), 0.0);
        EXPECT_GE(value(loss::l_detail(a, b)), 0.0);
        EXPECT_GE(value(loss::l_feature(random_features(s), random_features(s + 9), random_features(s + 19))), 0.0);
    }
}

TEST(Losses, GradCheckOnRandomSmallInputs) {
    const std::vector<Shape> shapes{Shape{1, 1, 12, 12}, Shape{2, 1, 16, 13}, Shape{1, 1, 11, 20}};
    std::uint64_t seed = 500;
    for (const auto& s : shapes) {
        const Td x = random_tensor(s, ++seed, 0.1, 0.9);
        const V y = V::leaf(random_tensor(s, ++seed, 0.1, 0.9));
        const std::vector<std::pair<const char*, std::function<V(const V&)>>> cases{
            {"ssim", [&](const V& v) { return loss::ssim(v, y); }},
            {"l_pixel", [&](const V& v) { return loss::l_pixel(v, y); }},
            {"l_auto", [&](const V& v) { return loss::l_auto(v, y).total; }},
            {"l_detail", [&](const V& v) { return loss::l_detail(v, y); }},
        };
        for (const auto& [name, fn] : cases) {
            EXPECT_LT(grad_check<double>(fn, x, 1e-4).max_relative_error, 1e-3) << name << " " << s.str();
        }
    }
}

}  // namespace
}  // namespace rfn
