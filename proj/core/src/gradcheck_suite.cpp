#include "rfn/gradcheck_suite.hpp"

#include <cstdio>
#include <functional>

#include "rfn/gradcheck.hpp"
#include "rfn/losses.hpp"
#include "rfn/networks.hpp"
#include "rfn/random.hpp"

namespace rfn {

bool SuiteReport::passed() const {
    for (const auto& e : entries) {
        if (!e.passed()) return false;
    }
    return true;
}

std::string format_report(const SuiteReport& report) {
    std::string out;
    char line[160];
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof line, "%-16s max_rel_err=%.3e threshold=%.0e shapes=%zu probes=%zu %s\n",
                      e.name.c_str(), e.max_relative_error, e.threshold, e.shapes, e.probes,
                      e.passed() ? "PASS" : "FAIL");
        out += line;
    }
    return out;
}

namespace {

using D = double;
using Fn = std::function<Var<D>(const Var<D>&)>;

Tensor<D> random_tensor(Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0) {
    std::vector<D> v(s.numel());
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<D>(s, std::move(v));
}

// Values bounded away from zero so that kinks stay outside the probe radius.
Tensor<D> kink_free(Rng& rng, const Shape& s) {
    std::vector<D> v(s.numel());
    for (auto& x : v) {
        const double mag = rng.uniform(0.05, 1.0);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor<D>(s, std::move(v));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

class Suite {
public:
    explicit Suite(const SuiteOptions& o) : opts_(o), rng_(o.seed) {}

    // Checks `fn` (projected onto a fixed random direction when its output is not scalar).
    void check(SuiteEntry& e, const Fn& fn, const Tensor<D>& x, std::size_t max_probes = 0) {
        // Window-tail pixels of SSIM terms have gradients near 1e-7; a wider step keeps
        // roundoff well below them.
        const double eps = e.threshold == kWindowedLossTolerance ? 1e-4 : 1e-6;
        const Var<D> probe = fn(Var<D>::leaf(x));
        Fn scalar = fn;
        if (probe.shape().numel() != 1) {
            auto direction = std::make_shared<Tensor<D>>(random_tensor(rng_, probe.shape()));
            scalar = [fn, direction](const Var<D>& v) { return ops::weighted_sum(fn(v), *direction); };
        }
        const GradCheckResult r = grad_check<D>(scalar, x, eps, max_probes);
        e.probes += r.probes;
        if (r.max_relative_error > e.max_relative_error) e.max_relative_error = r.max_relative_error;
    }

    SuiteEntry entry(const char* name, double threshold) const {
        SuiteEntry e;
        e.name = name;
        e.threshold = threshold;
        e.shapes = opts_.shapes_per_op;
        return e;
    }

    Shape image_shape(std::size_t min_hw, std::size_t max_hw, std::size_t max_c = 3) {
        return Shape{pick(rng_, 1, 2), pick(rng_, 1, max_c), pick(rng_, min_hw, max_hw), pick(rng_, min_hw, max_hw)};
    }

    Shape even_shape() {
        return Shape{pick(rng_, 1, 2), pick(rng_, 1, 3), 2 * pick(rng_, 1, 3), 2 * pick(rng_, 1, 3)};
    }

    SuiteReport run() {
        SuiteReport rep;
        const std::size_t n = opts_.shapes_per_op;

        {
            auto e = entry("conv2d", kOpTolerance);
            for (std::size_t i = 0; i < n; ++i) {
                const Shape xs = image_shape(3, 6);
                const std::size_t k = i % 2 == 0 ? 3 : 1 + 2 * (i % 3 == 2);
                const std::size_t cout = pick(rng_, 1, 3);
                const PadMode pad = i % 2 == 0 ? PadMode::reflect : PadMode::zero;
                const std::size_t padding = k / 2;
                const auto x = random_tensor(rng_, xs);
                const auto w = random_tensor(rng_, Shape{cout, xs.c(), k, k});
                const auto b = random_tensor(rng_, Shape{cout});
                const auto cx = Var<D>::leaf(x), cw = Var<D>::leaf(w), cb = Var<D>::leaf(b);
                check(e, [&](const Var<D>& v) { return ops::conv2d(v, cw, cb, padding, pad); }, x);
                check(e, [&](const Var<D>& v) { return ops::conv2d(cx, v, cb, padding, pad); }, w);
                check(e, [&](const Var<D>& v) { return ops::conv2d(cx, cw, v, padding, pad); }, b);
            }
            rep.entries.push_back(e);
        }
        unary(rep, "relu", [](const Var<D>& v) { return ops::relu(v); }, true);
        unary(rep, "leaky_relu", [](const Var<D>& v) { return ops::leaky_relu(v, 0.1); }, true);
        {
            auto e = entry("maxpool2", kOpTolerance);
            for (std::size_t i = 0; i < n; ++i) {
                check(e, [](const Var<D>& v) { return ops::maxpool2(v); }, random_tensor(rng_, even_shape()));
            }
            rep.entries.push_back(e);
        }
        unary(rep, "upsample2", [](const Var<D>& v) { return ops::upsample2(v); });
        {
            auto e = entry("concat_channels", kOpTolerance);
            for (std::size_t i = 0; i < n; ++i) {
                const Shape s = image_shape(2, 4);
                const auto other = Var<D>::leaf(random_tensor(rng_, Shape{s.n(), pick(rng_, 1, 3), s.h(), s.w()}));
                check(e, [&](const Var<D>& v) { return ops::concat_channels<D>({other, v, other}); },
                      random_tensor(rng_, s));
            }
            rep.entries.push_back(e);
        }
        binary(rep, "add", [](const Var<D>& a, const Var<D>& b) { return ops::add(a, b); });
        binary(rep, "sub", [](const Var<D>& a, const Var<D>& b) { return ops::sub(a, b); });
        unary(rep, "affine", [](const Var<D>& v) { return ops::affine(v, 1.7, -0.3); });
        unary(rep, "sum", [](const Var<D>& v) { return ops::sum(v); });
        unary(rep, "mean", [](const Var<D>& v) { return ops::mean(v); });
        {
            auto e = entry("weighted_sum", kOpTolerance);
            for (std::size_t i = 0; i < n; ++i) {
                const Shape s = image_shape(2, 5);
                const auto w = random_tensor(rng_, s);
                check(e, [&](const Var<D>& v) { return ops::weighted_sum(v, w); }, random_tensor(rng_, s));
            }
            rep.entries.push_back(e);
        }
        binary(rep, "mse", [](const Var<D>& a, const Var<D>& b) { return ops::mse(a, b); });

        losses(rep);
        rfn_block(rep);
        decoder(rep);
        return rep;
    }

private:
    void unary(SuiteReport& rep, const char* name, const Fn& fn, bool kinked = false) {
        auto e = entry(name, kOpTolerance);
        for (std::size_t i = 0; i < opts_.shapes_per_op; ++i) {
            const Shape s = image_shape(2, 5);
            check(e, fn, kinked ? kink_free(rng_, s) : random_tensor(rng_, s));
        }
        rep.entries.push_back(e);
    }

    void binary(SuiteReport& rep, const char* name, const std::function<Var<D>(const Var<D>&, const Var<D>&)>& fn) {
        auto e = entry(name, kOpTolerance);
        for (std::size_t i = 0; i < opts_.shapes_per_op; ++i) {
            const Shape s = image_shape(2, 5);
            const auto a = random_tensor(rng_, s), b = random_tensor(rng_, s);
            const auto ca = Var<D>::leaf(a), cb = Var<D>::leaf(b);
            check(e, [&](const Var<D>& v) { return fn(v, cb); }, a);
            check(e, [&](const Var<D>& v) { return fn(ca, v); }, b);
        }
        rep.entries.push_back(e);
    }

    MultiScaleFeatures<D> random_features(const Shape& image, const std::array<std::size_t, kScales>& channels) {
        MultiScaleFeatures<D> f;
        for (std::size_t m = 0; m < kScales; ++m) {
            const std::size_t div = std::size_t{2} << m;
            f[m] = Var<D>::leaf(random_tensor(rng_, Shape{image.n(), channels[m], image.h() / div, image.w() / div}));
        }
        return f;
    }

    void losses(SuiteReport& rep) {
        const std::size_t n = opts_.shapes_per_op;
        auto s_ssim = entry("ssim", kWindowedLossTolerance);
        auto s_pixel = entry("l_pixel", kOpTolerance);
        auto s_auto = entry("l_auto", kWindowedLossTolerance);
        auto s_detail = entry("l_detail", kWindowedLossTolerance);
        auto s_feature = entry("l_feature", kOpTolerance);
        auto s_rfn = entry("l_rfn", kWindowedLossTolerance);
        const std::array<std::size_t, kScales> ch{2, 3, 2, 3};
        loss::Stage2LossConfig cfg2;
        cfg2.w1 = {1.0, 0.5, 0.25, 0.125};
        for (std::size_t i = 0; i < n; ++i) {
            const Shape s = image_shape(11, 14, 2);
            const auto x = random_tensor(rng_, s, 0.0, 1.0), y = random_tensor(rng_, s, 0.0, 1.0);
            const auto cx = Var<D>::leaf(x), cy = Var<D>::leaf(y);
            check(s_ssim, [&](const Var<D>& v) { return loss::ssim(v, cy); }, x);
            check(s_ssim, [&](const Var<D>& v) { return loss::ssim(cx, v); }, y);
            check(s_pixel, [&](const Var<D>& v) { return loss::l_pixel(v, cy, i % 2 == 0); }, x);
            check(s_auto, [&](const Var<D>& v) { return loss::l_auto(v, cy).total; }, x);
            check(s_detail, [&](const Var<D>& v) { return loss::l_detail(v, cy); }, x);

            const Shape fs{pick(rng_, 1, 2), 1, 16, 16};
            const auto phi_f = random_features(fs, ch), phi_vi = random_features(fs, ch), phi_ir = random_features(fs, ch);
            for (std::size_t m = 0; m < kScales; ++m) {
                check(s_feature,
                      [&](const Var<D>& v) {
                          MultiScaleFeatures<D> f = phi_f;
                          f[m] = v;
                          return loss::l_feature(f, phi_vi, phi_ir, cfg2);
                      },
                      phi_f[m].value());
            }
            const auto img = random_tensor(rng_, Shape{fs.n(), 1, 12, 12}, 0.0, 1.0);
            const auto vis = Var<D>::leaf(random_tensor(rng_, img.shape(), 0.0, 1.0));
            check(s_rfn, [&](const Var<D>& v) { return loss::l_rfn(v, vis, phi_f, phi_vi, phi_ir, cfg2).total; }, img);
            check(s_rfn,
                  [&](const Var<D>& v) {
                      MultiScaleFeatures<D> f = phi_f;
                      f[1] = v;
                      return loss::l_rfn(Var<D>::leaf(img), vis, f, phi_vi, phi_ir, cfg2).total;
                  },
                  phi_f[1].value());
        }
        for (auto* e : {&s_ssim, &s_pixel, &s_auto, &s_detail, &s_feature, &s_rfn}) rep.entries.push_back(*e);
    }

    // Substitutes `v` for parameter `name` in a copy of `w`.
    static ModelWeights<D> with_param(const ModelWeights<D>& w, const std::string& name, const Var<D>& v) {
        ModelWeights<D> copy = w;
        copy.get(name).value = v;
        return copy;
    }

    void rfn_block(SuiteReport& rep) {
        auto e = entry("rfn_block", kOpTolerance);
        const auto arch = ArchitectureConfig::with_widths(2, {2, 3, 2, 3});
        for (std::size_t i = 0; i < opts_.shapes_per_op; ++i) {
            const auto w = init_weights<D>(arch, rng_.next());
            const std::size_t m = i % kScales;
            const Shape s{pick(rng_, 1, 2), arch.scale_channels[m], pick(rng_, 3, 5), pick(rng_, 3, 5)};
            const auto ir = random_tensor(rng_, s), vi = random_tensor(rng_, s);
            const auto cir = Var<D>::leaf(ir), cvi = Var<D>::leaf(vi);
            check(e, [&](const Var<D>& v) { return rfn_fuse(v, cvi, m, w); }, ir);
            check(e, [&](const Var<D>& v) { return rfn_fuse(cir, v, m, w); }, vi);
            const std::string pname = "rfn" + std::to_string(m + 1) + ".conv3.weight";
            check(e, [&](const Var<D>& v) { return rfn_fuse(cir, cvi, m, with_param(w, pname, v)); },
                  w.get(pname).value.value());
        }
        rep.entries.push_back(e);
    }

    void decoder(SuiteReport& rep) {
        auto e = entry("decoder", kOpTolerance);
        for (std::size_t i = 0; i < opts_.shapes_per_op; ++i) {
            auto arch = ArchitectureConfig::with_widths(2, {2, 3, 2, 3});
            arch.nest_connections = i % 2 == 0;
            const auto w = init_weights<D>(arch, rng_.next());
            const Shape img{pick(rng_, 1, 2), 1, 16 * pick(rng_, 1, 2), 16};
            const auto phi = random_features(img, arch.scale_channels);
            for (std::size_t m = 0; m < kScales; ++m) {
                check(e,
                      [&](const Var<D>& v) {
                          MultiScaleFeatures<D> f = phi;
                          f[m] = v;
                          return decode(f, w);
                      },
                      phi[m].value(), 48);
            }
            const std::string pname = "decoder.node11.conv1.weight";
            check(e, [&](const Var<D>& v) { return decode(phi, with_param(w, pname, v)); }, w.get(pname).value.value(),
                  48);
        }
        rep.entries.push_back(e);
    }

    SuiteOptions opts_;
    Rng rng_;
};

}  // namespace

SuiteReport run_gradcheck_suite(const SuiteOptions& options) { return Suite(options).run(); }

}  // namespace rfn
