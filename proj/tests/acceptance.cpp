// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rfn/checkpoint.hpp"
#include "rfn/data.hpp"
#include "rfn/gradcheck_suite.hpp"
#include "rfn/losses.hpp"
#include "rfn/metrics.hpp"
#include "rfn/strategies.hpp"
#include "rfn/training.hpp"
#include "test_util.hpp"

namespace rfn {
namespace {

using Clock = std::chrono::steady_clock;
using Td = Tensor<double>;
using V = Var<double>;
using test::random_image;
using test::random_tensor;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks; the first few go into the report line.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) failures_.push_back(what);
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    [[nodiscard]] bool passed() const { return failures_.empty(); }
    [[nodiscard]] std::string summary() const {
        std::ostringstream os;
        os << total_ - failures_.size() << '/' << total_ << " checks";
        for (std::size_t i = 0; i < failures_.size() && i < 4; ++i) os << (i ? ", " : "; failed: ") << failures_[i];
        if (failures_.size() > 4) os << " (+" << failures_.size() - 4 << " more)";
        if (!notes_.empty()) os << "; " << notes_;
        return os.str();
    }

private:
    std::size_t total_ = 0;
    std::vector<std::string> failures_;
    std::string notes_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double max_abs_diff(const Td& a, const Td& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// 1. gradient suite

void gradient_suite(Checks& c) {
    const auto t0 = Clock::now();
    const SuiteReport report = run_gradcheck_suite();
    const double elapsed = seconds_since(t0);
    double worst_op = 0, worst_windowed = 0;
    for (const auto& e : report.entries) {
        c.expect(e.passed(), e.name + " error " + fmt(e.max_relative_error));
        c.expect(e.shapes >= 3, e.name + " only " + std::to_string(e.shapes) + " shapes");
        c.expect(e.threshold <= kWindowedLossTolerance, e.name + " threshold too loose");
        if (e.threshold <= kOpTolerance) worst_op = std::max(worst_op, e.max_relative_error);
        else worst_windowed = std::max(worst_windowed, e.max_relative_error);
    }
    c.expect(report.entries.size() >= 10, "suite too small");
    c.expect(elapsed < 120.0, "runtime " + fmt(elapsed) + " s");
    c.note(std::to_string(report.entries.size()) + " entries, worst op " + fmt(worst_op) + ", worst windowed " +
           fmt(worst_windowed) + ", " + fmt(elapsed) + " s");
}

// 2. loss identities

MultiScaleFeatures<double> random_features(std::uint64_t seed) {
    MultiScaleFeatures<double> f;
    for (std::size_t m = 0; m < kScales; ++m) {
        const std::size_t side = 16 >> m;
        f[m] = V::leaf(random_tensor(Shape{2, 3 + m, side, side}, seed + m, 0, 1));
    }
    return f;
}

void loss_identities(Checks& c) {
    const Td x = random_tensor(Shape{2, 1, 24, 24}, 1, 0, 1);
    const double lauto = loss::l_auto(V::leaf(x), V::leaf(x)).total.value().item();
    c.expect(lauto == 0.0, "L_auto(x,x) = " + fmt(lauto));
    const double ldetail = loss::l_detail(V::leaf(x), V::leaf(x)).value().item();
    c.expect(ldetail == 0.0, "L_detail(vi,vi) = " + fmt(ldetail));

    const auto vi = random_features(10), ir = random_features(20);
    const loss::Stage2LossConfig cfg;
    MultiScaleFeatures<double> target;
    for (std::size_t m = 0; m < kScales; ++m) {
        Td t = vi[m].value();
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = cfg.w_vi * vi[m].value()[i] + cfg.w_ir * ir[m].value()[i];
        target[m] = V::leaf(t);
    }
    const double lfeat = loss::l_feature(target, vi, ir, cfg).value().item();
    c.expect(lfeat == 0.0, "L_feature(target) = " + fmt(lfeat));
    const double lrfn = loss::l_rfn(V::leaf(x), V::leaf(x), target, vi, ir, cfg).total.value().item();
    c.expect(lrfn == 0.0, "L_RFN(perfect) = " + fmt(lrfn));

    const V o = V::leaf(random_tensor(Shape{2, 1, 24, 24}, 30, 0, 1));
    const auto phi_f = random_features(40);
    loss::Stage2LossConfig a0 = cfg;
    a0.alpha = 0.0;
    const double with_zero_alpha = loss::l_rfn(o, V::leaf(x), phi_f, vi, ir, a0).total.value().item();
    const double feature_only = loss::l_feature(phi_f, vi, ir, a0).value().item();
    c.expect(std::abs(with_zero_alpha - feature_only) <= 1e-12,
             "alpha=0 differs by " + fmt(std::abs(with_zero_alpha - feature_only)));
}

// 3. architecture invariants

void architecture(Checks& c) {
    const ArchitectureConfig arch;
    const auto w = init_weights<float>(arch, 11);
    for (std::size_t size : {64u, 128u, 250u}) {
        const auto img = random_tensor<float>(Shape{1, 1, size, size}, size, 0, 1);
        const auto padded = pad_input(img);
        const std::size_t p = padded.image.shape().h();
        c.expect(p % 16 == 0 && p >= size && p < size + 16, "padding of " + std::to_string(size));
        NoGradGuard guard;
        const auto phi = encode(Var<float>::leaf(padded.image), w);
        for (std::size_t m = 0; m < kScales; ++m) {
            const std::size_t side = p >> (m + 1);
            c.expect(phi[m].shape() == Shape{1, arch.scale_channels[m], side, side},
                     "ladder " + std::to_string(size) + " scale " + std::to_string(m + 1) + " got " + phi[m].shape().str());
        }
        const ImagePair<float> pair{img, random_tensor<float>(Shape{1, 1, size, size}, size + 1, 0, 1), "x"};
        const auto fused = fuse_forward(pair, w);
        c.expect(fused.shape() == img.shape(), "fuse dims " + std::to_string(size) + " got " + fused.shape().str());
    }

    test::TempDir dir;
    data::write_synthetic_corpus(dir.path(), {8, 32, 3});
    const auto paired = data::load_corpus(dir.path(), data::CorpusMode::paired, 32);
    TrainConfig cfg;
    cfg.stage = Stage::rfn;
    cfg.arch = ArchitectureConfig::with_widths(4, {8, 8, 12, 12});
    cfg.image_size = 32;
    cfg.lr = 1e-3;
    cfg.epochs = 1000;
    cfg.max_steps = 100;
    const auto before = init_weights<float>(cfg.arch, 5);
    const auto after = train_stage2<float>(cfg, paired, before);
    c.expect(after.history.size() == 100, "ran " + std::to_string(after.history.size()) + " steps");
    std::size_t frozen_changed = 0, rfn_changed = 0;
    for (std::size_t i = 0; i < before.params().size(); ++i) {
        const auto& b = before.params()[i];
        const bool same = b.value.value() == after.weights.params()[i].value.value();
        if (group_of(b.name) == ParameterGroup::rfn) rfn_changed += !same;
        else frozen_changed += !same;
    }
    c.expect(frozen_changed == 0, std::to_string(frozen_changed) + " frozen tensors moved");
    c.expect(rfn_changed > 0, "no RFN tensor moved");
    c.note("stage-2 moved " + std::to_string(rfn_changed) + " RFN tensors, 0 frozen");
}

// 4. strategy oracles

void strategies(Checks& c) {
    double worst = 0;
    for (std::uint64_t s = 0; s < 4; ++s) {
        const Td a = random_tensor(Shape{1, 6, 8, 8}, 100 + s, 0, 1), b = random_tensor(Shape{1, 6, 8, 8}, 200 + s, 0, 1);
        const double e_l1 = max_abs_diff(strategy::fuse_l1norm(a, b), oracle::l1_oracle(a, b, 1));
        const double e_nuc = max_abs_diff(strategy::fuse_nuclear(a, b), oracle::nuclear_oracle(a, b));
        const double e_sca = max_abs_diff(strategy::fuse_sca(a, b), oracle::sca_oracle(a, b));
        c.expect(e_l1 <= 1e-8, "l1 " + fmt(e_l1));
        c.expect(e_nuc <= 1e-8, "nuclear " + fmt(e_nuc));
        c.expect(e_sca <= 1e-8, "sca " + fmt(e_sca));
        worst = std::max({worst, e_l1, e_nuc, e_sca});

        const Td m = random_tensor(Shape{1, 1, 8, 8}, 300 + s, -1, 1);
        const std::vector<double> flat(m.data().begin(), m.data().end());
        const double e_norm = std::abs(strategy::nuclear_norm(flat, 8, 8) - oracle::jacobi_nuclear_norm(flat, 8, 8));
        c.expect(e_norm <= 1e-8, "nuclear norm " + fmt(e_norm));
        worst = std::max(worst, e_norm);
    }
    c.note("worst deviation " + fmt(worst));
}

// 5. metric oracles

void metric_oracles(Checks& c) {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const Image f = random_image(8, 8, 10 + s), ir = random_image(8, 8, 20 + s), vi = random_image(8, 8, 30 + s);
        const double e_en = std::abs(metrics::entropy(f) - oracle::oracle_entropy(f));
        c.expect(e_en <= 1e-12, "entropy " + fmt(e_en));

        double mean = 0, var = 0;
        for (double v : f.pixels) mean += v;
        mean /= double(f.size());
        for (double v : f.pixels) var += (v - mean) * (v - mean);
        const double e_sd = std::abs(metrics::sd(f) - 255.0 * std::sqrt(var / double(f.size())));
        c.expect(e_sd <= 1e-9, "sd " + fmt(e_sd));

        const double e_mi = std::abs(metrics::mi(f, ir, vi) - (oracle::oracle_mi(f, ir) + oracle::oracle_mi(f, vi)));
        c.expect(e_mi <= 1e-12, "mi " + fmt(e_mi));

        std::vector<double> d1, d2;
        for (std::size_t i = 0; i < f.size(); ++i) {
            d1.push_back(f.pixels[i] - vi.pixels[i]);
            d2.push_back(f.pixels[i] - ir.pixels[i]);
        }
        const double scd_ref = oracle::oracle_pearson(d1, ir.pixels) + oracle::oracle_pearson(d2, vi.pixels);
        const double e_scd = std::abs(metrics::scd(f, ir, vi).value - scd_ref);
        c.expect(e_scd <= 1e-12, "scd " + fmt(e_scd));
    }

    const Image x = random_image(32, 32, 40);
    const double s = ssim_plane<double>(x.pixels, x.pixels, 32, 32).ssim;
    c.expect(std::abs(s - 1.0) <= 1e-9, "ssim(x,x) " + fmt(s));
    const auto scene = data::synth_pair(192, 41);
    const double ms = metrics::ms_ssim(scene.vi, scene.vi);
    c.expect(std::abs(ms - 1.0) <= 1e-9, "ms_ssim(x,x) " + fmt(ms));
    c.expect(metrics::ms_ssim_levels(192, 192) == 5, "expected 5 levels at 192");

    const double self = metrics::nabf(scene.vi, scene.vi, scene.vi);
    c.expect(self == 0.0, "nabf(x,x,x) " + fmt(self));
    Image blend(192, 192);
    for (std::size_t i = 0; i < blend.size(); ++i) blend.pixels[i] = 0.5 * (scene.ir.pixels[i] + scene.vi.pixels[i]);
    const double clean = metrics::nabf(blend, scene.ir, scene.vi);
    for (double fraction : {0.01, 0.05}) {
        const double noisy = metrics::nabf(oracle::salt_and_pepper(blend, fraction, 42), scene.ir, scene.vi);
        c.expect(noisy > clean, "noise " + fmt(fraction) + " gave " + fmt(noisy) + " <= " + fmt(clean));
    }
}

// 6. desk-scale convergence

void convergence(Checks& c) {
    const auto t0 = Clock::now();
    test::TempDir dir;
    data::write_synthetic_corpus(dir.path(), {16, 64, 7});
    const auto single = data::load_corpus(dir / "auto", data::CorpusMode::single, 64);
    const auto paired = data::load_corpus(dir.path(), data::CorpusMode::paired, 64);
    c.expect(single.size() == 32, "stage-1 corpus has " + std::to_string(single.size()) + " images");

    TrainConfig cfg;
    cfg.image_size = 64;
    cfg.lr = 1e-4;
    cfg.epochs = 1000;
    cfg.max_steps = 200;
    cfg.checkpoint_out = dir / "s1.rfnn";
    const auto s1 = train_stage1<float>(cfg, single);
    const auto l1 = smoothed(s1.history);
    c.expect(s1.history.size() == 200, "stage 1 ran " + std::to_string(s1.history.size()) + " steps");
    c.expect(l1.final <= 0.5 * l1.initial, "stage 1 " + fmt(l1.initial) + " -> " + fmt(l1.final));

    TrainConfig cfg2 = cfg;
    cfg2.stage = Stage::rfn;
    cfg2.checkpoint_out = dir / "s2.rfnn";
    const auto s2 = train_stage2<float>(cfg2, paired, load_checkpoint<float>(dir / "s1.rfnn"));
    const auto l2 = smoothed(s2.history);
    c.expect(s2.history.size() == 200, "stage 2 ran " + std::to_string(s2.history.size()) + " steps");
    c.expect(l2.final <= 0.5 * l2.initial, "stage 2 " + fmt(l2.initial) + " -> " + fmt(l2.final));

    const auto w = load_checkpoint<float>(dir / "s2.rfnn");
    for (std::size_t i = 0; i < paired.size(); ++i) {
        write_image(to_image(fuse_forward(data::make_pair<float>(paired, i), w)), dir / ("fused_" + paired.ids[i] + ".png"));
    }
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 600.0, "wall time " + fmt(elapsed) + " s");
    c.note("L_auto " + fmt(l1.initial) + " -> " + fmt(l1.final) + ", L_RFN " + fmt(l2.initial) + " -> " +
           fmt(l2.final) + ", " + fmt(elapsed) + " s");
}

// 7. directional ablations

struct AblationScores {
    double ssim_a700 = 0, ssim_a10 = 0;
    double scd_two = 0, scd_one = 0;
    double rec_nest = 0, rec_flat = 0;
};

template <typename F>
double mean_over_pairs(const data::Dataset& ds, F&& f) {
    double s = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) s += f(i);
    return s / double(ds.size());
}

AblationScores ablation_run(std::uint64_t seed, const data::Dataset& single, const data::Dataset& paired,
                            const data::Dataset& held) {
    TrainConfig cfg;
    cfg.image_size = 64;
    cfg.lr = 1e-3;
    cfg.epochs = 1000;
    cfg.max_steps = 200;
    cfg.seed = seed;
    cfg.arch = ArchitectureConfig::with_widths(8, {16, 24, 32, 40});

    AblationScores r;
    const auto nest = train_stage1<float>(cfg, single);
    TrainConfig flat_cfg = cfg;
    flat_cfg.arch.nest_connections = false;
    const auto flat = train_stage1<float>(flat_cfg, single);
    auto reconstruction = [&](const ModelWeights<float>& w) {
        return mean_over_pairs(held, [&](std::size_t i) {
            double s = 0;
            for (const Image* img : {&held.ir[i], &held.vi[i]}) {
                const auto x = to_tensor<float>(*img);
                NoGradGuard guard;
                s += loss::l_auto(decode(encode(Var<float>::leaf(x), w), w), Var<float>::leaf(x)).total.value().item();
            }
            return s / 2;
        });
    };
    r.rec_nest = reconstruction(nest.weights);
    r.rec_flat = reconstruction(flat.weights);

    TrainConfig s2 = cfg;
    s2.stage = Stage::rfn;
    const auto a700 = train_stage2<float>(s2, paired, nest.weights);
    s2.stage2.alpha = 10.0;
    const auto a10 = train_stage2<float>(s2, paired, nest.weights);
    auto ssim_vi = [&](const ModelWeights<float>& w) {
        return mean_over_pairs(held, [&](std::size_t i) {
            const Image o = to_image(fuse_forward(data::make_pair<float>(held, i), w));
            return ssim_plane<double>(o.pixels, held.vi[i].pixels, o.height, o.width).ssim;
        });
    };
    r.ssim_a700 = ssim_vi(a700.weights);
    r.ssim_a10 = ssim_vi(a10.weights);

    TrainConfig one = cfg;
    one.stage = Stage::one_stage;
    one.max_steps = 2 * cfg.max_steps;
    const auto joint = train_one_stage<float>(one, paired);
    auto scd = [&](const ModelWeights<float>& w) {
        return mean_over_pairs(paired, [&](std::size_t i) {
            const Image o = to_image(fuse_forward(data::make_pair<float>(paired, i), w));
            return metrics::scd(o, paired.ir[i], paired.vi[i]).value;
        });
    };
    r.scd_two = scd(a700.weights);
    r.scd_one = scd(joint.weights);
    return r;
}

void ablations(Checks& c) {
    test::TempDir dir;
    data::write_synthetic_corpus(dir / "train", {16, 64, 7});
    data::write_synthetic_corpus(dir / "held", {8, 64, 99});
    const auto single = data::load_corpus(dir / "train/auto", data::CorpusMode::single, 64);
    const auto paired = data::load_corpus(dir / "train", data::CorpusMode::paired, 64);
    const auto held = data::load_corpus(dir / "held", data::CorpusMode::paired, 64);
    for (std::uint64_t seed : {1u, 2u}) {
        const AblationScores r = ablation_run(seed, single, paired, held);
        const std::string s = "seed " + std::to_string(seed);
        c.expect(r.ssim_a700 > r.ssim_a10, s + " (a) " + fmt(r.ssim_a700) + " <= " + fmt(r.ssim_a10));
        c.expect(r.scd_two >= r.scd_one, s + " (b) " + fmt(r.scd_two) + " < " + fmt(r.scd_one));
        c.expect(r.rec_nest <= r.rec_flat, s + " (c) " + fmt(r.rec_nest) + " > " + fmt(r.rec_flat));
        c.note(s + ": ssim " + fmt(r.ssim_a700) + " vs " + fmt(r.ssim_a10) + ", scd " + fmt(r.scd_two) + " vs " +
               fmt(r.scd_one) + ", rec " + fmt(r.rec_nest) + " vs " + fmt(r.rec_flat));
        std::fflush(stdout);
    }
}

// 8. serialization

template <typename T>
void round_trip(Checks& c, const std::filesystem::path& path, const char* label) {
    const auto w = init_weights<T>(ArchitectureConfig{}, 21);
    save_checkpoint(w, path);
    const auto back = load_checkpoint<T>(path);
    const ImagePair<T> pair{random_tensor<T>(Shape{1, 1, 70, 90}, 1, 0, 1), random_tensor<T>(Shape{1, 1, 70, 90}, 2, 0, 1),
                            "p"};
    c.expect(fuse_forward(pair, w) == fuse_forward(pair, back), std::string(label) + " fuse output changed");
    for (auto group : {ParameterGroup::encoder, ParameterGroup::rfn, ParameterGroup::decoder}) {
        c.expect(w.digest(group) == back.digest(group), std::string(label) + " digest changed");
    }
}

void serialization(Checks& c) {
    test::TempDir dir;
    round_trip<float>(c, dir / "f.rfnn", "float32");
    round_trip<double>(c, dir / "d.rfnn", "float64");

    std::ifstream in(dir / "f.rfnn", std::ios::binary);
    const std::string good{std::istreambuf_iterator<char>(in), {}};
    auto rejected = [&](std::string bytes, const std::string& what) {
        std::ofstream(dir / "bad.rfnn", std::ios::binary | std::ios::trunc) << bytes;
        try {
            load_checkpoint<float>(dir / "bad.rfnn");
            c.expect(false, what + " accepted");
        } catch (const FormatError&) {
            c.expect(true, what);
        } catch (const std::exception& e) {
            c.expect(false, what + " raised " + e.what());
        }
    };
    std::string magic = good;
    magic[0] = 'X';
    rejected(magic, "bad magic");
    std::string version = good;
    version[4] = 9;
    rejected(version, "bad version");
    rejected(good.substr(0, good.size() / 2), "truncated");
    rejected(good.substr(0, 10), "truncated header");
    rejected(good + "x", "trailing bytes");
    std::string dtype = good;
    const std::size_t name_len = std::size_t(std::uint8_t(good[12])) | std::size_t(std::uint8_t(good[13])) << 8;
    dtype[14 + name_len] = 7;
    rejected(dtype, "bad dtype");
}

}  // namespace
}  // namespace rfn

int main() {
    using namespace rfn;
    const std::pair<const char*, std::function<void(Checks&)>> criteria[] = {
        {"gradient suite", gradient_suite},
        {"loss identities", loss_identities},
        {"architecture invariants", architecture},
        {"strategy oracles", strategies},
        {"metric oracles", metric_oracles},
        {"desk-scale convergence", convergence},
        {"directional ablations", ablations},
        {"serialization", serialization},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, run] : criteria) {
        ++n;
        Checks c;
        const auto t0 = Clock::now();
        try {
            run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        failed += !c.passed();
        std::printf("criterion %d: %s  %s (%s; %.1f s)\n", n, c.passed() ? "PASS" : "FAIL", name, c.summary().c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", n - failed, n);
    return failed == 0 ? 0 : 1;
}
