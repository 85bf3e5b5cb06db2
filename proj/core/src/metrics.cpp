#include "rfn/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "rfn/error.hpp"

namespace rfn::metrics {

namespace {

void require_nonempty(const Image& img, const char* what) {
    if (img.empty()) throw InputError(std::string(what) + ": empty image");
}

void require_same_dims(const Image& a, const Image& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw InputError(std::string(what) + ": dimension mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

std::size_t bin_of(double v) {
    const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.999);
    return static_cast<std::size_t>(scaled);
}

double plogp_sum(const std::vector<double>& counts, double total) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / total;
            h -= p * std::log2(p);
        }
    }
    return h;
}

struct Gradient {
    std::vector<double> strength;
    std::vector<double> orientation;
};

// 3x3 Sobel with zero padding outside the image.
Gradient sobel(const Image& img) {
    const std::size_t h = img.height, w = img.width;
    auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return 0.0;
        return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    Gradient g{std::vector<double>(h * w), std::vector<double>(h * w)};
    for (std::size_t yy = 0; yy < h; ++yy) {
        for (std::size_t xx = 0; xx < w; ++xx) {
            const auto y = static_cast<std::ptrdiff_t>(yy), x = static_cast<std::ptrdiff_t>(xx);
            // Symmetric groupings keep the result exactly mirror-consistent.
            const double right = (px(y - 1, x + 1) + px(y + 1, x + 1)) + 2.0 * px(y, x + 1);
            const double left = (px(y - 1, x - 1) + px(y + 1, x - 1)) + 2.0 * px(y, x - 1);
            const double below = (px(y + 1, x - 1) + px(y + 1, x + 1)) + 2.0 * px(y + 1, x);
            const double above = (px(y - 1, x - 1) + px(y - 1, x + 1)) + 2.0 * px(y - 1, x);
            const double gx = right - left;
            const double gy = below - above;
            const std::size_t i = yy * w + xx;
            g.strength[i] = std::sqrt(gx * gx + gy * gy);
            if (gx == 0.0) {
                g.orientation[i] = gy == 0.0 ? 0.0 : std::numbers::pi / 2.0;
            } else {
                g.orientation[i] = std::atan(gy / gx);
            }
        }
    }
    return g;
}

double sigmoid(double gamma, double kappa, double sigma, double v) {
    return gamma / (1.0 + std::exp(kappa * (v - sigma)));
}

// Edge preservation of source s in fused image f at one pixel.
double preservation(double gs, double as, double gf, double af, const NabfConfig& cfg) {
    double g_rel = 1.0;
    if (gs != gf) g_rel = gs > gf ? gf / gs : gs / gf;
    double d = std::abs(as - af);
    d = std::min(d, std::numbers::pi - d);
    const double a_rel = 1.0 - d / (std::numbers::pi / 2.0);
    return sigmoid(cfg.gamma_g, cfg.kappa_g, cfg.sigma_g, g_rel) * sigmoid(cfg.gamma_a, cfg.kappa_a, cfg.sigma_a, a_rel);
}

Image downsample2(const Image& img) {
    Image out(img.height / 2, img.width / 2);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) {
            out.at(y, x) = 0.25 * (img.at(2 * y, 2 * x) + img.at(2 * y, 2 * x + 1) + img.at(2 * y + 1, 2 * x) +
                                   img.at(2 * y + 1, 2 * x + 1));
        }
    }
    return out;
}

std::map<std::string, std::filesystem::path> images_by_stem(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IngestionError("not a directory: '" + dir.string() + "'");
    std::map<std::string, std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        const std::string stem = entry.path().stem().string();
        if (!out.emplace(stem, entry.path()).second) {
            throw IngestionError("ambiguous image stem '" + stem + "' in '" + dir.string() + "'");
        }
    }
    return out;
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double entropy(const Image& img) {
    require_nonempty(img, "entropy");
    std::vector<double> counts(256, 0.0);
    for (double v : img.pixels) counts[bin_of(v)] += 1.0;
    return plogp_sum(counts, static_cast<double>(img.size()));
}

double sd(const Image& img) {
    require_nonempty(img, "sd");
    const double n = static_cast<double>(img.size());
    // shifted by the first pixel so a constant image gives exactly 0
    const double shift = img.pixels.front();
    double mean = 0.0;
    for (double v : img.pixels) mean += v - shift;
    mean /= n;
    double var = 0.0;
    for (double v : img.pixels) var += (v - shift - mean) * (v - shift - mean);
    return std::sqrt(var / n) * 255.0;
}

double mutual_information(const Image& x, const Image& y) {
    require_nonempty(x, "mutual_information");
    require_same_dims(x, y, "mutual_information");
    std::vector<double> joint(256 * 256, 0.0), px(256, 0.0), py(256, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t a = bin_of(x.pixels[i]), b = bin_of(y.pixels[i]);
        joint[a * 256 + b] += 1.0;
        px[a] += 1.0;
        py[b] += 1.0;
    }
    const double n = static_cast<double>(x.size());
    double total = 0.0;
    for (std::size_t a = 0; a < 256; ++a) {
        if (px[a] == 0.0) continue;
        for (std::size_t b = 0; b < 256; ++b) {
            const double c = joint[a * 256 + b];
            if (c == 0.0) continue;
            total += (c / n) * std::log2(c * n / (px[a] * py[b]));
        }
    }
    return std::max(total, 0.0);
}

double mi(const Image& fused, const Image& ir, const Image& vi) {
    require_same_dims(fused, ir, "mi");
    require_same_dims(fused, vi, "mi");
    return mutual_information(fused, ir) + mutual_information(fused, vi);
}

double nabf(const Image& fused, const Image& ir, const Image& vi, const NabfConfig& cfg) {
    require_nonempty(fused, "nabf");
    require_same_dims(fused, ir, "nabf");
    require_same_dims(fused, vi, "nabf");
    const Gradient gf = sobel(fused), ga = sobel(ir), gb = sobel(vi);
    double artifacts = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const double wa = std::pow(ga.strength[i], cfg.L);
        const double wb = std::pow(gb.strength[i], cfg.L);
        norm += wa + wb;
        if (gf.strength[i] > ga.strength[i] && gf.strength[i] > gb.strength[i]) {
            const double qa = preservation(ga.strength[i], ga.orientation[i], gf.strength[i], gf.orientation[i], cfg);
            const double qb = preservation(gb.strength[i], gb.orientation[i], gf.strength[i], gf.orientation[i], cfg);
            artifacts += (1.0 - qa) * wa + (1.0 - qb) * wb;
        }
    }
    return norm > 0.0 ? artifacts / norm : 0.0;
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw InputError("pearson: inputs must be nonempty and equally sized");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return {};
    return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), true};
}

ScdResult scd(const Image& fused, const Image& ir, const Image& vi) {
    require_nonempty(fused, "scd");
    require_same_dims(fused, ir, "scd");
    require_same_dims(fused, vi, "scd");
    std::vector<double> d_vi(fused.size()), d_ir(fused.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        d_vi[i] = fused.pixels[i] - vi.pixels[i];
        d_ir[i] = fused.pixels[i] - ir.pixels[i];
    }
    const Correlation r1 = pearson(d_vi, ir.pixels);
    const Correlation r2 = pearson(d_ir, vi.pixels);
    return {r1.r + r2.r, !r1.defined || !r2.defined};
}

std::size_t ms_ssim_levels(std::size_t height, std::size_t width, const SsimOptions& options) {
    std::size_t levels = 0;
    while (levels < 5 && (height >> levels) >= options.window && (width >> levels) >= options.window) ++levels;
    return levels;
}

double ms_ssim(const Image& x, const Image& y, const SsimOptions& options) {
    require_same_dims(x, y, "ms_ssim");
    const std::size_t levels = ms_ssim_levels(x.height, x.width, options);
    if (levels == 0) {
        throw InputError("ms_ssim: image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                         " is smaller than the " + std::to_string(options.window) + "-pixel window");
    }
    double weight_total = 0.0;
    for (std::size_t l = 0; l < levels; ++l) weight_total += kMsSsimWeights[l];

    Image a = x, b = y;
    double value = 1.0;
    for (std::size_t l = 0; l < levels; ++l) {
        const SsimStats st = ssim_plane<double>(a.pixels, b.pixels, a.height, a.width, options);
        const double term = l + 1 == levels ? st.ssim : st.cs;
        value *= std::pow(std::max(term, 0.0), kMsSsimWeights[l] / weight_total);
        if (l + 1 < levels) {
            a = downsample2(a);
            b = downsample2(b);
        }
    }
    return value;
}

MetricReport evaluate_all(const Image& fused, const Image& ir, const Image& vi, const MetricOptions& options,
                          std::string id) {
    require_same_dims(fused, ir, "evaluate_all");
    require_same_dims(fused, vi, "evaluate_all");
    MetricReport r;
    r.id = std::move(id);
    r.en = entropy(fused);
    r.sd = sd(fused);
    r.mi = mi(fused, ir, vi);
    r.nabf = nabf(fused, ir, vi, options.nabf);
    const ScdResult s = scd(fused, ir, vi);
    r.scd = s.value;
    r.scd_degenerate = s.degenerate;
    switch (options.ms_ssim_reference) {
        case MsSsimReference::mean:
            r.ms_ssim = 0.5 * (ms_ssim(fused, ir, options.ssim) + ms_ssim(fused, vi, options.ssim));
            break;
        case MsSsimReference::visible:
            r.ms_ssim = ms_ssim(fused, vi, options.ssim);
            break;
        case MsSsimReference::infrared:
            r.ms_ssim = ms_ssim(fused, ir, options.ssim);
            break;
    }
    return r;
}

MetricReport mean_report(std::span<const MetricReport> reports) {
    if (reports.empty()) throw InputError("mean_report: no reports");
    MetricReport m;
    m.id = "MEAN";
    for (const auto& r : reports) {
        m.en += r.en;
        m.sd += r.sd;
        m.mi += r.mi;
        m.nabf += r.nabf;
        m.scd += r.scd;
        m.ms_ssim += r.ms_ssim;
        m.scd_degenerate = m.scd_degenerate || r.scd_degenerate;
    }
    const double n = static_cast<double>(reports.size());
    m.en /= n;
    m.sd /= n;
    m.mi /= n;
    m.nabf /= n;
    m.scd /= n;
    m.ms_ssim /= n;
    return m;
}

CorpusEvaluation summarize(std::vector<MetricReport> rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricReport& a, const MetricReport& b) { return a.id < b.id; });
    CorpusEvaluation ev;
    ev.mean = mean_report(rows);
    ev.rows = std::move(rows);
    return ev;
}

CorpusEvaluation evaluate_corpus(const std::filesystem::path& fused_dir, const std::filesystem::path& ir_dir,
                                 const std::filesystem::path& vi_dir, const MetricOptions& options) {
    const auto fused = images_by_stem(fused_dir);
    const auto ir = images_by_stem(ir_dir);
    const auto vi = images_by_stem(vi_dir);

    std::vector<std::string> orphans;
    auto collect = [&](const auto& mine, const auto& other1, const auto& other2) {
        for (const auto& [stem, path] : mine) {
            if (!other1.count(stem) || !other2.count(stem)) orphans.push_back(path.string());
        }
    };
    collect(fused, ir, vi);
    collect(ir, fused, vi);
    collect(vi, fused, ir);
    if (!orphans.empty()) {
        std::string msg = "files without a counterpart:";
        for (const auto& o : orphans) msg += " " + o;
        throw IngestionError(msg);
    }
    if (fused.empty()) throw IngestionError("no images found in '" + fused_dir.string() + "'");

    std::vector<MetricReport> rows;
    rows.reserve(fused.size());
    for (const auto& [stem, path] : fused) {
        const Image f = read_image(path);
        const Image a = read_image(ir.at(stem));
        const Image b = read_image(vi.at(stem));
        if (f.height != a.height || f.width != a.width || f.height != b.height || f.width != b.width) {
            throw IngestionError("dimension mismatch for '" + stem + "'");
        }
        rows.push_back(evaluate_all(f, a, b, options, path.filename().string()));
    }
    return summarize(std::move(rows));
}

std::string csv_header() { return "image,En,SD,MI,Nabf,SCD,MS-SSIM"; }

std::string csv_row(const MetricReport& r) {
    return r.id + "," + fixed6(r.en) + "," + fixed6(r.sd) + "," + fixed6(r.mi) + "," + fixed6(r.nabf) + "," +
           fixed6(r.scd) + "," + fixed6(r.ms_ssim);
}

std::string to_csv(const CorpusEvaluation& ev) {
    std::ostringstream out;
    out << csv_header() << '\n';
    for (const auto& r : ev.rows) out << csv_row(r) << '\n';
    out << csv_row(ev.mean) << '\n';
    return out.str();
}

}  // namespace rfn::metrics
