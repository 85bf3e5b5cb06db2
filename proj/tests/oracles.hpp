#pragma once

// Brute-force re-implementations used as references by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "rfn/image.hpp"
#include "rfn/random.hpp"
#include "rfn/tensor.hpp"

namespace rfn::oracle {

using Td = Tensor<double>;

// One-sided Jacobi: orthogonalise column pairs until every pair is orthogonal; the
// singular values are the resulting column norms.
inline double jacobi_nuclear_norm(std::vector<double> a, std::size_t rows, std::size_t cols) {
    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0;
        for (std::size_t i = 0; i < rows; ++i) s += a[i * cols + p] * a[i * cols + q];
        return s;
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < cols; ++p)
            for (std::size_t q = p + 1; q < cols; ++q) {
                const double alpha = col_dot(p, p), beta = col_dot(q, q), gamma = col_dot(p, q);
                if (std::abs(gamma) <= 1e-300) continue;
                off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
                const double zeta = (beta - alpha) / (2 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
                const double c = 1 / std::sqrt(1 + t * t), s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double ap = a[i * cols + p], aq = a[i * cols + q];
                    a[i * cols + p] = c * ap - s * aq;
                    a[i * cols + q] = s * ap + c * aq;
                }
            }
        if (off < 1e-15) break;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::sqrt(col_dot(j, j));
    return total;
}

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.5 : num / den; }

// Per-pixel re-computation of the l1-norm rule.
inline Td l1_oracle(const Td& a, const Td& b, int radius) {
    const auto& s = a.shape();
    const int H = int(s.h()), W = int(s.w());
    auto act = [&](const Td& t, std::size_t n, int y, int x) {
        double v = 0;
        for (std::size_t c = 0; c < s.c(); ++c) v += std::abs(t.at(n, c, std::size_t(y), std::size_t(x)));
        return v;
    };
    Td out(s);
    for (std::size_t n = 0; n < s.n(); ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double sa = 0, sb = 0;
                int cnt = 0;
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
                        sa += act(a, n, yy, xx);
                        sb += act(b, n, yy, xx);
                        ++cnt;
                    }
                sa /= cnt;
                sb /= cnt;
                const double wa = safe_ratio(sa, sa + sb);
                for (std::size_t c = 0; c < s.c(); ++c) {
                    const auto yy = std::size_t(y), xx = std::size_t(x);
                    out.at(n, c, yy, xx) = wa * a.at(n, c, yy, xx) + (1 - wa) * b.at(n, c, yy, xx);
                }
            }
    return out;
}

inline Td nuclear_oracle(const Td& a, const Td& b) {
    const auto& s = a.shape();
    Td out(s);
    for (std::size_t n = 0; n < s.n(); ++n)
        for (std::size_t c = 0; c < s.c(); ++c) {
            std::vector<double> pa, pb;
            for (std::size_t y = 0; y < s.h(); ++y)
                for (std::size_t x = 0; x < s.w(); ++x) {
                    pa.push_back(a.at(n, c, y, x));
                    pb.push_back(b.at(n, c, y, x));
                }
            const double na = jacobi_nuclear_norm(pa, s.h(), s.w()), nb = jacobi_nuclear_norm(pb, s.h(), s.w());
            const double wa = safe_ratio(na, na + nb);
            for (std::size_t y = 0; y < s.h(); ++y)
                for (std::size_t x = 0; x < s.w(); ++x)
                    out.at(n, c, y, x) = wa * a.at(n, c, y, x) + (1 - wa) * b.at(n, c, y, x);
        }
    return out;
}

inline Td sca_oracle(const Td& a, const Td& b) {
    const Td spatial = l1_oracle(a, b, 0);
    const auto& s = a.shape();
    Td out(s);
    for (std::size_t n = 0; n < s.n(); ++n)
        for (std::size_t c = 0; c < s.c(); ++c) {
            double pa = 0, pb = 0;
            for (std::size_t y = 0; y < s.h(); ++y)
                for (std::size_t x = 0; x < s.w(); ++x) {
                    pa += a.at(n, c, y, x);
                    pb += b.at(n, c, y, x);
                }
            pa /= double(s.h() * s.w());
            pb /= double(s.h() * s.w());
            const double wa = safe_ratio(pa, pa + pb);
            for (std::size_t y = 0; y < s.h(); ++y)
                for (std::size_t x = 0; x < s.w(); ++x) {
                    const double channel = wa * a.at(n, c, y, x) + (1 - wa) * b.at(n, c, y, x);
                    out.at(n, c, y, x) = 0.5 * (spatial.at(n, c, y, x) + channel);
                }
        }
    return out;
}

inline int oracle_bin(double v) { return std::min(255, int(std::clamp(v, 0.0, 1.0) * 255.999)); }

inline double oracle_entropy(const Image& img) {
    std::map<int, double> counts;
    for (double v : img.pixels) counts[oracle_bin(v)] += 1;
    double h = 0;
    for (const auto& [bin, c] : counts) {
        const double p = c / double(img.size());
        h -= p * std::log(p) / std::log(2.0);
    }
    return h;
}

inline double oracle_mi(const Image& x, const Image& y) {
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> px, py;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int a = oracle_bin(x.pixels[i]), b = oracle_bin(y.pixels[i]);
        joint[{a, b}] += 1;
        px[a] += 1;
        py[b] += 1;
    }
    const double n = double(x.size());
    double mi = 0;
    for (const auto& [ab, c] : joint) {
        const double pxy = c / n, pa = px[ab.first] / n, pb = py[ab.second] / n;
        mi += pxy * std::log2(pxy / (pa * pb));
    }
    return mi;
}

inline double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - sa / n) * (a[i] - sa / n);
        sbb += (b[i] - sb / n) * (b[i] - sb / n);
        sab += (a[i] - sa / n) * (b[i] - sb / n);
    }
    return sab / std::sqrt(saa * sbb);
}

// Edge artifact measure straight from its definition: explicit Sobel kernels,
// atan2 folded onto (-pi/2, pi/2].
inline double oracle_nabf(const Image& f, const Image& a, const Image& b) {
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    const int H = int(f.height), W = int(f.width);
    auto grad = [&](const Image& img, int y, int x, double& g, double& ang) {
        double gx = 0, gy = 0;
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j) {
                const int yy = y + i, xx = x + j;
                const double v = (yy < 0 || xx < 0 || yy >= H || xx >= W) ? 0.0 : img.at(std::size_t(yy), std::size_t(xx));
                gx += kx[i + 1][j + 1] * v;
                gy += ky[i + 1][j + 1] * v;
            }
        g = std::hypot(gx, gy);
        ang = std::atan2(gy, gx);
        if (ang > std::numbers::pi / 2) ang -= std::numbers::pi;
        if (ang <= -std::numbers::pi / 2) ang += std::numbers::pi;
        if (std::abs(ang + std::numbers::pi / 2) < 1e-300) ang = std::numbers::pi / 2;
    };
    auto q = [](double gs, double as, double gf, double af) {
        const double g = (gs == gf) ? 1.0 : std::min(gs, gf) / std::max(gs, gf);
        const double d = std::abs(as - af);
        const double alpha = 1.0 - std::min(d, std::numbers::pi - d) * 2.0 / std::numbers::pi;
        const double qg = 0.9994 / (1 + std::exp(-15.0 * (g - 0.5)));
        const double qa = 0.9879 / (1 + std::exp(-22.0 * (alpha - 0.8)));
        return qg * qa;
    };
    double num = 0, den = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double gf, af, ga, aa, gb, ab;
            grad(f, y, x, gf, af);
            grad(a, y, x, ga, aa);
            grad(b, y, x, gb, ab);
            den += ga + gb;
            if (gf > ga && gf > gb) num += (1 - q(ga, aa, gf, af)) * ga + (1 - q(gb, ab, gf, af)) * gb;
        }
    return den > 0 ? num / den : 0.0;
}

inline Image salt_and_pepper(const Image& img, double fraction, std::uint64_t seed) {
    Rng rng(seed);
    Image out = img;
    for (auto& v : out.pixels)
        if (rng.uniform() < fraction) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return out;
}

}  // namespace rfn::oracle
