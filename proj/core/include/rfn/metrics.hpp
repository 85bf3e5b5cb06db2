#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rfn/image.hpp"
#include "rfn/ssim.hpp"

namespace rfn::metrics {

// All metrics take intensities in [0, 1]. Multi-image metrics require equal
// dimensions and throw InputError otherwise.

/// Shannon entropy in bits of the 256-bin histogram, bin = floor(v * 255.999).
double entropy(const Image& img);

/// Population standard deviation on the 0-255 scale.
double sd(const Image& img);

/// MI(x, y) in bits from the 256x256 joint histogram.
double mutual_information(const Image& x, const Image& y);

/// MI(fused, ir) + MI(fused, vi).
double mi(const Image& fused, const Image& ir, const Image& vi);

/// Sigmoid constants of the edge-preservation model and the weighting exponent.
struct NabfConfig {
    double gamma_g = 0.9994;
    double kappa_g = -15.0;
    double sigma_g = 0.5;
    double gamma_a = 0.9879;
    double kappa_a = -22.0;
    double sigma_a = 0.8;
    double L = 1.0;
};

/// Modified fusion-artifact measure: normalised mass of fused edges stronger than
/// both source edges, weighted by the information lost with respect to each source.
double nabf(const Image& fused, const Image& ir, const Image& vi, const NabfConfig& cfg = {});

struct ScdResult {
    double value = 0.0;
    bool degenerate = false;  // some correlation was undefined and counted as 0
};

/// Pearson correlation; `defined` is false when either input is constant.
struct Correlation {
    double r = 0.0;
    bool defined = false;
};
Correlation pearson(std::span<const double> a, std::span<const double> b);

/// r(fused - vi, ir) + r(fused - ir, vi).
ScdResult scd(const Image& fused, const Image& ir, const Image& vi);

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Number of MS-SSIM levels usable for an h x w image (0 if even one level does not fit).
std::size_t ms_ssim_levels(std::size_t height, std::size_t width, const SsimOptions& options = {});

/// Multi-scale SSIM with 2x2 average downsampling. Uses as many of the five levels as
/// the image allows, renormalising the weights. Negative per-level terms clamp to 0.
double ms_ssim(const Image& x, const Image& y, const SsimOptions& options = {});

/// Reference image(s) for the MS-SSIM column.
enum class MsSsimReference { mean, visible, infrared };

struct MetricOptions {
    NabfConfig nabf;
    SsimOptions ssim;
    MsSsimReference ms_ssim_reference = MsSsimReference::mean;
};

struct MetricReport {
    std::string id;
    double en = 0.0;
    double sd = 0.0;
    double mi = 0.0;
    double nabf = 0.0;
    double scd = 0.0;
    double ms_ssim = 0.0;
    bool scd_degenerate = false;
};

MetricReport evaluate_all(const Image& fused, const Image& ir, const Image& vi, const MetricOptions& options = {},
                          std::string id = {});

/// Arithmetic mean of the reports in the given order; id "MEAN". Throws InputError if empty.
MetricReport mean_report(std::span<const MetricReport> reports);

struct CorpusEvaluation {
    std::vector<MetricReport> rows;  // sorted by id
    MetricReport mean;
};

/// Matches files by stem across the three directories. Any file missing a counterpart
/// raises IngestionError listing every orphan.
CorpusEvaluation evaluate_corpus(const std::filesystem::path& fused_dir, const std::filesystem::path& ir_dir,
                                 const std::filesystem::path& vi_dir, const MetricOptions& options = {});

/// Sorts rows by id and appends the mean.
CorpusEvaluation summarize(std::vector<MetricReport> rows);

/// image,En,SD,MI,Nabf,SCD,MS-SSIM with six decimals, then a MEAN row.
std::string to_csv(const CorpusEvaluation& evaluation);

std::string csv_header();
std::string csv_row(const MetricReport& report);

}  // namespace rfn::metrics
