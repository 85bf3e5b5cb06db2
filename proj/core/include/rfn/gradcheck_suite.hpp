#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rfn {

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kWindowedLossTolerance = 1e-3;

struct SuiteEntry {
    std::string name;
    double max_relative_error = 0.0;
    double threshold = 0.0;
    std::size_t shapes = 0;  // random shapes tried
    std::size_t probes = 0;  // perturbed elements over all shapes and inputs
    [[nodiscard]] bool passed() const { return max_relative_error < threshold; }
};

struct SuiteReport {
    std::vector<SuiteEntry> entries;
    [[nodiscard]] bool passed() const;
};

struct SuiteOptions {
    std::uint64_t seed = 2024;
    std::size_t shapes_per_op = 3;
};

/// Gradient checks in double precision for every differentiable op, every loss, the RFN
/// block and the decoder, each on `shapes_per_op` random shapes. Each entry appears once.
SuiteReport run_gradcheck_suite(const SuiteOptions& options = {});

/// One line per entry: name, worst error, threshold, PASS/FAIL.
std::string format_report(const SuiteReport& report);

}  // namespace rfn
