#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rfn/metrics.hpp"
#include "rfn/training.hpp"

namespace rfn::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
    kGradCheckFailed = 5,
};

enum class Precision { float32, float64 };

/// Everything a JSON config file can set.
struct FileConfig {
    TrainConfig train;
    Precision precision = Precision::float32;
    metrics::MetricOptions metrics;
};

/// Parses a config document. Requires "schema_version": 1; unknown keys anywhere
/// raise ConfigError naming the key.
FileConfig parse_config(const std::string& json_text);
FileConfig load_config(const std::filesystem::path& path);

/// The default configuration as a JSON document.
std::string default_config_json();

/// Runs one command line (argv[0] is the program name). Data goes to `out`, all
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rfn::cli
