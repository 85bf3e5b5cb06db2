#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rfn/cli.hpp"
#include "rfn/error.hpp"

namespace rfn::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
        }
    }
}

template <typename V>
void read(const json& obj, const char* key, const std::string& where, V& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError("config: '" + where + "." + key + "' has the wrong type");
    }
}

std::size_t read_size(const json& obj, const char* key, const std::string& where, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("config: '" + where + "." + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

template <typename E>
E read_enum(const json& obj, const char* key, const std::string& where, E fallback,
            std::initializer_list<std::pair<const char*, E>> names) {
    if (!obj.contains(key)) return fallback;
    std::string s;
    read(obj, key, where, s);
    for (const auto& [name, value] : names) {
        if (s == name) return value;
    }
    throw ConfigError("config: '" + where + "." + key + "' has unknown value '" + s + "'");
}

void read_widths(const json& obj, const char* key, const std::string& where, std::array<std::size_t, kScales>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != kScales) {
        throw ConfigError("config: '" + where + "." + key + "' must be an array of 4 integers");
    }
    for (std::size_t i = 0; i < kScales; ++i) {
        if (!v[i].is_number_integer() || v[i].get<long long>() <= 0) {
            throw ConfigError("config: '" + where + "." + key + "' entries must be positive integers");
        }
        out[i] = v[i].get<std::size_t>();
    }
}

}  // namespace

FileConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown(doc, "", {"schema_version", "train", "architecture", "stage1_loss", "stage2_loss", "metrics"});
    if (!doc.contains("schema_version")) throw ConfigError("config: missing 'schema_version'");
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion) {
        throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    }

    FileConfig cfg;
    TrainConfig& t = cfg.train;
    if (doc.contains("train")) {
        const json& j = doc["train"];
        reject_unknown(j, "train", {"image_size", "batch_size", "epochs", "max_steps", "lr", "seed", "optimizer",
                                    "precision", "deterministic"});
        t.image_size = read_size(j, "image_size", "train", t.image_size);
        t.batch_size = read_size(j, "batch_size", "train", t.batch_size);
        t.epochs = read_size(j, "epochs", "train", t.epochs);
        t.max_steps = read_size(j, "max_steps", "train", t.max_steps);
        read(j, "lr", "train", t.lr);
        t.seed = read_size(j, "seed", "train", t.seed);
        t.optimizer = read_enum(j, "optimizer", "train", t.optimizer,
                                {{"adam", OptimizerKind::adam}, {"sgd", OptimizerKind::sgd}});
        cfg.precision = read_enum(j, "precision", "train", cfg.precision,
                                  {{"float32", Precision::float32}, {"float64", Precision::float64}});
        read(j, "deterministic", "train", t.deterministic);
    }
    if (doc.contains("architecture")) {
        const json& j = doc["architecture"];
        reject_unknown(j, "architecture", {"stem_channels", "scale_channels", "rfn_hidden_channels", "nest_connections",
                                           "kernel", "pad_mode", "activation"});
        ArchitectureConfig& a = t.arch;
        a.stem_channels = read_size(j, "stem_channels", "architecture", a.stem_channels);
        read_widths(j, "scale_channels", "architecture", a.scale_channels);
        if (j.contains("scale_channels") && !j.contains("rfn_hidden_channels")) a.rfn_hidden_channels = a.scale_channels;
        read_widths(j, "rfn_hidden_channels", "architecture", a.rfn_hidden_channels);
        read(j, "nest_connections", "architecture", a.nest_connections);
        a.kernel = read_size(j, "kernel", "architecture", a.kernel);
        a.pad_mode = read_enum(j, "pad_mode", "architecture", a.pad_mode,
                               {{"reflect", PadMode::reflect}, {"zero", PadMode::zero}});
        a.activation = read_enum(j, "activation", "architecture", a.activation,
                                 {{"relu", Activation::relu}, {"leaky_relu", Activation::leaky_relu}});
    }
    if (doc.contains("stage1_loss")) {
        const json& j = doc["stage1_loss"];
        reject_unknown(j, "stage1_loss", {"lambda", "normalize"});
        read(j, "lambda", "stage1_loss", t.stage1.lambda);
        read(j, "normalize", "stage1_loss", t.stage1.normalize);
    }
    if (doc.contains("stage2_loss")) {
        const json& j = doc["stage2_loss"];
        reject_unknown(j, "stage2_loss", {"alpha", "w1", "w_vi", "w_ir", "normalize"});
        read(j, "alpha", "stage2_loss", t.stage2.alpha);
        if (j.contains("w1")) {
            std::vector<double> w1;
            read(j, "w1", "stage2_loss", w1);
            if (w1.size() != kScales) throw ConfigError("config: 'stage2_loss.w1' must have 4 entries");
            std::copy(w1.begin(), w1.end(), t.stage2.w1.begin());
        }
        read(j, "w_vi", "stage2_loss", t.stage2.w_vi);
        read(j, "w_ir", "stage2_loss", t.stage2.w_ir);
        read(j, "normalize", "stage2_loss", t.stage2.normalize);
    }
    if (doc.contains("metrics")) {
        const json& j = doc["metrics"];
        reject_unknown(j, "metrics", {"ms_ssim_reference", "nabf"});
        cfg.metrics.ms_ssim_reference =
            read_enum(j, "ms_ssim_reference", "metrics", cfg.metrics.ms_ssim_reference,
                      {{"mean", metrics::MsSsimReference::mean},
                       {"visible", metrics::MsSsimReference::visible},
                       {"infrared", metrics::MsSsimReference::infrared}});
        if (j.contains("nabf")) {
            const json& n = j["nabf"];
            reject_unknown(n, "metrics.nabf", {"gamma_g", "kappa_g", "sigma_g", "gamma_a", "kappa_a", "sigma_a", "L"});
            auto& c = cfg.metrics.nabf;
            read(n, "gamma_g", "metrics.nabf", c.gamma_g);
            read(n, "kappa_g", "metrics.nabf", c.kappa_g);
            read(n, "sigma_g", "metrics.nabf", c.sigma_g);
            read(n, "gamma_a", "metrics.nabf", c.gamma_a);
            read(n, "kappa_a", "metrics.nabf", c.kappa_a);
            read(n, "sigma_a", "metrics.nabf", c.sigma_a);
            read(n, "L", "metrics.nabf", c.L);
        }
    }
    t.validate();
    return cfg;
}

FileConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string default_config_json() {
    const FileConfig d;
    const TrainConfig& t = d.train;
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["train"] = {{"image_size", t.image_size}, {"batch_size", t.batch_size},
                    {"epochs", t.epochs},         {"max_steps", t.max_steps},
                    {"lr", t.lr},                 {"seed", t.seed},
                    {"optimizer", "adam"},        {"precision", "float32"},
                    {"deterministic", t.deterministic}};
    doc["architecture"] = {{"stem_channels", t.arch.stem_channels},
                           {"scale_channels", t.arch.scale_channels},
                           {"rfn_hidden_channels", t.arch.rfn_hidden_channels},
                           {"nest_connections", t.arch.nest_connections},
                           {"kernel", t.arch.kernel},
                           {"pad_mode", "reflect"},
                           {"activation", "relu"}};
    doc["stage1_loss"] = {{"lambda", t.stage1.lambda}, {"normalize", t.stage1.normalize}};
    doc["stage2_loss"] = {{"alpha", t.stage2.alpha},
                          {"w1", t.stage2.w1},
                          {"w_vi", t.stage2.w_vi},
                          {"w_ir", t.stage2.w_ir},
                          {"normalize", t.stage2.normalize}};
    const auto& n = d.metrics.nabf;
    doc["metrics"] = {{"ms_ssim_reference", "mean"},
                      {"nabf",
                       {{"gamma_g", n.gamma_g},
                        {"kappa_g", n.kappa_g},
                        {"sigma_g", n.sigma_g},
                        {"gamma_a", n.gamma_a},
                        {"kappa_a", n.kappa_a},
                        {"sigma_a", n.sigma_a},
                        {"L", n.L}}}};
    return doc.dump(2) + "\n";
}

}  // namespace rfn::cli
