#include "rfn/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rfn/checkpoint.hpp"
#include "rfn/error.hpp"
#include "rfn/gradcheck_suite.hpp"
#include "rfn/strategies.hpp"

namespace rfn::cli {

namespace {

const std::string kFooter = "Config files are JSON with \"schema_version\": " + std::to_string(kSchemaVersion) +
                            ". Command-line flags override values from --config.";

struct TrainArgs {
    std::string config;
    std::string corpus;
    std::string out;
    std::string loss_csv;
    std::string checkpoint;
    std::string resume;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> max_steps;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> image_size;
    std::optional<std::size_t> start_step;
    std::optional<double> alpha;
    std::optional<double> w_vi;
    std::optional<double> w_ir;
    std::optional<std::string> precision;
    bool deterministic = false;
    bool no_nest = false;
    std::size_t log_every = 10;
};

struct FuseArgs {
    std::string config, checkpoint, ir, vi, out, strategy = "rfn";
};

struct EvaluateArgs {
    std::string config, fused, corpus, ir, vi, out;
};

struct AblateArgs {
    std::string config, checkpoint, corpus, out, fused_dir;
    std::vector<std::string> strategies;
};

struct SynthArgs {
    std::string out;
    std::size_t count = 16;
    std::size_t size = 64;
    std::uint64_t seed = 7;
};

struct GradArgs {
    std::uint64_t seed = 2024;
    std::string fault;
};

FileConfig base_config(const std::string& path) { return path.empty() ? FileConfig{} : load_config(path); }

Precision parse_precision(const std::string& s) {
    if (s == "float32") return Precision::float32;
    if (s == "float64") return Precision::float64;
    throw ConfigError("unknown precision '" + s + "' (expected float32 or float64)");
}

void write_text(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << text;
}

std::filesystem::path default_loss_csv(const std::filesystem::path& checkpoint) {
    std::filesystem::path p = checkpoint;
    p.replace_extension(".loss.csv");
    return p;
}

template <typename T>
int train_impl(Stage stage, FileConfig fc, const TrainArgs& a, std::ostream& err) {
    TrainConfig& cfg = fc.train;
    cfg.stage = stage;
    cfg.checkpoint_out = a.out;
    cfg.loss_csv = a.loss_csv.empty() ? default_loss_csv(a.out) : std::filesystem::path(a.loss_csv);
    cfg.validate();

    const auto mode = stage == Stage::auto_encoder ? data::CorpusMode::single : data::CorpusMode::paired;
    const data::Dataset ds = data::load_corpus(a.corpus, mode, cfg.image_size);
    if (ds.empty()) throw IngestionError("corpus '" + a.corpus + "' contains no images; refusing to train");

    ModelWeights<T> weights;
    if (!a.resume.empty()) {
        weights = load_checkpoint<T>(a.resume, cfg.arch);
    } else if (stage == Stage::rfn) {
        if (a.checkpoint.empty()) throw ConfigError("train-rfn needs --checkpoint (a stage-1 checkpoint)");
        weights = load_checkpoint<T>(a.checkpoint, cfg.arch);
    } else {
        weights = init_weights<T>(cfg.arch, cfg.seed);
    }

    const std::size_t total = planned_steps(cfg, ds.size());
    err << "training " << to_string(stage) << " on " << ds.size() << (mode == data::CorpusMode::paired ? " pairs" : " images")
        << ", " << total << " steps, lr " << cfg.lr << (cfg.deterministic ? " (deterministic SGD)" : "") << '\n';
    const StepCallback log = [&](const LossRecord& r) {
        if (a.log_every > 0 && ((r.step + 1) % a.log_every == 0 || r.step + 1 == total)) {
            err << "step " << r.step + 1 << '/' << total << " loss " << r.loss << '\n';
        }
    };
    TrainResult<T> result;
    switch (stage) {
        case Stage::auto_encoder: result = train_stage1<T>(cfg, ds, std::move(weights), log); break;
        case Stage::rfn: result = train_stage2<T>(cfg, ds, std::move(weights), log); break;
        case Stage::one_stage: result = train_one_stage<T>(cfg, ds, std::move(weights), log); break;
    }
    const SmoothedLoss s = smoothed(result.history);
    err << "smoothed loss " << s.initial << " -> " << s.final << "; checkpoint " << cfg.checkpoint_out.string()
        << ", loss history " << cfg.loss_csv.string() << '\n';
    return kOk;
}

int cmd_train(Stage stage, const TrainArgs& a, std::ostream& err) {
    FileConfig fc = base_config(a.config);
    TrainConfig& t = fc.train;
    if (a.seed) t.seed = *a.seed;
    if (a.lr) t.lr = *a.lr;
    if (a.epochs) t.epochs = *a.epochs;
    if (a.max_steps) t.max_steps = *a.max_steps;
    if (a.batch_size) t.batch_size = *a.batch_size;
    if (a.image_size) t.image_size = *a.image_size;
    if (a.start_step) t.start_step = *a.start_step;
    if (a.alpha) t.stage2.alpha = *a.alpha;
    if (a.w_vi) t.stage2.w_vi = *a.w_vi;
    if (a.w_ir) t.stage2.w_ir = *a.w_ir;
    if (a.deterministic) t.deterministic = true;
    if (a.no_nest) t.arch.nest_connections = false;
    if (a.precision) fc.precision = parse_precision(*a.precision);
    return fc.precision == Precision::float64 ? train_impl<double>(stage, fc, a, err)
                                              : train_impl<float>(stage, fc, a, err);
}

template <typename T>
int fuse_impl(const FileConfig& fc, const FuseArgs& a, std::ostream& err) {
    const auto method = strategy::parse_fusion_method(a.strategy);
    const ModelWeights<T> w = load_checkpoint<T>(a.checkpoint, fc.train.arch);
    const Image ir = read_image(a.ir);
    const Image vi = read_image(a.vi);
    if (ir.height != vi.height || ir.width != vi.width) {
        throw InputError("image sizes differ: " + a.ir + " is " + std::to_string(ir.height) + "x" +
                         std::to_string(ir.width) + ", " + a.vi + " is " + std::to_string(vi.height) + "x" +
                         std::to_string(vi.width));
    }
    const ImagePair<T> pair{to_tensor<T>(ir), to_tensor<T>(vi), std::filesystem::path(a.ir).stem().string()};
    const auto parent = std::filesystem::path(a.out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    write_image(to_image(strategy::fuse_with(pair, w, method)), a.out);
    err << "fused (" << strategy::to_string(method) << ") -> " << a.out << '\n';
    return kOk;
}

int cmd_fuse(const FuseArgs& a, std::ostream& err) {
    const FileConfig fc = base_config(a.config);
    strategy::parse_fusion_method(a.strategy);
    return fc.precision == Precision::float64 ? fuse_impl<double>(fc, a, err) : fuse_impl<float>(fc, a, err);
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    const FileConfig fc = base_config(a.config);
    metrics::CorpusEvaluation ev;
    if (std::filesystem::is_directory(a.fused)) {
        if (a.corpus.empty()) throw ConfigError("evaluate: a fused directory needs --corpus ROOT (with ir/ and vi/)");
        ev = metrics::evaluate_corpus(a.fused, std::filesystem::path(a.corpus) / "ir",
                                      std::filesystem::path(a.corpus) / "vi", fc.metrics);
    } else {
        if (a.ir.empty() || a.vi.empty()) throw ConfigError("evaluate: a single fused image needs --ir and --vi");
        const Image f = read_image(a.fused), ir = read_image(a.ir), vi = read_image(a.vi);
        ev = metrics::summarize(
            {metrics::evaluate_all(f, ir, vi, fc.metrics, std::filesystem::path(a.fused).filename().string())});
    }
    for (const auto& r : ev.rows) {
        if (r.scd_degenerate) err << "warning: SCD undefined term counted as 0 for " << r.id << '\n';
    }
    write_text(metrics::to_csv(ev), a.out, out);
    return kOk;
}

template <typename T>
int ablate_impl(const FileConfig& fc, const AblateArgs& a, const std::vector<strategy::FusionMethod>& methods,
                std::ostream& out, std::ostream& err) {
    const ModelWeights<T> w = load_checkpoint<T>(a.checkpoint, fc.train.arch);
    const data::Dataset ds = data::load_corpus(a.corpus, data::CorpusMode::paired, 0);
    if (ds.empty()) throw IngestionError("corpus '" + a.corpus + "' contains no pairs");

    std::ostringstream table;
    table << "strategy," << metrics::csv_header().substr(std::string("image,").size()) << '\n';
    for (const auto method : methods) {
        std::vector<metrics::MetricReport> rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const ImagePair<T> pair = data::make_pair<T>(ds, i);
            const Image fused = quantize8(to_image(strategy::fuse_with(pair, w, method)));
            if (!a.fused_dir.empty()) {
                const auto dir = std::filesystem::path(a.fused_dir) / strategy::to_string(method);
                std::filesystem::create_directories(dir);
                write_image(fused, dir / (ds.ids[i] + ".png"));
            }
            rows.push_back(metrics::evaluate_all(fused, ds.ir[i], ds.vi[i], fc.metrics, ds.ids[i]));
        }
        metrics::MetricReport mean = metrics::summarize(std::move(rows)).mean;
        mean.id = strategy::to_string(method);
        table << metrics::csv_row(mean) << '\n';
        err << "evaluated " << mean.id << " on " << ds.size() << " pairs\n";
    }
    write_text(table.str(), a.out, out);
    return kOk;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    const FileConfig fc = base_config(a.config);
    std::vector<strategy::FusionMethod> methods;
    for (const auto& s : a.strategies) {
        std::stringstream parts(s);
        std::string item;
        while (std::getline(parts, item, ',')) {
            if (item.empty()) continue;
            const auto m = strategy::parse_fusion_method(item);
            if (m != strategy::FusionMethod::rfn && std::find(methods.begin(), methods.end(), m) == methods.end()) {
                methods.push_back(m);
            }
        }
    }
    methods.push_back(strategy::FusionMethod::rfn);
    return fc.precision == Precision::float64 ? ablate_impl<double>(fc, a, methods, out, err)
                                              : ablate_impl<float>(fc, a, methods, out, err);
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out, std::ostream& err) {
    if (!a.fault.empty() && a.fault != "conv2d") throw ConfigError("unknown fault '" + a.fault + "'");
    std::optional<testing::ScopedFault> fault;
    if (!a.fault.empty()) fault.emplace(testing::Fault::conv2d_backward);
    SuiteOptions opts;
    opts.seed = a.seed;
    const SuiteReport report = run_gradcheck_suite(opts);
    out << format_report(report);
    if (report.passed()) return kOk;
    err << "gradient check failed for:";
    for (const auto& e : report.entries) {
        if (!e.passed()) err << ' ' << e.name;
    }
    err << '\n';
    return kGradCheckFailed;
}

int cmd_synth(const SynthArgs& a, std::ostream& err) {
    data::write_synthetic_corpus(a.out, {a.count, a.size, a.seed});
    err << "wrote " << a.count << " synthetic pairs (" << a.size << "x" << a.size << ") to " << a.out << '\n';
    return kOk;
}

void add_train_options(CLI::App* sub, TrainArgs& a, bool needs_stage1) {
    sub->add_option("--config", a.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--corpus", a.corpus, needs_stage1 || sub->get_name() == "train-one-stage"
                                              ? "Paired corpus root holding ir/ and vi/"
                                              : "Directory of training images")
        ->required();
    sub->add_option("--out", a.out, "Final checkpoint path; per-epoch checkpoints go next to it")->required();
    sub->add_option("--loss-csv", a.loss_csv, "Loss history CSV (default: <out stem>.loss.csv)");
    if (needs_stage1) sub->add_option("--checkpoint", a.checkpoint, "Stage-1 checkpoint to start from");
    sub->add_option("--seed", a.seed, "Seed for initialisation and batch order");
    sub->add_option("--lr", a.lr, "Learning rate");
    sub->add_option("--epochs", a.epochs, "Number of epochs");
    sub->add_option("--max-steps", a.max_steps, "Stop after this many steps (0: no limit)");
    sub->add_option("--batch-size", a.batch_size, "Batch size");
    sub->add_option("--image-size", a.image_size, "Training resolution (multiple of 16)");
    sub->add_option("--precision", a.precision, "float32 or float64");
    sub->add_flag("--deterministic", a.deterministic, "Plain SGD with fixed batch order; enables exact resume");
    sub->add_option("--resume", a.resume, "Checkpoint to resume from");
    sub->add_option("--start-step", a.start_step, "Global step of the --resume checkpoint");
    sub->add_option("--log-every", a.log_every, "Progress line to stderr every N steps (0: quiet)");
    if (!needs_stage1) sub->add_flag("--no-nest", a.no_nest, "Decoder without nest connections");
    if (sub->get_name() != "train-auto") {
        sub->add_option("--alpha", a.alpha, "Weight of the detail loss");
        sub->add_option("--w-vi", a.w_vi, "Visible weight in the feature target");
        sub->add_option("--w-ir", a.w_ir, "Infrared weight in the feature target");
    }
    sub->footer(kFooter);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Infrared/visible image fusion with residual fusion networks and a nest-connected decoder"};
    app.name(argc > 0 ? std::filesystem::path(argv[0]).filename().string() : "rfnnest");
    app.footer(kFooter + "\nExit codes: 0 ok, 2 config, 3 data, 4 numeric, 5 gradient check.");
    bool print_config = false;
    app.add_flag("--print-default-config", print_config, "Print the default JSON config and exit");
    app.require_subcommand(0, 1);

    TrainArgs ta, tr, to;
    auto* train_auto = app.add_subcommand("train-auto", "Stage 1: train encoder and decoder as an autoencoder");
    add_train_options(train_auto, ta, false);
    auto* train_rfn = app.add_subcommand("train-rfn", "Stage 2: train the fusion blocks with encoder/decoder frozen");
    add_train_options(train_rfn, tr, true);
    auto* train_one = app.add_subcommand("train-one-stage", "Train everything jointly with the fusion loss");
    add_train_options(train_one, to, false);

    FuseArgs fa;
    auto* fuse = app.add_subcommand("fuse", "Fuse one infrared/visible pair into an 8-bit grayscale image");
    fuse->add_option("--config", fa.config, "JSON config file")->check(CLI::ExistingFile);
    fuse->add_option("--checkpoint", fa.checkpoint, "Trained checkpoint")->required();
    fuse->add_option("--ir", fa.ir, "Infrared image (.png or .pgm)")->required();
    fuse->add_option("--vi", fa.vi, "Visible image (.png or .pgm)")->required();
    fuse->add_option("--out", fa.out, "Output image (.png or .pgm)")->required();
    fuse->add_option("--strategy", fa.strategy, "rfn, add, max, l1, nuclear or sca")->capture_default_str();
    fuse->footer(kFooter);

    EvaluateArgs ea;
    auto* evaluate = app.add_subcommand("evaluate", "Compute En, SD, MI, Nabf, SCD and MS-SSIM as CSV");
    evaluate->add_option("--config", ea.config, "JSON config file")->check(CLI::ExistingFile);
    evaluate->add_option("--fused", ea.fused, "Fused image, or directory of fused images")->required();
    evaluate->add_option("--corpus", ea.corpus, "Corpus root with ir/ and vi/ (directory mode)");
    evaluate->add_option("--ir", ea.ir, "Infrared source (single-image mode)");
    evaluate->add_option("--vi", ea.vi, "Visible source (single-image mode)");
    evaluate->add_option("--out", ea.out, "Write the CSV here instead of stdout");
    evaluate->footer(kFooter);

    AblateArgs aa;
    auto* ablate = app.add_subcommand("ablate", "Compare fusion strategies on a paired corpus (rfn always included)");
    ablate->add_option("--config", aa.config, "JSON config file")->check(CLI::ExistingFile);
    ablate->add_option("--checkpoint", aa.checkpoint, "Trained checkpoint")->required();
    ablate->add_option("--corpus", aa.corpus, "Corpus root with ir/ and vi/")->required();
    ablate->add_option("--strategies", aa.strategies, "Comma-separated subset of add,max,l1,nuclear,sca")
        ->delimiter(',');
    ablate->add_option("--out", aa.out, "Write the table here instead of stdout");
    ablate->add_option("--fused-dir", aa.fused_dir, "Also save fused images under DIR/<strategy>/");
    ablate->footer(kFooter);

    GradArgs ga;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    gradcheck->add_option("--seed", ga.seed, "Seed for the random shapes and values")->capture_default_str();
    gradcheck->add_option("--inject-fault", ga.fault, "")->group("");
    gradcheck->footer(kFooter);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Write the synthetic fixture corpus (ir/, vi/, auto/)");
    synth->add_option("--out", sa.out, "Corpus root to create")->required();
    synth->add_option("--count", sa.count, "Number of scenes")->capture_default_str();
    synth->add_option("--size", sa.size, "Image side length")->capture_default_str();
    synth->add_option("--seed", sa.seed, "Generator seed")->capture_default_str();
    synth->footer(kFooter);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (print_config) {
            out << default_config_json();
            return kOk;
        }
        if (train_auto->parsed()) return cmd_train(Stage::auto_encoder, ta, err);
        if (train_rfn->parsed()) return cmd_train(Stage::rfn, tr, err);
        if (train_one->parsed()) return cmd_train(Stage::one_stage, to, err);
        if (fuse->parsed()) return cmd_fuse(fa, err);
        if (evaluate->parsed()) return cmd_evaluate(ea, out, err);
        if (ablate->parsed()) return cmd_ablate(aa, out, err);
        if (gradcheck->parsed()) return cmd_gradcheck(ga, out, err);
        if (synth->parsed()) return cmd_synth(sa, err);
        err << app.help();
        return kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
}

}  // namespace rfn::cli
