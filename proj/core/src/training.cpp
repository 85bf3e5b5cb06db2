#include "rfn/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rfn/checkpoint.hpp"
#include "rfn/error.hpp"

namespace rfn {

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::auto_encoder: return "auto";
        case Stage::rfn: return "rfn";
        case Stage::one_stage: return "one_stage";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (image_size == 0 || image_size % 16 != 0) throw ConfigError("image_size must be a positive multiple of 16");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0 && max_steps == 0) throw ConfigError("epochs must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    arch.validate();
    stage1.validate();
    stage2.validate();
}

std::size_t planned_steps(const TrainConfig& cfg, std::size_t n) {
    const std::size_t total = cfg.epochs * data::steps_per_epoch(n, cfg.batch_size);
    return cfg.max_steps > 0 ? std::min(total, cfg.max_steps) : total;
}

SmoothedLoss smoothed(const std::vector<LossRecord>& history, std::size_t window) {
    if (history.empty() || window == 0) return {};
    const std::size_t k = std::min(window, history.size());
    SmoothedLoss s;
    for (std::size_t i = 0; i < k; ++i) {
        s.initial += history[i].loss;
        s.final += history[history.size() - k + i].loss;
    }
    s.initial /= static_cast<double>(k);
    s.final /= static_cast<double>(k);
    return s;
}

void write_loss_csv(const std::vector<LossRecord>& history, Stage stage, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write loss history '" + path.string() + "'");
    out << (stage == Stage::auto_encoder ? "step,epoch,loss,pixel,ssim\n" : "step,epoch,loss,detail,feature\n");
    out.precision(17);
    for (const auto& r : history) out << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.a << ',' << r.b << '\n';
}

namespace {

template <typename T>
struct StepLoss {
    Var<T> total;
    Var<T> a;
    Var<T> b;
};

std::filesystem::path epoch_path(const std::filesystem::path& out, std::size_t epoch) {
    std::filesystem::path p = out;
    p.replace_filename(out.stem().string() + ".epoch" + std::to_string(epoch) + out.extension().string());
    return p;
}

template <typename T, typename LossFn>
TrainResult<T> run(const TrainConfig& cfg, std::size_t n, ModelWeights<T> weights, LossFn&& loss_fn,
                   const StepCallback& on_step) {
    if (n == 0) throw IngestionError("training dataset is empty");
    const std::size_t steps = planned_steps(cfg, n);
    const std::size_t per_epoch = data::steps_per_epoch(n, cfg.batch_size);
    OptimizerConfig oc;
    oc.kind = cfg.effective_optimizer();
    oc.lr = cfg.lr;
    Optimizer<T> opt(oc);

    TrainResult<T> result;
    for (std::size_t step = cfg.start_step; step < steps; ++step) {
        const auto indices = data::batch_indices(n, cfg.batch_size, cfg.seed, step);
        zero_grad<T>(weights.params());
        StepLoss<T> l = loss_fn(weights, indices);
        LossRecord rec{step, step / per_epoch, static_cast<double>(l.total.value().item()),
                       static_cast<double>(l.a.value().item()), static_cast<double>(l.b.value().item())};
        if (!std::isfinite(rec.loss)) {
            std::ostringstream msg;
            msg << "non-finite " << to_string(cfg.stage) << " loss at step " << step << " (lr " << cfg.lr << ")";
            throw NumericError(msg.str());
        }
        backward(l.total);
        opt.step(weights.params());
        result.history.push_back(rec);
        if (on_step) on_step(rec);

        const bool epoch_done = (step + 1) % per_epoch == 0;
        if (epoch_done && !cfg.checkpoint_out.empty() && step + 1 < steps) {
            save_checkpoint(weights, epoch_path(cfg.checkpoint_out, (step + 1) / per_epoch));
        }
    }
    if (!cfg.checkpoint_out.empty()) save_checkpoint(weights, cfg.checkpoint_out);
    if (!cfg.loss_csv.empty()) write_loss_csv(result.history, cfg.stage, cfg.loss_csv);
    result.weights = std::move(weights);
    return result;
}

const std::vector<Image>& single_images(const data::Dataset& ds, std::vector<Image>& storage) {
    if (ds.mode == data::CorpusMode::single) return ds.images;
    storage = ds.ir;
    storage.insert(storage.end(), ds.vi.begin(), ds.vi.end());
    return storage;
}

void require_paired(const data::Dataset& ds) {
    if (ds.mode != data::CorpusMode::paired) throw ConfigError("this training stage needs a paired (ir/ + vi/) corpus");
}

template <typename T>
StepLoss<T> rfn_step_loss(const TrainConfig& cfg, const data::Dataset& ds, const ModelWeights<T>& w,
                          const std::vector<std::size_t>& indices) {
    const Var<T> ir = Var<T>::leaf(data::make_batch<T>(ds.ir, indices));
    const Var<T> vi = Var<T>::leaf(data::make_batch<T>(ds.vi, indices));
    FusionGraph<T> g = fuse_graph(ir, vi, w);
    auto terms = loss::l_rfn(g.output, vi, g.fused, g.vi, g.ir, cfg.stage2);
    return {terms.total, terms.detail, terms.feature};
}

}  // namespace

template <typename T>
TrainResult<T> train_stage1(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> initial,
                            const StepCallback& on_step) {
    cfg.validate();
    std::vector<Image> storage;
    const auto& images = single_images(dataset, storage);
    initial.set_trainable(ParameterGroup::encoder, true);
    initial.set_trainable(ParameterGroup::decoder, true);
    initial.set_trainable(ParameterGroup::rfn, false);
    auto loss_fn = [&](const ModelWeights<T>& w, const std::vector<std::size_t>& idx) {
        const Var<T> x = Var<T>::leaf(data::make_batch<T>(images, idx));
        const Var<T> out = decode(encode(x, w), w);
        auto terms = loss::l_auto(out, x, cfg.stage1);
        return StepLoss<T>{terms.total, terms.pixel, terms.ssim};
    };
    return run<T>(cfg, images.size(), std::move(initial), loss_fn, on_step);
}

template <typename T>
TrainResult<T> train_stage1(const TrainConfig& cfg, const data::Dataset& dataset, const StepCallback& on_step) {
    cfg.validate();
    return train_stage1<T>(cfg, dataset, init_weights<T>(cfg.arch, cfg.seed), on_step);
}

template <typename T>
TrainResult<T> train_stage2(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> stage1,
                            const StepCallback& on_step) {
    cfg.validate();
    require_paired(dataset);
    stage1.set_trainable(ParameterGroup::encoder, false);
    stage1.set_trainable(ParameterGroup::decoder, false);
    stage1.set_trainable(ParameterGroup::rfn, true);
    auto loss_fn = [&](const ModelWeights<T>& w, const std::vector<std::size_t>& idx) {
        return rfn_step_loss<T>(cfg, dataset, w, idx);
    };
    return run<T>(cfg, dataset.size(), std::move(stage1), loss_fn, on_step);
}

template <typename T>
TrainResult<T> train_one_stage(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> initial,
                               const StepCallback& on_step) {
    cfg.validate();
    require_paired(dataset);
    initial.set_all_trainable(true);
    auto loss_fn = [&](const ModelWeights<T>& w, const std::vector<std::size_t>& idx) {
        return rfn_step_loss<T>(cfg, dataset, w, idx);
    };
    return run<T>(cfg, dataset.size(), std::move(initial), loss_fn, on_step);
}

template <typename T>
TrainResult<T> train_one_stage(const TrainConfig& cfg, const data::Dataset& dataset, const StepCallback& on_step) {
    cfg.validate();
    return train_one_stage<T>(cfg, dataset, init_weights<T>(cfg.arch, cfg.seed), on_step);
}

#define RFN_INSTANTIATE_TRAINING(T)                                                                                 \
    template TrainResult<T> train_stage1(const TrainConfig&, const data::Dataset&, ModelWeights<T>,                 \
                                         const StepCallback&);                                                      \
    template TrainResult<T> train_stage1<T>(const TrainConfig&, const data::Dataset&, const StepCallback&);         \
    template TrainResult<T> train_stage2(const TrainConfig&, const data::Dataset&, ModelWeights<T>,                 \
                                         const StepCallback&);                                                      \
    template TrainResult<T> train_one_stage(const TrainConfig&, const data::Dataset&, ModelWeights<T>,              \
                                            const StepCallback&);                                                   \
    template TrainResult<T> train_one_stage<T>(const TrainConfig&, const data::Dataset&, const StepCallback&);

RFN_INSTANTIATE_TRAINING(float)
RFN_INSTANTIATE_TRAINING(double)

#undef RFN_INSTANTIATE_TRAINING

}  // namespace rfn
