#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rfn/data.hpp"
#include "rfn/losses.hpp"
#include "rfn/networks.hpp"

namespace rfn {

enum class Stage { auto_encoder, rfn, one_stage };

std::string to_string(Stage stage);

struct TrainConfig {
    Stage stage = Stage::auto_encoder;
    std::size_t image_size = 64;
    std::size_t batch_size = 4;
    std::size_t epochs = 2;
    /// Stops after this many optimizer steps when nonzero, even mid-epoch.
    std::size_t max_steps = 0;
    double lr = 1e-4;
    std::uint64_t seed = 42;
    OptimizerKind optimizer = OptimizerKind::adam;
    /// Forces plain SGD so that a run is fully described by (weights, step) and can be
    /// resumed exactly from a checkpoint.
    bool deterministic = false;
    ArchitectureConfig arch;
    loss::Stage1LossConfig stage1;
    loss::Stage2LossConfig stage2;
    /// Final checkpoint. Per-epoch checkpoints go next to it as <stem>.epochK<ext>.
    std::filesystem::path checkpoint_out;
    /// Per-step loss history.
    std::filesystem::path loss_csv;
    /// First global step to run, for resuming from weights saved at that step.
    std::size_t start_step = 0;

    void validate() const;
    [[nodiscard]] OptimizerKind effective_optimizer() const {
        return deterministic ? OptimizerKind::sgd : optimizer;
    }
};

/// `a`/`b` are pixel and (1 - SSIM) for stage 1, detail and feature terms otherwise.
struct LossRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double a = 0.0;
    double b = 0.0;
};

template <typename T>
struct TrainResult {
    ModelWeights<T> weights;
    std::vector<LossRecord> history;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Autoencoder training on a single-mode dataset with L_auto.
template <typename T>
TrainResult<T> train_stage1(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> initial,
                            const StepCallback& on_step = {});

template <typename T>
TrainResult<T> train_stage1(const TrainConfig& cfg, const data::Dataset& dataset, const StepCallback& on_step = {});

/// RFN training on a paired dataset with L_RFN; encoder and decoder stay frozen.
template <typename T>
TrainResult<T> train_stage2(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> stage1,
                            const StepCallback& on_step = {});

/// Everything trainable under L_RFN, starting from init_weights(arch, seed) or `initial`.
template <typename T>
TrainResult<T> train_one_stage(const TrainConfig& cfg, const data::Dataset& dataset, ModelWeights<T> initial,
                               const StepCallback& on_step = {});

template <typename T>
TrainResult<T> train_one_stage(const TrainConfig& cfg, const data::Dataset& dataset, const StepCallback& on_step = {});

/// Total number of steps the config runs on a dataset of n items.
std::size_t planned_steps(const TrainConfig& cfg, std::size_t n);

/// Mean loss over the first and last `window` records.
struct SmoothedLoss {
    double initial = 0.0;
    double final = 0.0;
};
SmoothedLoss smoothed(const std::vector<LossRecord>& history, std::size_t window = 10);

/// step,epoch,loss,<a_name>,<b_name> CSV.
void write_loss_csv(const std::vector<LossRecord>& history, Stage stage, const std::filesystem::path& path);

}  // namespace rfn
