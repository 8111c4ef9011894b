#pragma once

#include "mmgs/pipeline/loss.hpp"
#include "mmgs/pipeline/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mmgs::pipeline {

struct LossRecord {
    std::size_t iteration = 0;
    int frame = 0;
    int camera = 0;
    double loss = 0;
    double l1 = 0;
    double ssim_term = 0;
    double lpips_term = 0;
};

struct TrainConfig {
    std::size_t iterations = 2000;
    double lr = 1e-3;
    /// Learning rate of the per-instance canonical attributes; unset means `lr`.
    std::optional<double> attribute_lr;
    LossWeights weights;
    /// Draw (frame, camera) pairs from a seeded stream instead of round-robin.
    bool random_sampling = false;
    std::size_t checkpoint_every = 500;
    std::filesystem::path checkpoint_path; // empty: no checkpoints
    std::filesystem::path loss_csv_path;   // empty: no CSV
    /// Called after every step with the record just appended.
    std::function<void(const LossRecord&)> on_step;
};

/// Training (frame position, camera id) pairs in round-robin order: every
/// frame for the first camera, then every frame for the next one.
std::vector<std::pair<std::size_t, int>> training_pairs(std::size_t frame_count, std::span<const int> cameras);

/// Per-step stream for dropout; depends on the seed, iteration and frame only.
std::uint64_t step_seed(std::uint64_t seed, std::size_t iteration, int frame);

/// Optimizes every network parameter and every canonical attribute with
/// Adam. Cameras used for training are the model's context cameras. Throws
/// NumericalError on a non-finite loss, naming the iteration and listing
/// parameter norms.
template <std::floating_point T>
std::vector<LossRecord> train(Model<T>& model, const Dataset<T>& data, const TrainConfig& config,
                              const PerceptualLoss<T>& perceptual = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

/// Mean render loss over every training pair, evaluation mode.
template <std::floating_point T>
double mean_training_loss(const Model<T>& model, const Dataset<T>& data, const LossWeights& weights);

struct ViewMetrics {
    int frame = 0;
    int camera = 0;
    double psnr = 0;
    double ssim = 0;
};

struct MetricsReport {
    std::string variant;
    std::vector<ViewMetrics> per_view;
    double mean_psnr = 0;
    double mean_ssim = 0;
    double render_ms_per_frame = 0;

    nlohmann::json to_json() const;
};

/// Renders every frame from `cameras` and scores PSNR and SSIM inside the
/// union mask. Cameras are rendered on up to `threads` workers.
template <std::floating_point T>
MetricsReport evaluate(const Model<T>& model, const Dataset<T>& data, std::span<const int> cameras,
                       int threads = 1);

struct AblationRow {
    Variant variant = Variant::Full;
    MetricsReport metrics;
    double final_training_loss = 0;
};

/// Trains each variant from `base` with identical seeds and budgets and
/// evaluates it on `eval_cameras`.
std::vector<AblationRow> ablate(const io::Scene& scene, const ModelConfig& base, const TrainConfig& train_config,
                                std::span<const int> eval_cameras, int threads = 1);

nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows);

} // namespace mmgs::pipeline
