#include "mmgs/pipeline/train.hpp"

#include "mmgs/ad/adam.hpp"
#include "mmgs/common/error.hpp"
#include "mmgs/common/parallel.hpp"
#include "mmgs/io/checkpoint.hpp"
#include "mmgs/pipeline/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mmgs::pipeline {

std::vector<std::pair<std::size_t, int>> training_pairs(std::size_t frame_count, std::span<const int> cameras) {
    std::vector<std::pair<std::size_t, int>> pairs;
    for (int cam : cameras) {
        for (std::size_t f = 0; f < frame_count; ++f) {
            pairs.emplace_back(f, cam);
        }
    }
    return pairs;
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t iteration, int frame) {
    // splitmix64 over the combined key
    std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ull * (iteration + 1)) ^ (0xBF58476D1CE4E5B9ull * static_cast<std::uint64_t>(frame + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << "iteration,loss,l1,ssim_term,lpips_term\n" << std::setprecision(9);
    for (const auto& r : curve) {
        out << r.iteration << ',' << r.loss << ',' << r.l1 << ',' << r.ssim_term << ',' << r.lpips_term << '\n';
    }
}

namespace {

template <std::floating_point T>
std::string parameter_norms(const Model<T>& model) {
    std::ostringstream os;
    for (const auto& p : model.store().parameters()) {
        double sq = 0;
        for (T v : p.data()) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
        os << "\n  " << p.name() << ": " << std::sqrt(sq);
    }
    return os.str();
}

template <std::floating_point T>
void ensure_grads(std::vector<ad::Tensor<T>>& params) {
    for (auto& p : params) {
        if (!p.has_grad()) {
            p.zero_grad();
        }
    }
}

} // namespace

template <std::floating_point T>
std::vector<LossRecord> train(Model<T>& model, const Dataset<T>& data, const TrainConfig& config,
                              const PerceptualLoss<T>& perceptual) {
    config.weights.validate();
    if (config.lr <= 0 || config.attribute_lr.value_or(config.lr) <= 0) {
        throw ContractViolation("learning rates must be positive");
    }
    const auto pairs = training_pairs(data.frames.size(), model.config().context_cameras);
    if (pairs.empty()) {
        throw ContractViolation("no training pairs");
    }
    auto networks = model.network_parameters();
    auto attributes = model.attribute_parameters();
    ad::AdamState<T> network_state;
    network_state.config.lr = config.lr;
    ad::AdamState<T> attribute_state;
    attribute_state.config.lr = config.attribute_lr.value_or(config.lr);
    Rng sampler(model.config().seed ^ 0x5A4D504C45ull);

    std::vector<LossRecord> curve;
    curve.reserve(config.iterations);
    auto save = [&] {
        if (!config.checkpoint_path.empty()) {
            io::save_checkpoint(config.checkpoint_path, model.to_checkpoint());
        }
        if (!config.loss_csv_path.empty()) {
            write_loss_csv(config.loss_csv_path, curve);
        }
    };

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto [frame_pos, camera] =
            config.random_sampling ? pairs[sampler.below(pairs.size())] : pairs[it % pairs.size()];
        const auto& frame = data.frames[frame_pos];
        Rng dropout(step_seed(model.config().seed, it, frame.index));
        const int cams[] = {camera};
        const auto out = model.forward_frame(frame, cams, true, dropout);
        const auto terms = render_loss<T>(out.images[0], frame.targets.at(camera), frame.masks.at(camera),
                                          config.weights, perceptual);
        const double value = static_cast<double>(terms.total.item());
        if (!std::isfinite(value)) {
            throw NumericalError("non-finite loss at iteration " + std::to_string(it) + " (frame " +
                                 std::to_string(frame.index) + ", camera " + std::to_string(camera) +
                                 "); parameter norms:" + parameter_norms(model));
        }
        if (terms.total.requires_grad()) {
            ad::backward(terms.total);
        }
        ensure_grads(networks);
        ensure_grads(attributes);
        ad::adam_step<T>(networks, network_state);
        ad::adam_step<T>(attributes, attribute_state);
        model.renormalize_rotations();

        curve.push_back({it, frame.index, camera, value, terms.l1, terms.ssim_term, terms.lpips_term});
        if (config.on_step) {
            config.on_step(curve.back());
        }
        if (config.checkpoint_every && (it + 1) % config.checkpoint_every == 0) {
            save();
        }
    }
    save();
    return curve;
}

template <std::floating_point T>
double mean_training_loss(const Model<T>& model, const Dataset<T>& data, const LossWeights& weights) {
    ad::NoGradGuard no_grad;
    const auto pairs = training_pairs(data.frames.size(), model.config().context_cameras);
    double total = 0;
    for (const auto& [frame_pos, camera] : pairs) {
        const auto& frame = data.frames[frame_pos];
        Rng rng(0);
        const int cams[] = {camera};
        const auto out = model.forward_frame(frame, cams, false, rng);
        total += static_cast<double>(
            render_loss<T>(out.images[0], frame.targets.at(camera), frame.masks.at(camera), weights).total.item());
    }
    return total / static_cast<double>(pairs.size());
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : per_view) {
        views.push_back({{"frame", v.frame}, {"camera", v.camera}, {"psnr", v.psnr}, {"ssim", v.ssim}});
    }
    return {{"variant", variant},
            {"per_view", views},
            {"mean", {{"psnr", mean_psnr}, {"ssim", mean_ssim}}},
            {"render_ms_per_frame", render_ms_per_frame}};
}

template <std::floating_point T>
MetricsReport evaluate(const Model<T>& model, const Dataset<T>& data, std::span<const int> cameras, int threads) {
    if (cameras.empty()) {
        throw ContractViolation("no evaluation cameras");
    }
    for (int id : cameras) {
        model.scene().camera(id);
    }
    const std::size_t per_frame = cameras.size();
    const std::size_t count = data.frames.size() * per_frame;
    std::vector<ViewMetrics> views(count);
    std::vector<double> millis(count);
    parallel_for(count, threads, [&](std::size_t item) {
        ad::NoGradGuard no_grad;
        const auto& frame = data.frames[item / per_frame];
        const int camera = cameras[item % per_frame];
        Rng rng(0);
        const int cams[] = {camera};
        const auto start = std::chrono::steady_clock::now();
        const auto out = model.forward_frame(frame, cams, false, rng);
        millis[item] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        const auto& cam = model.scene().camera(camera);
        const auto rendered = out.images[0].data();
        const auto& target = frame.targets.at(camera);
        const auto& mask = frame.masks.at(camera);
        const auto a = composite_black<T>(rendered, mask);
        const auto b = composite_black<T>(target, mask);
        views[item] = {frame.index, camera, masked_psnr<T>(rendered, target, mask),
                       ssim<T>(a, b, cam.width, cam.height)};
    });
    MetricsReport report;
    report.variant = variant_name(model.variant());
    report.per_view = std::move(views);
    for (std::size_t i = 0; i < count; ++i) {
        report.mean_psnr += report.per_view[i].psnr / static_cast<double>(count);
        report.mean_ssim += report.per_view[i].ssim / static_cast<double>(count);
        report.render_ms_per_frame += millis[i] / static_cast<double>(count);
    }
    return report;
}

std::vector<AblationRow> ablate(const io::Scene& scene, const ModelConfig& base, const TrainConfig& train_config,
                                std::span<const int> eval_cameras, int threads) {
    std::vector<AblationRow> rows;
    const auto data = load_dataset<float>(scene, base.context_cameras);
    for (Variant v : kAllVariants) {
        ModelConfig config = base;
        config.variant = v;
        Model<float> model(scene, config);
        train(model, data, train_config);
        AblationRow row;
        row.variant = v;
        row.final_training_loss = mean_training_loss(model, data, train_config.weights);
        row.metrics = evaluate(model, data, eval_cameras, threads);
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        const double ms = r.metrics.render_ms_per_frame;
        table.push_back({{"variant", variant_name(r.variant)},
                         {"psnr", r.metrics.mean_psnr},
                         {"ssim", r.metrics.mean_ssim},
                         {"render_fps", ms > 0 ? 1000.0 / ms : 0.0},
                         {"final_training_loss", r.final_training_loss},
                         {"metrics", r.metrics.to_json()}});
    }
    return table;
}

template std::vector<LossRecord> train(Model<float>&, const Dataset<float>&, const TrainConfig&,
                                       const PerceptualLoss<float>&);
template std::vector<LossRecord> train(Model<double>&, const Dataset<double>&, const TrainConfig&,
                                       const PerceptualLoss<double>&);
template double mean_training_loss(const Model<float>&, const Dataset<float>&, const LossWeights&);
template double mean_training_loss(const Model<double>&, const Dataset<double>&, const LossWeights&);
template MetricsReport evaluate(const Model<float>&, const Dataset<float>&, std::span<const int>, int);
template MetricsReport evaluate(const Model<double>&, const Dataset<double>&, std::span<const int>, int);

} // namespace mmgs::pipeline
