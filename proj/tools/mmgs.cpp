// Command-line entry point: generate, train, render, eval, ablate.

#include "mmgs/common/error.hpp"
#include "mmgs/io/checkpoint.hpp"
#include "mmgs/io/generator.hpp"
#include "mmgs/io/image.hpp"
#include "mmgs/io/scene.hpp"
#include "mmgs/pipeline/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace mmgs;
using nlohmann::json;

struct GenerateArgs {
    std::string out;
    io::GeneratorSpec spec;
    std::vector<int> res{64, 64};
};

struct TrainArgs {
    std::string scene, out, variant = "full", loss_csv;
    std::size_t iters = 2000;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double attribute_lr = 0; // 0: same as lr
    double lambda_l1 = 0.8, lambda_ssim = 0.2;
    std::vector<int> holdout;
    int threads = 1;
};

struct RenderArgs {
    std::string scene, ckpt, out, float_dump;
    int frame = 0, camera = 0, threads = 1;
};

struct EvalArgs {
    std::string scene, ckpt, out;
    std::vector<int> cameras;
    int threads = 1;
    bool no_timing = false;
};

struct AblateArgs {
    std::string scene, out;
    std::size_t iters = 2000;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double attribute_lr = 0;
    std::vector<int> holdout;
    int threads = 1;
};

/// MMGS_SEED, when set, replaces --seed.
std::uint64_t effective_seed(std::uint64_t seed) {
    if (const char* env = std::getenv("MMGS_SEED"); env && *env) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ContractViolation(std::string("MMGS_SEED is not an unsigned integer: ") + env);
        }
    }
    return seed;
}

std::vector<int> training_cameras(const io::Scene& scene, const std::vector<int>& holdout) {
    std::vector<int> out;
    for (int id : holdout) {
        scene.camera(id);
    }
    for (int id : scene.camera_ids()) {
        if (std::find(holdout.begin(), holdout.end(), id) == holdout.end()) {
            out.push_back(id);
        }
    }
    if (out.empty()) {
        throw ContractViolation("every camera is held out");
    }
    return out;
}

pipeline::TrainConfig make_train_config(std::size_t iters, double lr, double attribute_lr, double l1, double ssim) {
    pipeline::TrainConfig c;
    c.iterations = iters;
    c.lr = lr;
    if (attribute_lr > 0) {
        c.attribute_lr = attribute_lr;
    }
    c.weights.l1 = l1;
    c.weights.ssim = ssim;
    return c;
}

int run_generate(GenerateArgs a) {
    a.spec.width = a.res[0];
    a.spec.height = a.res[1];
    a.spec.seed = effective_seed(a.spec.seed);
    io::generate_synthetic_scene(a.spec, a.out);
    std::cout << json{{"command", "generate"},
                      {"out", a.out},
                      {"humans", a.spec.humans},
                      {"objects", a.spec.objects},
                      {"cameras", a.spec.cameras},
                      {"frames", a.spec.frames},
                      {"res", {a.spec.width, a.spec.height}},
                      {"seed", a.spec.seed}}
                     .dump()
              << '\n';
    return 0;
}

int run_train(const TrainArgs& a) {
    const auto scene = io::load_scene(a.scene);
    pipeline::ModelConfig mc;
    mc.variant = pipeline::parse_variant(a.variant);
    mc.seed = effective_seed(a.seed);
    mc.context_cameras = training_cameras(scene, a.holdout);
    mc.raster.threads = a.threads;
    auto tc = make_train_config(a.iters, a.lr, a.attribute_lr, a.lambda_l1, a.lambda_ssim);
    tc.loss_csv_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;

    const auto data = pipeline::load_dataset<float>(scene, mc.context_cameras);
    pipeline::Model<float> model(scene, mc);
    const json args{{"iters", a.iters},         {"seed", mc.seed},           {"lr", a.lr},
                    {"attribute_lr", tc.attribute_lr.value_or(a.lr)}, {"lambda_l1", a.lambda_l1},
                    {"lambda_ssim", a.lambda_ssim}, {"threads", a.threads}, {"holdout", a.holdout}};
    auto save = [&] {
        auto ckpt = model.to_checkpoint();
        ckpt.config["train"] = args;
        io::save_checkpoint(a.out, ckpt);
    };
    tc.checkpoint_every = 500;
    tc.on_step = [&](const pipeline::LossRecord& r) {
        if ((r.iteration + 1) % tc.checkpoint_every == 0) {
            save();
            std::cerr << "iteration " << r.iteration + 1 << " loss " << r.loss << '\n';
        }
    };
    const auto curve = pipeline::train(model, data, tc);
    save();
    json summary{{"command", "train"}, {"checkpoint", a.out}, {"variant", a.variant}, {"args", args}};
    if (!curve.empty()) {
        summary["first_loss"] = curve.front().loss;
        summary["last_loss"] = curve.back().loss;
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

int run_render(const RenderArgs& a) {
    const auto scene = io::load_scene(a.scene);
    const auto ckpt = io::load_checkpoint(a.ckpt);
    auto model = pipeline::model_from_checkpoint<float>(scene, ckpt);
    std::size_t pos = scene.frames.size();
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        if (scene.frames[f].index == a.frame) {
            pos = f;
        }
    }
    if (pos == scene.frames.size()) {
        throw ContractViolation("frame " + std::to_string(a.frame) + " is not in the scene");
    }
    const auto& cam = scene.camera(a.camera);
    // Only this frame is needed; load the dataset lazily through a one-frame scene.
    io::Scene one = scene;
    one.frames = {scene.frames[pos]};
    const auto data = pipeline::load_dataset<float>(one, model.config().context_cameras);
    ad::NoGradGuard no_grad;
    Rng rng(0);
    const int cams[] = {a.camera};
    auto cfg = model.config();
    const auto out = model.forward_frame(data.frames[0], cams, false, rng);
    io::Image image{cam.width, cam.height, out.images[0].to_vector()};
    io::write_png(a.out, image);
    if (!a.float_dump.empty()) {
        io::write_float_dump(a.float_dump, image);
    }
    std::cout << json{{"command", "render"}, {"frame", a.frame}, {"camera", a.camera}, {"out", a.out},
                      {"variant", pipeline::variant_name(cfg.variant)}, {"threads", a.threads}}
                     .dump()
              << '\n';
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto scene = io::load_scene(a.scene);
    const auto ckpt = io::load_checkpoint(a.ckpt);
    auto model = pipeline::model_from_checkpoint<float>(scene, ckpt);
    const auto data = pipeline::load_dataset<float>(scene, model.config().context_cameras);
    auto report = pipeline::evaluate(model, data, a.cameras, a.threads);
    if (a.no_timing) {
        report.render_ms_per_frame = 0;
    }
    auto doc = report.to_json();
    doc["args"] = {{"cameras", a.cameras}, {"threads", a.threads}};
    io::write_json(a.out, doc);
    std::cout << json{{"command", "eval"}, {"mean", doc["mean"]}, {"out", a.out}}.dump() << '\n';
    return 0;
}

int run_ablate(const AblateArgs& a) {
    const auto scene = io::load_scene(a.scene);
    auto holdout = a.holdout;
    if (holdout.empty()) {
        holdout = {scene.camera_ids().back()};
    }
    pipeline::ModelConfig mc;
    mc.seed = effective_seed(a.seed);
    mc.context_cameras = training_cameras(scene, holdout);
    mc.raster.threads = 1;
    const auto tc = make_train_config(a.iters, a.lr, a.attribute_lr, 0.8, 0.2);
    const auto rows = pipeline::ablate(scene, mc, tc, holdout, a.threads);
    json doc{{"variants", pipeline::ablation_table_json(rows)},
             {"args",
              {{"iters", a.iters},
               {"seed", mc.seed},
               {"lr", a.lr},
               {"attribute_lr", tc.attribute_lr.value_or(a.lr)},
               {"holdout", holdout},
               {"threads", a.threads}}}};
    io::write_json(a.out, doc);
    for (const auto& r : rows) {
        std::cout << pipeline::variant_name(r.variant) << " psnr " << r.metrics.mean_psnr << " ssim "
                  << r.metrics.mean_ssim << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-instance Gaussian refinement: generate, train, render, eval, ablate"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic scene directory");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--humans", gen.spec.humans, "Number of humans");
    g->add_option("--objects", gen.spec.objects, "Number of objects");
    g->add_option("--cameras", gen.spec.cameras, "Number of cameras");
    g->add_option("--frames", gen.spec.frames, "Number of frames");
    g->add_option("--res", gen.res, "Image width and height")->expected(2);
    g->add_option("--seed", gen.spec.seed, "Seed (MMGS_SEED overrides)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
    t->add_option("--scene", tr.scene, "Scene directory")->required();
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--iters", tr.iters, "Iterations");
    t->add_option("--variant", tr.variant, "full | no_fusion | no_interaction | none")
        ->check(CLI::IsMember({"full", "no_fusion", "no_interaction", "none"}));
    t->add_option("--seed", tr.seed, "Seed (MMGS_SEED overrides)");
    t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    t->add_option("--attribute-lr", tr.attribute_lr, "Learning rate of canonical attributes (0: --lr)")
        ->check(CLI::NonNegativeNumber);
    t->add_option("--lambda-l1", tr.lambda_l1, "L1 weight")->check(CLI::NonNegativeNumber);
    t->add_option("--lambda-ssim", tr.lambda_ssim, "SSIM weight")->check(CLI::NonNegativeNumber);
    t->add_option("--holdout", tr.holdout, "Camera ids excluded from training")->delimiter(',');
    t->add_option("--loss-csv", tr.loss_csv, "Loss curve path (default <out>.loss.csv)");
    t->add_option("--threads", tr.threads, "Rasterizer tile workers")->check(CLI::PositiveNumber);

    RenderArgs rd;
    auto* r = app.add_subcommand("render", "Render one frame from one camera");
    r->add_option("--scene", rd.scene, "Scene directory")->required();
    r->add_option("--ckpt", rd.ckpt, "Checkpoint")->required();
    r->add_option("--frame", rd.frame, "Frame index");
    r->add_option("--camera", rd.camera, "Camera id");
    r->add_option("--out", rd.out, "Output PNG")->required();
    r->add_option("--float-dump", rd.float_dump, "Optional float image dump");
    r->add_option("--threads", rd.threads, "Rasterizer tile workers")->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a checkpoint on the given cameras");
    e->add_option("--scene", ev.scene, "Scene directory")->required();
    e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    e->add_option("--cameras", ev.cameras, "Camera ids, comma separated")->delimiter(',')->required();
    e->add_option("--out", ev.out, "Metrics JSON")->required();
    e->add_option("--threads", ev.threads, "Camera workers")->check(CLI::PositiveNumber);
    e->add_flag("--no-timing", ev.no_timing, "Write 0 for render time so reruns are byte-identical");

    AblateArgs ab;
    auto* b = app.add_subcommand("ablate", "Train and evaluate all four variants");
    b->add_option("--scene", ab.scene, "Scene directory")->required();
    b->add_option("--out", ab.out, "Table JSON")->required();
    b->add_option("--iters", ab.iters, "Iterations per variant");
    b->add_option("--seed", ab.seed, "Seed (MMGS_SEED overrides)");
    b->add_option("--lr", ab.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    b->add_option("--attribute-lr", ab.attribute_lr, "Learning rate of canonical attributes (0: --lr)")
        ->check(CLI::NonNegativeNumber);
    b->add_option("--holdout", ab.holdout, "Held-out camera ids (default: last camera)")->delimiter(',');
    b->add_option("--threads", ab.threads, "Evaluation workers")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        for (auto* sub : app.get_subcommands()) {
            std::cerr << sub->help();
        }
        if (app.get_subcommands().empty()) {
            std::cerr << app.help();
        }
        return 2;
    }

    try {
        if (*g) return run_generate(gen);
        if (*t) return run_train(tr);
        if (*r) return run_render(rd);
        if (*e) return run_eval(ev);
        if (*b) return run_ablate(ab);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 1;
}
