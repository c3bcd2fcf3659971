#include "projcgan/commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "projcgan/errors.hpp"
#include "projcgan/image_io.hpp"
#include "projcgan/metrics.hpp"
#include "projcgan/tasks.hpp"

namespace fs = std::filesystem;

namespace projcgan {

namespace {

constexpr std::uint64_t kInitStream = stream::kInit;
constexpr std::uint64_t kLoopStream = stream::kLoop;
constexpr std::uint64_t kPanelStream = stream::kPanel;
constexpr std::uint64_t kMetricStream = stream::kMetric;
constexpr std::uint64_t kEvalStream = stream::kEval;
constexpr std::uint64_t kMorphStream = stream::kMorph;
constexpr std::uint64_t kFxInitStream = stream::kFxInit;
constexpr std::uint64_t kFxFitStream = stream::kFxFit;

TensorD to_d(const TensorF& x) {
    TensorD out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = static_cast<double>(x[i]);
    return out;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed on '" + path + "'");
}

std::string ckpt_path(const std::string& out, int iter) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06d.bin", iter);
    return out + "/" + buf;
}

std::string panel_path(const std::string& out, int iter) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "panel_%06d.ppm", iter);
    return out + "/" + buf;
}

/// Newest ckpt_NNNNNN.bin at or below `limit`, or nullopt.
std::optional<int> newest_checkpoint(const std::string& out, int limit) {
    std::optional<int> best;
    if (!fs::is_directory(out)) return best;
    for (const auto& entry : fs::directory_iterator(out)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_", 0) != 0 || name.size() != 15 ||
            name.compare(11, 4, ".bin") != 0)
            continue;
        int iter = 0;
        bool digits = true;
        for (int i = 5; i < 11; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
            iter = iter * 10 + (name[i] - '0');
        }
        if (digits && iter <= limit && (!best || iter > *best)) best = iter;
    }
    return best;
}

/// Drop metric rows past `last_iter` so a resumed run appends cleanly even
/// when the interruption landed between a metric row and its checkpoint.
void trim_metric_log(const std::string& path, int last_iter) {
    std::ifstream in(path);
    if (!in) return;
    std::string kept, line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!header) {
            try {
                if (std::stol(line) > last_iter) continue;
            } catch (const std::exception&) {
                continue;
            }
        }
        header = false;
        kept += line + "\n";
    }
    in.close();
    write_text(path, kept);
}

std::vector<int> balanced_labels(int n, int num_classes) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % num_classes;
    return y;
}

const float kPalette[6][3] = {{0.8f, -0.8f, -0.8f}, {-0.8f, -0.5f, 0.8f}, {-0.8f, 0.5f, -0.6f},
                              {0.6f, 0.2f, -0.8f},  {0.2f, -0.8f, 0.6f}, {-0.6f, 0.6f, 0.6f}};

/// 2-d scatter of generated points (colored by class) over the real data
/// (gray), on the fixed window [-1.6, 1.6]^2.
TensorF scatter_panel(const TensorF& gen_pts, const std::vector<int>& labels,
                      const TensorF& real_pts) {
    const int size = 160;
    TensorF img({3, size, size});
    img.fill(1.0f);
    auto put = [&](double x, double y, const float* rgb) {
        const int px = static_cast<int>(std::lround((x + 1.6) / 3.2 * (size - 1)));
        const int py = static_cast<int>(std::lround((1.6 - y) / 3.2 * (size - 1)));
        if (px < 0 || px >= size || py < 0 || py >= size) return;
        for (int k = 0; k < 3; ++k) img.at(k, py, px) = rgb[k];
    };
    const float gray[3] = {0.55f, 0.55f, 0.55f};
    for (int i = 0; i < real_pts.extent(0); ++i)
        put(real_pts.at(i, 0), real_pts.at(i, 1), gray);
    for (int i = 0; i < gen_pts.extent(0); ++i)
        put(gen_pts.at(i, 0), gen_pts.at(i, 1), kPalette[labels[static_cast<std::size_t>(i)] % 6]);
    return img;
}

/// Per-class means and a pooled per-axis sigma, the reference frame for the
/// mode-coverage metric.
struct ModeFrame {
    std::vector<double> cx, cy;
    double sigma = 0.0;
};

ModeFrame mode_frame(const Dataset& data) {
    ModeFrame f;
    const int c_count = data.num_classes;
    f.cx.assign(static_cast<std::size_t>(c_count), 0.0);
    f.cy.assign(static_cast<std::size_t>(c_count), 0.0);
    std::vector<int> n(static_cast<std::size_t>(c_count), 0);
    for (int i = 0; i < data.size(); ++i) {
        const auto c = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)]);
        f.cx[c] += data.vectors.at(i, 0);
        f.cy[c] += data.vectors.at(i, 1);
        ++n[c];
    }
    for (std::size_t c = 0; c < f.cx.size(); ++c) {
        f.cx[c] /= std::max(1, n[c]);
        f.cy[c] /= std::max(1, n[c]);
    }
    double var = 0.0;
    std::int64_t terms = 0;
    for (int i = 0; i < data.size(); ++i) {
        const auto c = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)]);
        const double dx = data.vectors.at(i, 0) - f.cx[c];
        const double dy = data.vectors.at(i, 1) - f.cy[c];
        var += dx * dx + dy * dy;
        terms += 2;
    }
    f.sigma = std::sqrt(var / std::max<std::int64_t>(1, terms - 1));
    return f;
}

/// Fraction of samples within 3 sigma of each mode center; returns the
/// number of covered modes (fraction >= 2%) and the smallest fraction.
std::pair<int, double> mode_coverage(const TensorF& samples, const ModeFrame& frame) {
    const int n = samples.extent(0);
    int covered = 0;
    double min_frac = 1.0;
    const double r2 = 9.0 * frame.sigma * frame.sigma;
    for (std::size_t m = 0; m < frame.cx.size(); ++m) {
        int hits = 0;
        for (int i = 0; i < n; ++i) {
            const double dx = samples.at(i, 0) - frame.cx[m];
            const double dy = samples.at(i, 1) - frame.cy[m];
            if (dx * dx + dy * dy <= r2) ++hits;
        }
        const double frac = static_cast<double>(hits) / n;
        if (frac >= 0.02) ++covered;
        min_frac = std::min(min_frac, frac);
    }
    return {covered, min_frac};
}

std::unique_ptr<FeatureExtractor> fit_extractor(const Dataset& data, const RunConfig& cfg) {
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    Rng init = Rng(seed).spawn(kFxInitStream);
    Rng fit_rng = Rng(seed).spawn(kFxFitStream);
    std::unique_ptr<FeatureExtractor> fx;
    TensorD x;
    if (data.is_image()) {
        fx = std::make_unique<ConvExtractor>(data.images.extent(1),
                                             static_cast<int>(data.images.extent(2)),
                                             data.num_classes, init, 8, 64);
        x = to_d(data.images);
    } else {
        fx = std::make_unique<MlpExtractor>(data.vectors.extent(1), data.num_classes, init,
                                            cfg.integer("fx_hidden"), 64);
        x = to_d(data.vectors);
    }
    const int batch = std::min(64, data.size());
    fx->fit(x, data.labels, cfg.integer("fx_iters"), batch, fit_rng, 2e-3);
    fx->freeze();
    return fx;
}

TrainSchedule schedule_from(const RunConfig& cfg) {
    TrainSchedule s;
    s.total = cfg.integer("iterations");
    s.decay_start = cfg.integer("decay_start");
    s.n_dis = cfg.integer("n_dis");
    s.batch = cfg.integer("batch");
    s.alpha0 = cfg.real("lr");
    return s;
}

AdamConfig adam_from(const RunConfig& cfg) {
    AdamConfig a;
    a.alpha = cfg.real("lr");
    a.beta1 = cfg.real("beta1");
    a.beta2 = cfg.real("beta2");
    return a;
}

/// Task + trainer with the checkpoint loaded, for the evaluation commands.
struct LoadedClassRun {
    Dataset data;
    std::unique_ptr<ClassGenTask> task;
    std::unique_ptr<Trainer<float>> trainer;
};

LoadedClassRun load_class_run(const RunConfig& cfg) {
    if (cfg.str("task") != "classgen") throw ValueError("this command needs task = classgen");
    const std::string ckpt = cfg.str("checkpoint");
    if (ckpt.empty()) throw ValueError("checkpoint is required");
    LoadedClassRun run;
    run.data = load_dataset(cfg);
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    run.task = make_class_task(cfg, run.data, Rng(seed).spawn(kInitStream));
    run.trainer = std::make_unique<Trainer<float>>(*run.task, schedule_from(cfg), adam_from(cfg),
                                                   adam_from(cfg), Rng(seed).spawn(kLoopStream));
    run.trainer->load_file(ckpt);
    return run;
}

/// Local score of a finished training run: balanced samples through the
/// dataset-fit extractor. Used by cmd_sweep.
double final_run_score(const RunConfig& cfg) {
    RunConfig probe = cfg;
    probe.set("checkpoint", ckpt_path(cfg.str("out"), cfg.integer("iterations")));
    LoadedClassRun run = load_class_run(probe);
    auto fx = fit_extractor(run.data, cfg);
    Rng eval_rng = Rng(static_cast<std::uint64_t>(cfg.integer("seed"))).spawn(kEvalStream);
    const int n = std::max(2 * run.data.num_classes, 512);
    const std::vector<int> labels = balanced_labels(n, run.data.num_classes);
    TensorF z = sample_z<float>(eval_rng, n, run.task->z_dim());
    return inception_style_score(fx->probs(to_d(run.task->generate(z, labels))));
}

void append_jsonl(std::ofstream& out, const nlohmann::json& j) { out << j.dump() << "\n"; }

}  // namespace

// ---------------------------------------------------------------------------
// validation

void validate_run_config(const RunConfig& cfg) {
    std::vector<std::string> problems;
    auto bad = [&](const std::string& m) { problems.push_back(m); };
    auto geti = [&](const char* k) -> std::optional<int> {
        try {
            return cfg.integer(k);
        } catch (const ValueError& e) {
            bad(e.what());
            return std::nullopt;
        }
    };
    auto getr = [&](const char* k) -> std::optional<double> {
        try {
            return cfg.real(k);
        } catch (const ValueError& e) {
            bad(e.what());
            return std::nullopt;
        }
    };
    auto check_min = [&](const char* k, int lo) {
        if (auto v = geti(k); v && *v < lo)
            bad(std::string(k) + " must be >= " + std::to_string(lo));
    };

    const std::string task = cfg.str("task");
    if (task != "classgen" && task != "superres") bad("task must be classgen or superres");
    try {
        cond_variant_from_string(cfg.str("variant"));
    } catch (const ValueError& e) {
        bad(e.what());
    }
    const std::string loss = cfg.str("loss");
    if (loss != "hinge" && loss != "standard") bad("loss must be hinge or standard");
    const std::string ds = cfg.str("dataset");
    if (ds != "vector2d" && ds != "blob_images" && ds != "cifar")
        bad("dataset must be vector2d, blob_images or cifar");
    if (ds == "cifar" && cfg.str("dataset_path").empty()) bad("dataset = cifar needs dataset_path");
    if (task == "superres" && ds == "vector2d") bad("superres needs an image dataset");

    const std::optional<int> iters = geti("iterations");
    const std::optional<int> decay = geti("decay_start");
    if (iters && *iters < 0) bad("iterations must be >= 0");
    if (iters && decay && (*decay < 0 || *decay > *iters))
        bad("decay_start must lie in [0, iterations]");
    check_min("n_dis", 1);
    check_min("batch", 1);
    if (auto v = getr("lr"); v && !(*v > 0.0)) bad("lr must be positive");
    if (auto v = getr("beta1"); v && (*v < 0.0 || *v >= 1.0)) bad("beta1 must lie in [0, 1)");
    if (auto v = getr("beta2"); v && (*v <= 0.0 || *v >= 1.0)) bad("beta2 must lie in (0, 1)");
    if (auto v = getr("lambda_cls"); v && *v < 0.0) bad("lambda_cls must be >= 0");
    check_min("metric_every", 0);
    check_min("ckpt_every", 0);
    check_min("classes", 2);
    check_min("n_per_class", 2);
    check_min("z_dim", 1);
    check_min("hidden", 1);
    check_min("ch", 1);
    check_min("embed_dim", 1);
    check_min("panel", 0);
    check_min("n_gen", 2);
    check_min("fx_iters", 1);
    check_min("fx_hidden", 1);
    check_min("n_eval", 1);
    check_min("score_splits", 2);
    check_min("morph_steps", 2);
    check_min("morph_seeds", 1);
    check_min("n_mc", 1);
    geti("seed");
    geti("data_seed");
    geti("hidden_insert");
    geti("morph_from");
    geti("morph_to");

    if (auto v = geti("img_size")) {
        if (ds == "blob_images" && *v < 8) bad("img_size must be >= 8 for blob_images");
        if (task == "classgen" && ds != "vector2d") {
            bool pow_ok = false;
            for (int n = 1; n <= 6; ++n)
                if ((4 << n) == *v) pow_ok = true;
            if (!pow_ok) bad("img_size must be 4*2^k for image generation");
        }
    }
    if (auto f = geti("sr_factor")) {
        const bool pow2 = *f >= 2 && (*f & (*f - 1)) == 0;
        if (!pow2) bad("sr_factor must be a power of 2 and >= 2");
        if (task == "superres") {
            if (auto img = geti("img_size"); img && pow2 && *img % *f != 0)
                bad("img_size must be divisible by sr_factor");
            int n_up = 0;
            while ((1 << n_up) < *f) ++n_up;
            if (auto z = geti("z_dim"); z && pow2 && n_up > 0 && *z % n_up != 0)
                bad("z_dim must be divisible by the number of upsampling stages");
        }
    }

    for (const char* k : {"sn_embedding", "resume"}) {
        try {
            cfg.boolean(k);
        } catch (const ValueError& e) {
            bad(e.what());
        }
    }
    for (const char* k : {"sweep_lr", "sweep_beta1"}) {
        try {
            cfg.real_list(k);
        } catch (const ValueError& e) {
            bad(e.what());
        }
    }
    for (const std::string& c : cfg.list("morph_chain")) {
        bool digits = !c.empty();
        for (char ch : c)
            if (!std::isdigit(static_cast<unsigned char>(ch))) digits = false;
        if (!digits) bad("morph_chain entry '" + c + "' is not a class index");
    }

    if (!problems.empty()) {
        std::string msg = "config rejected:";
        for (const std::string& p : problems) msg += "\n  " + p;
        throw ValueError(msg);
    }
}

// ---------------------------------------------------------------------------
// cmd_train

void cmd_train(const RunConfig& cfg) {
    validate_run_config(cfg);
    const std::string out = cfg.str("out");
    fs::create_directories(out);
    write_text(out + "/config_echo.txt", cfg.echo());

    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    const auto wall_start = std::chrono::steady_clock::now();
    Dataset data = load_dataset(cfg);
    const bool superres = cfg.str("task") == "superres";
    const bool acgan = !superres && cfg.str("variant") == "acgan";

    std::unique_ptr<ClassGenTask> class_task;
    std::unique_ptr<SrTask> sr_task;
    GanTask<float>* task = nullptr;
    if (superres) {
        sr_task = make_sr_task(cfg, data, Rng(seed).spawn(kInitStream));
        task = sr_task.get();
    } else {
        class_task = make_class_task(cfg, data, Rng(seed).spawn(kInitStream));
        task = class_task.get();
    }

    const TrainSchedule sched = schedule_from(cfg);
    // the CSV clock is pinned to zero so reruns and resumes are bytewise
    // identical; real elapsed time lands in timing.txt instead
    Trainer<float> trainer(*task, sched, adam_from(cfg), adam_from(cfg),
                           Rng(seed).spawn(kLoopStream), [] { return 0.0; });

    const int panel_n = cfg.integer("panel");
    const Rng panel_base = Rng(seed).spawn(kPanelStream);
    TensorF z_panel;
    std::vector<int> panel_labels;
    if (!superres && panel_n > 0) {
        Rng zr = panel_base;
        z_panel = sample_z<float>(zr, panel_n, class_task->z_dim());
        panel_labels = balanced_labels(panel_n, data.num_classes);
    }

    ModeFrame frame;
    const bool vector_task = !superres && !data.is_image();
    if (vector_task) frame = mode_frame(data);

    auto render_panel = [&](int iter) {
        if (panel_n <= 0) return;
        if (superres) {
            const int n = std::min(panel_n, data.size());
            Shape hi_shape = data.images.shape();
            hi_shape[0] = n;
            TensorF hi(hi_shape);
            for (std::int64_t i = 0; i < hi.numel(); ++i) hi[i] = data.images[i];
            Rng zr = panel_base;
            TensorF sr = sr_task->sr_generate(zr, downsample_images(hi, sr_task->factor()));
            write_ppm(panel_path(out, iter), tile_grid(sr, 8));
        } else if (data.is_image()) {
            write_ppm(panel_path(out, iter), tile_grid(class_task->generate(z_panel, panel_labels), 8));
        } else {
            write_ppm(panel_path(out, iter),
                      scatter_panel(class_task->generate(z_panel, panel_labels), panel_labels,
                                    data.vectors));
        }
    };

    const Rng metric_base = Rng(seed).spawn(kMetricStream);
    MetricFn metric_fn = [&](int iter) {
        std::vector<std::pair<std::string, double>> rows;
        Rng mr = metric_base.spawn(static_cast<std::uint64_t>(iter));
        if (superres) {
            const int n = std::min(4, data.size());
            Shape shape = data.images.shape();
            shape[0] = n;
            TensorF hi(shape);
            for (std::int64_t i = 0; i < hi.numel(); ++i) hi[i] = data.images[i];
            TensorF sr = sr_task->sr_generate(mr, downsample_images(hi, sr_task->factor()));
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < hi.extent(1); ++k) {
                    TensorD a({hi.extent(2), hi.extent(3)});
                    TensorD b(a.shape());
                    for (int r = 0; r < hi.extent(2); ++r)
                        for (int c = 0; c < hi.extent(3); ++c) {
                            a.at(r, c) = sr.at(i, k, r, c);
                            b.at(r, c) = hi.at(i, k, r, c);
                        }
                    acc += ms_ssim(a, b, 5, 2.0);
                }
            rows.emplace_back("ms_ssim_probe", acc / (n * hi.extent(1)));
        } else {
            const int n = 256;
            const std::vector<int> labels = balanced_labels(n, data.num_classes);
            TensorF z = sample_z<float>(mr, n, class_task->z_dim());
            TensorF samples = class_task->generate(z, labels);
            if (vector_task) {
                auto [covered, min_frac] = mode_coverage(samples, frame);
                rows.emplace_back("modes_covered", covered);
                rows.emplace_back("min_mode_frac", min_frac);
            }
            if (acgan) {
                std::vector<int> yr;
                TensorF xr(samples.shape());
                yr.resize(static_cast<std::size_t>(n));
                const std::int64_t stride = data.images.numel() > 0
                                                ? data.images.numel() / data.size()
                                                : data.vectors.numel() / data.size();
                const TensorF& pool = data.is_image() ? data.images : data.vectors;
                for (int i = 0; i < n; ++i) {
                    const int idx = mr.uniform_int(data.size());
                    for (std::int64_t p = 0; p < stride; ++p) xr[i * stride + p] = pool[idx * stride + p];
                    yr[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(idx)];
                }
                rows.emplace_back("cls_loss", class_task->classifier_ce(xr, yr));
            }
        }
        render_panel(iter);
        return rows;
    };

    auto save_ckpt = [&](int iter) { trainer.save_file(ckpt_path(out, iter)); };

    const bool resume = cfg.boolean("resume");
    bool resumed = false;
    if (resume) {
        if (auto at = newest_checkpoint(out, sched.total)) {
            trainer.load_file(ckpt_path(out, *at));
            trim_metric_log(out + "/metrics.csv", *at);
            resumed = true;
        }
    }

    if (sched.total == 0) {
        save_ckpt(0);
        return;
    }
    if (!resumed) save_ckpt(0);

    MetricLog log(out + "/metrics.csv", resumed);
    const int metric_every = cfg.integer("metric_every");
    const int ckpt_every = cfg.integer("ckpt_every");
    trainer.run(sched.total, &log, metric_every, metric_fn, ckpt_every, save_ckpt);

    if (ckpt_every == 0 || sched.total % ckpt_every != 0) save_ckpt(sched.total);
    if (metric_every == 0 || sched.total % metric_every != 0) render_panel(sched.total);

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "train_wall_s %.3f\n", elapsed);
    write_text(out + "/timing.txt", buf);
}

// ---------------------------------------------------------------------------
// cmd_sweep

void cmd_sweep(const RunConfig& cfg) {
    validate_run_config(cfg);
    const std::string out = cfg.str("out");
    fs::create_directories(out);
    write_text(out + "/config_echo.txt", cfg.echo());

    std::vector<std::string> lrs = cfg.list("sweep_lr");
    if (lrs.empty()) lrs.push_back(cfg.str("lr"));
    std::vector<std::string> b1s = cfg.list("sweep_beta1");
    if (b1s.empty()) b1s.push_back(cfg.str("beta1"));
    std::vector<std::string> variants = cfg.list("sweep_variants");
    if (variants.empty()) variants.push_back(cfg.str("variant"));

    std::set<std::string> dirs;
    for (const std::string& v : variants)
        for (const std::string& lr : lrs)
            for (const std::string& b1 : b1s) {
                const std::string dir = out + "/" + v + "_lr" + lr + "_b1" + b1;
                if (!dirs.insert(dir).second)
                    throw ValueError("overlapping output directory '" + dir + "'");
            }

    struct Row {
        std::string variant, lr, b1;
        double score;
    };
    std::vector<Row> rows;
    for (const std::string& v : variants)
        for (const std::string& lr : lrs)
            for (const std::string& b1 : b1s) {
                RunConfig sub = cfg;
                sub.set("variant", v);
                sub.set("lr", lr);
                sub.set("beta1", b1);
                sub.set("out", out + "/" + v + "_lr" + lr + "_b1" + b1);
                const std::string done = sub.str("out") + "/done.txt";
                if (!fs::exists(done)) {
                    cmd_train(sub);
                    write_text(done, "iterations " + sub.str("iterations") + "\n");
                }
                rows.push_back({v, lr, b1, final_run_score(sub)});
            }

    std::string csv = "variant,lr,beta1,score\n";
    char buf[64];
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof(buf), ",%.9g\n", r.score);
        csv += r.variant + "," + r.lr + "," + r.b1 + buf;
    }
    write_text(out + "/sweep.csv", csv);

    // one polyline per variant; the off-axis parameter is pinned to its
    // first grid value
    auto plot_axis = [&](const std::string& axis) {
        std::vector<Series> series;
        for (const std::string& v : variants) {
            Series s;
            s.name = v;
            for (const Row& r : rows) {
                if (r.variant != v) continue;
                if (axis == "lr" && r.b1 != b1s.front()) continue;
                if (axis == "beta1" && r.lr != lrs.front()) continue;
                s.x.push_back(std::stod(axis == "lr" ? r.lr : r.b1));
                s.y.push_back(r.score);
            }
            series.push_back(std::move(s));
        }
        write_plot_ppm(out + "/score_vs_" + axis + ".ppm", series);
    };
    plot_axis("lr");
    plot_axis("beta1");
}

// ---------------------------------------------------------------------------
// cmd_eval

void cmd_eval(const RunConfig& cfg) {
    validate_run_config(cfg);
    const std::string out = cfg.str("out");
    fs::create_directories(out);
    write_text(out + "/config_echo.txt", cfg.echo());

    LoadedClassRun run = load_class_run(cfg);
    const int num_classes = run.data.num_classes;
    const int n_gen = cfg.integer("n_gen");
    auto fx = fit_extractor(run.data, cfg);
    const TensorD x_real = run.data.is_image() ? to_d(run.data.images) : to_d(run.data.vectors);
    const TensorD real_feats = fx->features(x_real);

    Rng eval_rng = Rng(static_cast<std::uint64_t>(cfg.integer("seed"))).spawn(kEvalStream);

    // local score over a balanced generated set
    const std::vector<int> score_labels = balanced_labels(n_gen, num_classes);
    TensorF z_score = sample_z<float>(eval_rng, n_gen, run.task->z_dim());
    const TensorD probs = fx->probs(to_d(run.task->generate(z_score, score_labels)));
    const auto [score_mean, score_sd] = inception_score_splits(probs, cfg.integer("score_splits"));

    // per-class intra-FID plus the split-half noise floor of the real data
    std::vector<double> fids, floors;
    const int feat_dim = real_feats.extent(1);
    for (int c = 0; c < num_classes; ++c) {
        auto gen_fn = [&](int n) {
            const std::vector<int> labels(static_cast<std::size_t>(n), c);
            TensorF z = sample_z<float>(eval_rng, n, run.task->z_dim());
            return fx->features(to_d(run.task->generate(z, labels)));
        };
        fids.push_back(intra_fid(real_feats, run.data.labels, c, gen_fn, n_gen));

        std::vector<int> rows_c;
        for (int i = 0; i < real_feats.extent(0); ++i)
            if (run.data.labels[static_cast<std::size_t>(i)] == c) rows_c.push_back(i);
        const int half = static_cast<int>(rows_c.size()) / 2;
        if (half < 2) throw ValueError("class " + std::to_string(c) + " has too few samples");
        TensorD a({half, feat_dim}), b({static_cast<int>(rows_c.size()) - half, feat_dim});
        for (int i = 0; i < static_cast<int>(rows_c.size()); ++i)
            for (int j = 0; j < feat_dim; ++j) {
                if (i < half)
                    a.at(i, j) = real_feats.at(rows_c[static_cast<std::size_t>(i)], j);
                else
                    b.at(i - half, j) = real_feats.at(rows_c[static_cast<std::size_t>(i)], j);
            }
        floors.push_back(fid(gaussian_stats(a), gaussian_stats(b)));
    }
    const double fid_mean =
        std::accumulate(fids.begin(), fids.end(), 0.0) / static_cast<double>(fids.size());

    std::string csv = "class,intra_fid,real_split_fid\n";
    char buf[96];
    std::vector<Series> series(2);
    series[0].name = "intra_fid";
    series[1].name = "real_split_fid";
    for (int c = 0; c < num_classes; ++c) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", c, fids[static_cast<std::size_t>(c)],
                      floors[static_cast<std::size_t>(c)]);
        csv += buf;
        series[0].x.push_back(c);
        series[0].y.push_back(fids[static_cast<std::size_t>(c)]);
        series[1].x.push_back(c);
        series[1].y.push_back(floors[static_cast<std::size_t>(c)]);
    }
    write_text(out + "/per_class.csv", csv);
    write_plot_ppm(out + "/intra_fid_per_class.ppm", series);

    std::ofstream report(out + "/report.jsonl", std::ios::trunc);
    if (!report) throw IoError("cannot open report.jsonl");
    append_jsonl(report, {{"metric", "local_score"},
                          {"mean", score_mean},
                          {"sd", score_sd},
                          {"n", n_gen},
                          {"splits", cfg.integer("score_splits")}});
    append_jsonl(report, {{"metric", "intra_fid_mean"}, {"value", fid_mean}});
    for (int c = 0; c < num_classes; ++c)
        append_jsonl(report, {{"metric", "intra_fid"},
                              {"class", c},
                              {"value", fids[static_cast<std::size_t>(c)]},
                              {"real_split_fid", floors[static_cast<std::size_t>(c)]}});
}

// ---------------------------------------------------------------------------
// cmd_morph

void cmd_morph(const RunConfig& cfg) {
    validate_run_config(cfg);
    const std::string out = cfg.str("out");
    fs::create_directories(out);
    write_text(out + "/config_echo.txt", cfg.echo());

    LoadedClassRun run = load_class_run(cfg);
    const int steps = cfg.integer("morph_steps");
    const int seeds = cfg.integer("morph_seeds");

    std::vector<int> chain;
    for (const std::string& c : cfg.list("morph_chain")) chain.push_back(std::stoi(c));
    if (chain.empty()) chain = {cfg.integer("morph_from"), cfg.integer("morph_to")};
    if (chain.size() < 2) throw ValueError("morph_chain needs at least 2 classes");
    for (int c : chain)
        if (c < 0 || c >= run.data.num_classes)
            throw ValueError("morph class " + std::to_string(c) + " outside [0, " +
                             std::to_string(run.data.num_classes) + ")");

    Rng zrng = Rng(static_cast<std::uint64_t>(cfg.integer("seed"))).spawn(kMorphStream);
    for (int s = 0; s < seeds; ++s) {
        TensorF z1 = sample_z<float>(zrng, 1, run.task->z_dim());
        TensorF z(Shape{steps, run.task->z_dim()});
        for (int i = 0; i < steps; ++i)
            for (int j = 0; j < run.task->z_dim(); ++j) z.at(i, j) = z1.at(0, j);

        for (std::size_t leg = 0; leg + 1 < chain.size(); ++leg) {
            std::vector<MorphSpec> specs(static_cast<std::size_t>(steps));
            for (int i = 0; i < steps; ++i)
                specs[static_cast<std::size_t>(i)] = {chain[leg], chain[leg + 1],
                                                      static_cast<double>(i) / (steps - 1)};
            TensorF strip = run.task->morph(z, specs);
            char name[96];
            std::snprintf(name, sizeof(name), "morph_s%d_%dto%d", s, chain[leg], chain[leg + 1]);
            if (run.task->is_image()) {
                write_ppm(out + "/" + name + std::string(".ppm"), tile_grid(strip, steps));
            } else {
                std::string csv = "lambda";
                for (int j = 0; j < strip.extent(1); ++j) csv += ",x" + std::to_string(j);
                csv += "\n";
                char buf[64];
                for (int i = 0; i < steps; ++i) {
                    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(i) / (steps - 1));
                    csv += buf;
                    for (int j = 0; j < strip.extent(1); ++j) {
                        std::snprintf(buf, sizeof(buf), ",%.9g",
                                      static_cast<double>(strip.at(i, j)));
                        csv += buf;
                    }
                    csv += "\n";
                }
                write_text(out + "/" + name + std::string(".csv"), csv);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// cmd_superres

void cmd_superres(const RunConfig& cfg) {
    validate_run_config(cfg);
    const std::string out = cfg.str("out");
    fs::create_directories(out);
    write_text(out + "/config_echo.txt", cfg.echo());

    if (cfg.str("task") != "superres") throw ValueError("cmd_superres needs task = superres");
    const std::string ckpt = cfg.str("checkpoint");
    if (ckpt.empty()) throw ValueError("checkpoint is required");
    Dataset data = load_dataset(cfg);
    if (!data.is_image()) throw ValueError("superres needs ground-truth images");

    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    auto task = make_sr_task(cfg, data, Rng(seed).spawn(kInitStream));
    Trainer<float> trainer(*task, schedule_from(cfg), adam_from(cfg), adam_from(cfg),
                           Rng(seed).spawn(kLoopStream));
    trainer.load_file(ckpt);

    const int n = std::min(cfg.integer("n_eval"), data.size());
    Shape hi_shape = data.images.shape();
    hi_shape[0] = n;
    TensorF hi(hi_shape);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < hi.numel(); ++i) hi[i] = data.images[i];
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(i)];
    const int factor = task->factor();
    TensorF lo = downsample_images(hi, factor);
    const int hi_h = hi.extent(2), hi_w = hi.extent(3);

    Rng eval_rng = Rng(seed).spawn(kEvalStream);
    TensorF sr = task->sr_generate(eval_rng, lo);

    auto upsample_all = [&](TensorF (*resize)(const TensorF&, int, int)) {
        TensorF up(hi_shape);
        for (int i = 0; i < n; ++i) {
            TensorF one({lo.extent(1), lo.extent(2), lo.extent(3)});
            const std::int64_t stride = one.numel();
            for (std::int64_t p = 0; p < stride; ++p) one[p] = lo[i * stride + p];
            TensorF big = resize(one, hi_h, hi_w);
            for (std::int64_t p = 0; p < big.numel(); ++p) up[i * big.numel() + p] = big[p];
        }
        return up;
    };
    TensorF up_lin = upsample_all(resize_bilinear);
    TensorF up_cub = upsample_all(resize_bicubic);

    write_ppm(out + "/ground_truth.ppm", tile_grid(hi, 8));
    write_ppm(out + "/input_lo.ppm", tile_grid(lo, 8));
    write_ppm(out + "/sr.ppm", tile_grid(sr, 8));
    write_ppm(out + "/bilinear.ppm", tile_grid(up_lin, 8));
    write_ppm(out + "/bicubic.ppm", tile_grid(up_cub, 8));

    auto mean_ms_ssim = [&](const TensorF& x) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < hi.extent(1); ++k) {
                TensorD a({hi_h, hi_w}), b({hi_h, hi_w});
                for (int r = 0; r < hi_h; ++r)
                    for (int c = 0; c < hi_w; ++c) {
                        a.at(r, c) = x.at(i, k, r, c);
                        b.at(r, c) = hi.at(i, k, r, c);
                    }
                acc += ms_ssim(a, b, 5, 2.0);
            }
        return acc / (static_cast<double>(n) * hi.extent(1));
    };
    const double ssim_sr = mean_ms_ssim(sr);
    const double ssim_lin = mean_ms_ssim(up_lin);
    const double ssim_cub = mean_ms_ssim(up_cub);

    auto fx = fit_extractor(data, cfg);
    const double acc_single = fx->accuracy(to_d(sr), labels);

    const int n_mc = cfg.integer("n_mc");
    const int num_classes = data.num_classes;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        TensorF one_lo({lo.extent(1), lo.extent(2), lo.extent(3)});
        const std::int64_t stride = one_lo.numel();
        Shape batch1 = lo.shape();
        batch1[0] = 1;
        TensorF lo1(batch1);
        for (std::int64_t p = 0; p < stride; ++p) lo1[p] = lo[i * stride + p];
        auto sample_logits = [&]() {
            TensorD lg = fx->logits(to_d(task->sr_generate(eval_rng, lo1)));
            TensorD row({num_classes});
            for (int c = 0; c < num_classes; ++c) row[c] = lg.at(0, c);
            return row;
        };
        if (mc_ensemble_predict(sample_logits, n_mc) == labels[static_cast<std::size_t>(i)])
            ++correct;
    }
    const double acc_mc = static_cast<double>(correct) / n;

    std::ofstream report(out + "/report.jsonl", std::ios::trunc);
    if (!report) throw IoError("cannot open report.jsonl");
    append_jsonl(report, {{"metric", "ms_ssim"}, {"method", "sr"}, {"value", ssim_sr}});
    append_jsonl(report, {{"metric", "ms_ssim"}, {"method", "bilinear"}, {"value", ssim_lin}});
    append_jsonl(report, {{"metric", "ms_ssim"}, {"method", "bicubic"}, {"value", ssim_cub}});
    append_jsonl(report, {{"metric", "accuracy"}, {"mc", false}, {"value", acc_single}});
    append_jsonl(report,
                 {{"metric", "accuracy"}, {"mc", true}, {"n_mc", n_mc}, {"value", acc_mc}});
}

}  // namespace projcgan
