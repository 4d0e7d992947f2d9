// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

// freqdis: command-line front end. Exit status 0 on success, 1 on usage errors, 2 on runtime errors.

#include "freqdis/config.hpp"
#include "freqdis/freqdis.hpp"
#include "freqdis/image_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace freqdis;

namespace {

    constexpr int kExitUsage = 1;
    constexpr int kExitRuntime = 2;

    struct Globals {
        std::string config;
        std::optional<std::uint64_t> seed;
        bool single_thread = false;

        training::TrainConfig train_config() const {
            auto c = config.empty() ? training::TrainConfig{} : freqdis::config::load(config);
            if (seed)
                c.seed = *seed;
            return c;
        }

        int threads() const { return single_thread ? 1 : eval::default_threads(); }
    };

    void ensure_dir(const fs::path& p) {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec)
            throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
    }

    void write_text(const fs::path& p, const std::string& s) {
        std::ofstream out(p);
        if (!out || !(out << s))
            throw IoError("cannot write '" + p.string() + "'");
    }

    bool is_image(const fs::path& p) {
        auto e = p.extension().string();
        std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
        return e == ".png" || e == ".ppm" || e == ".pnm";
    }

    std::vector<fs::path> list_images(const fs::path& dir) {
        if (!fs::is_directory(dir))
            throw IoError("'" + dir.string() + "' is not a directory");
        std::vector<fs::path> out;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && is_image(e.path()))
                out.push_back(e.path());
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Paired folder: low/ plus gt/ (or high/), matched by file stem.
    training::Dataset load_pairs(const fs::path& dir) {
        const fs::path low_dir = dir / "low";
        fs::path gt_dir = dir / "gt";
        if (!fs::is_directory(gt_dir) && fs::is_directory(dir / "high"))
            gt_dir = dir / "high";
        training::Dataset data;
        for (const auto& lp : list_images(low_dir)) {
            fs::path gp;
            for (const auto& cand : list_images(gt_dir))
                if (cand.stem() == lp.stem())
                    gp = cand;
            if (gp.empty())
                throw IoError("no ground truth for '" + lp.string() + "' in '" + gt_dir.string() + "'");
            auto low = io::load_image(lp);
            auto gt = io::load_image(gp);
            if (low.shape() != gt.shape())
                throw DimensionError("pair '" + lp.stem().string() + "': low " + to_string(low.shape()) + " vs gt " +
                                     to_string(gt.shape()));
            data.push_back({lp.stem().string(), low, gt});
        }
        if (data.empty())
            throw ConfigError("no image pairs under '" + dir.string() + "'");
        return data;
    }

    acca::AccaWeights<float> load_acca(const fs::path& path, const training::TrainConfig& cfg) {
        nn::Rng rng(0);
        auto w = acca::AccaWeights<float>::init(cfg.acca(), rng);
        weights::load(w.params(), path);
        return w;
    }

    std::unique_ptr<ldrm::Backbone<float>> load_backbone(const fs::path& path, const ldrm::BackboneSpec& spec,
                                                         const std::string& name) {
        nn::Rng rng(0);
        auto net = ldrm::BackboneRegistry<float>::instance().create(name, spec, rng);
        weights::load(net->params(), path);
        return net;
    }

    /// Pads to a multiple of `m`, runs `fn`, crops back to the original size.
    eval::Enhancer padded(eval::Enhancer fn, std::int64_t m) {
        return [fn = std::move(fn), m](const Tensor<float>& x) {
            const auto h = x.dim(2), w = x.dim(3);
            const auto ph = io::round_up(h, m), pw = io::round_up(w, m);
            if (ph == h && pw == w)
                return fn(x);
            return io::crop(fn(io::pad_to(x, ph, pw)), 0, 0, h, w);
        };
    }

    std::int64_t pipeline_multiple(const training::TrainConfig& c) {
        return std::lcm<std::int64_t>(c.window, std::int64_t{1} << (c.levels - 1));
    }

    // --------------------------------------------------------------------------------------------

    struct DecomposeArgs {
        std::string input, out_dir, mode = "exact";
        int levels = pyramid::kDefaultLevels;
    };

    int run_decompose(const DecomposeArgs& a) {
        const auto mode = pyramid::parse_mode(a.mode);
        pyramid::check_levels({1, 3, 1 << (a.levels - 1), 1 << (a.levels - 1)}, a.levels);
        auto img = io::load_image(a.input);
        const auto h = img.dim(2), w = img.dim(3), m = std::int64_t{1} << (a.levels - 1);
        auto padded_img = io::pad_to(img, io::round_up(h, m), io::round_up(w, m));
        auto stack = pyramid::decompose(padded_img, a.levels, mode);
        ensure_dir(a.out_dir);
        for (int k = 1; k <= a.levels; ++k) {
            const auto& band = stack.band(k);
            const std::string stem = "band" + std::to_string(k);
            weights::save(nn::ParamList<float>{{stem, band}}, fs::path(a.out_dir) / (stem + ".fdw"));
            io::save_image(k < a.levels ? ops::add_scalar(band, 0.5f) : band, fs::path(a.out_dir) / (stem + ".png"));
        }
        config::Json j;
        j["levels"] = a.levels;
        j["mode"] = std::string(pyramid::mode_name(mode));
        j["height"] = h;
        j["width"] = w;
        j["padded_height"] = padded_img.dim(2);
        j["padded_width"] = padded_img.dim(3);
        write_text(fs::path(a.out_dir) / "pyramid.json", j.dump(2) + "\n");
        std::cout << "wrote " << a.levels << " bands (" << pyramid::mode_name(mode) << ") to " << a.out_dir << "\n";
        return 0;
    }

    struct ReconstructArgs {
        std::string in_dir, output;
        int depth = 8;
    };

    int run_reconstruct(const ReconstructArgs& a) {
        const fs::path dir(a.in_dir);
        std::ifstream in(dir / "pyramid.json");
        if (!in)
            throw IoError("missing '" + (dir / "pyramid.json").string() + "'");
        config::Json j;
        try {
            j = config::Json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("pyramid.json: " + std::string(e.what()));
        }
        pyramid::PyramidStack<float> stack;
        try {
            stack.mode = pyramid::parse_mode(j.at("mode").get<std::string>());
            const int levels = j.at("levels").get<int>();
            for (int k = 1; k <= levels; ++k) {
                auto stored = weights::read(dir / ("band" + std::to_string(k) + ".fdw"));
                if (stored.size() != 1)
                    throw IoError("band file " + std::to_string(k) + " must hold exactly one tensor");
                stack.bands.emplace_back(stored[0].shape, stored[0].data);
            }
            auto img = pyramid::reconstruct(stack);
            img = io::crop(img, 0, 0, j.at("height").get<std::int64_t>(), j.at("width").get<std::int64_t>());
            io::save_image(img, a.output, a.depth);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("pyramid.json: " + std::string(e.what()));
        }
        std::cout << "wrote " << a.output << "\n";
        return 0;
    }

    struct EnhanceArgs {
        std::string input, output, acca, ldrm;
        int levels = 0;
        int depth = 8;
    };

    int run_enhance_coarse(const Globals& g, const EnhanceArgs& a) {
        const auto cfg = g.train_config();
        const auto w = load_acca(a.acca, cfg);
        auto fn = padded([&](const Tensor<float>& x) { return acca::acca_forward(x, w, cfg.acca()); }, cfg.window);
        NoGradGuard no_grad;
        io::save_image(ops::clamp(fn(io::load_image(a.input)), 0.0f, 1.0f), a.output, a.depth);
        std::cout << "wrote " << a.output << "\n";
        return 0;
    }

    int run_enhance(const Globals& g, const EnhanceArgs& a) {
        auto cfg = g.train_config();
        if (a.levels > 0)
            cfg.levels = a.levels;
        cfg.validate();
        const auto w = load_acca(a.acca, cfg);
        const auto net = load_backbone(a.ldrm, cfg.ldrm().backbone_spec(), cfg.backbone);
        auto fn = padded(
            [&](const Tensor<float>& x) { return ldrm::enhance(x, w, cfg.acca(), *net, cfg.ldrm()).output; },
            pipeline_multiple(cfg));
        NoGradGuard no_grad;
        io::save_image(ops::clamp(fn(io::load_image(a.input)), 0.0f, 1.0f), a.output, a.depth);
        std::cout << "wrote " << a.output << "\n";
        return 0;
    }

    struct TrainArgs {
        std::string phase, data_dir, out, acca;
    };

    void report_history(const training::History& h, const fs::path& out) {
        h.write_csv((out / ("history_" + h.phase + ".csv")).string());
        for (const auto& n : h.notes)
            std::cout << "note: " << n << "\n";
        if (!h.rows.empty())
            std::printf("%s: %zu logged steps, first loss %.6f, final loss %.6f, %.1f s\n", h.phase.c_str(),
                        h.rows.size(), h.rows.front().l_total, h.rows.back().l_total, h.seconds);
    }

    int run_train(const Globals& g, const TrainArgs& a) {
        auto cfg = g.train_config();
        if (!a.phase.empty())
            cfg.phase = training::parse_phase(a.phase);
        cfg.validate();
        const auto data = load_pairs(a.data_dir);
        const fs::path out(a.out);
        ensure_dir(out);
        write_text(out / ("config_" + training::phase_name(cfg.phase) + ".json"), config::to_json(cfg).dump(2) + "\n");

        auto adjuster = [&] {
            fs::path p = a.acca.empty() ? out / "acca.fdw" : fs::path(a.acca);
            if (!fs::exists(p))
                throw ConfigError("phase " + training::phase_name(cfg.phase) + " needs adjuster weights; pass --acca or "
                                  "train --phase acca into '" + out.string() + "' first");
            return load_acca(p, cfg);
        };

        training::History h;
        switch (cfg.phase) {
        case training::Phase::acca: {
            auto w = training::train_acca(data, cfg, &h);
            weights::save(w.params(), out / "acca.fdw");
            break;
        }
        case training::Phase::ldrm: {
            const auto w = adjuster();
            auto net = training::train_ldrm(data, w, cfg, &h);
            weights::save(net->params(), out / "ldrm.fdw");
            break;
        }
        case training::Phase::e2e: {
            cfg.freeze_acca = false;
            const auto w = adjuster();
            auto r = training::train_end_to_end(data, w, cfg, &h);
            weights::save(r.acca.params(), out / "acca_e2e.fdw");
            weights::save(r.net->params(), out / "ldrm_e2e.fdw");
            break;
        }
        case training::Phase::unified: {
            auto net = training::train_unified(data, cfg, &h);
            weights::save(net->params(), out / "unified.fdw");
            break;
        }
        }
        report_history(h, out);
        return 0;
    }

    struct EvalArgs {
        std::string pairs, model = "full", acca, ldrm, unified, report;
    };

    int run_eval(const Globals& g, const EvalArgs& a) {
        const auto cfg = g.train_config();
        const auto data = load_pairs(a.pairs);
        eval::Enhancer fn;
        acca::AccaWeights<float> w;
        std::unique_ptr<ldrm::Backbone<float>> net;
        auto need = [](const std::string& v, const char* flag) {
            if (v.empty())
                throw ConfigError(std::string("model needs ") + flag);
        };
        if (a.model == "input") {
            fn = [](const Tensor<float>& x) { return x; };
        } else if (a.model == "coarse") {
            need(a.acca, "--acca");
            w = load_acca(a.acca, cfg);
            fn = padded([&](const Tensor<float>& x) { return acca::acca_forward(x, w, cfg.acca()); }, cfg.window);
        } else if (a.model == "full") {
            need(a.acca, "--acca");
            need(a.ldrm, "--ldrm");
            w = load_acca(a.acca, cfg);
            net = load_backbone(a.ldrm, cfg.ldrm().backbone_spec(), cfg.backbone);
            fn = padded([&](const Tensor<float>& x) { return ldrm::enhance(x, w, cfg.acca(), *net, cfg.ldrm()).output; },
                        pipeline_multiple(cfg));
        } else if (a.model == "unified") {
            need(a.unified, "--unified");
            net = load_backbone(a.unified, {3, 3, cfg.width, cfg.blocks}, cfg.backbone);
            fn = [&](const Tensor<float>& x) { return ldrm::unified_forward(x, *net); };
        } else {
            throw UsageError("unknown model '" + a.model + "' (expected full, coarse, unified or input)");
        }
        auto rep = eval::evaluate(data, fn, "", g.threads());
        if (!a.report.empty())
            rep.write_csv(a.report);
        std::printf("%s: %zu pairs, PSNR %.4f dB, SSIM %.4f (data %s)\n", a.model.c_str(), rep.rows.size(),
                    rep.psnr_mean, rep.ssim_mean, rep.fingerprint.c_str());
        return 0;
    }

    struct SynthArgs {
        int count = 200;
        int size = 64;
        std::uint64_t seed = 7;
        int depth = 8;
        std::string out, clean_dir;
    };

    int run_synth(const SynthArgs& a) {
        eval::SynthSpec spec;
        spec.seed = a.seed;
        training::Dataset data;
        if (a.clean_dir.empty()) {
            if (a.count <= 0 || a.size <= 0)
                throw UsageError("--count and --size must be positive");
            data = eval::synth_dataset(a.count, a.size, spec);
        } else {
            std::uint64_t i = 0;
            for (const auto& p : list_images(a.clean_dir)) {
                auto pair = eval::synth_pair(io::load_image(p), spec, i++);
                data.push_back({p.stem().string(), pair.low, pair.gt});
            }
            if (data.empty())
                throw ConfigError("no images in '" + a.clean_dir + "'");
        }
        const fs::path out(a.out);
        ensure_dir(out / "low");
        ensure_dir(out / "gt");
        for (const auto& p : data) {
            io::save_image(p.low, out / "low" / (p.name + ".png"), a.depth);
            io::save_image(p.gt, out / "gt" / (p.name + ".png"), a.depth);
        }
        config::Json j;
        j["count"] = data.size();
        j["seed"] = a.seed;
        j["size"] = a.clean_dir.empty() ? a.size : 0;
        j["gamma_dark"] = {spec.gamma_dark.lo, spec.gamma_dark.hi};
        j["gain"] = {spec.gain.lo, spec.gain.hi};
        j["noise_sigma"] = {spec.noise_sigma.lo, spec.noise_sigma.hi};
        j["hash"] = eval::hex64(eval::dataset_hash(data));
        write_text(out / "manifest.json", j.dump(2) + "\n");
        std::cout << "wrote " << data.size() << " pairs to " << a.out << " (hash " << j["hash"].get<std::string>()
                  << ")\n";
        return 0;
    }

    struct AblateArgs {
        std::string suite, out, data_dir;
        int seeds = 3;
        int count = 200;
        int size = 64;
        double train_fraction = 0.8;
    };

    int run_ablate(const Globals& g, const AblateArgs& a) {
        const auto cfg = g.train_config();
        auto data = a.data_dir.empty() ? eval::synth_dataset(a.count, a.size, {}) : load_pairs(a.data_dir);
        if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0))
            throw UsageError("--train-fraction must lie in (0, 1)");
        const auto n_train = static_cast<std::size_t>(std::lround(a.train_fraction * static_cast<double>(data.size())));
        if (n_train == 0 || n_train >= data.size())
            throw ConfigError("dataset of " + std::to_string(data.size()) + " pairs too small to split");
        training::Dataset train(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_train));
        training::Dataset test(data.begin() + static_cast<std::ptrdiff_t>(n_train), data.end());
        if (a.seeds <= 0)
            throw UsageError("--seeds must be positive");
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < a.seeds; ++i)
            seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));

        eval::Experiment ex(std::move(train), std::move(test), cfg, g.threads());
        ex.on_trained = [](const std::string& what, std::uint64_t seed, double sec) {
            std::fprintf(stderr, "trained %s (seed %llu) in %.1f s\n", what.c_str(),
                         static_cast<unsigned long long>(seed), sec);
        };
        const fs::path out(a.out);
        ensure_dir(out);
        std::vector<std::string> suites;
        if (a.suite == "all")
            suites = eval::suite_names();
        else
            suites.push_back(a.suite);
        for (const auto& s : suites) {
            auto t = ex.run(s, seeds);
            write_text(out / (s + "_summary.csv"), t.summary_csv());
            write_text(out / (s + "_cells.csv"), t.cells_csv());
            std::cout << "# suite " << s << "\n" << t.summary_csv();
            if (s == "freeze" && t.median_psnr("frozen") < t.median_psnr("end_to_end"))
                std::cout << "note: frozen median PSNR is below end-to-end on this run\n";
        }
        return 0;
    }

    struct BenchArgs {
        std::int64_t h = 256, w = 256;
        int c = 16, s = 8;
    };

    void bench_wcca(const BenchArgs& a) {
        wcca::WccaConfig cfg{a.c, a.s};
        nn::Rng rng(0);
        auto w = wcca::WccaWeights<float>::init(cfg, rng);
        const double analytic = wcca::flops_analytic(a.h, a.w, a.c, a.s);
        const auto empirical = wcca::flops_empirical(a.h, a.w, w, cfg);
        std::printf("wcca H=%lld W=%lld C=%d s=%d\n", static_cast<long long>(a.h), static_cast<long long>(a.w), a.c, a.s);
        std::printf("  analytic  %.0f\n  empirical %llu\n  ratio     %.4f\n", analytic,
                    static_cast<unsigned long long>(empirical), static_cast<double>(empirical) / analytic);
    }

    void bench_acca(const Globals& g) {
        const auto cfg = g.train_config();
        nn::Rng rng(0);
        auto w = acca::AccaWeights<float>::init(cfg.acca(), rng);
        std::printf("acca params %lld\n", static_cast<long long>(acca::param_count(w)));
    }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-disentangled low-light enhancement: pyramid codec, adjuster, restorer, training and "
                 "evaluation."};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "Training/model config JSON (see README)");
    auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
    app.add_flag("--single-thread", g.single_thread, "Force one worker thread (deterministic mode)");

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Write the Laplace bands of an image");
    c_dec->add_option("--input", dec.input)->required();
    c_dec->add_option("--levels", dec.levels)->capture_default_str();
    c_dec->add_option("--mode", dec.mode, "exact or paper-literal")
        ->check(CLI::IsMember({"exact", "paper-literal", "literal"}))
        ->capture_default_str();
    c_dec->add_option("--out-dir", dec.out_dir)->required();

    ReconstructArgs rec;
    auto* c_rec = app.add_subcommand("reconstruct", "Rebuild an image from a decompose directory");
    c_rec->add_option("--in-dir", rec.in_dir)->required();
    c_rec->add_option("--output", rec.output)->required();
    c_rec->add_option("--depth", rec.depth, "PNG bit depth, 8 or 16")->capture_default_str();

    EnhanceArgs enc;
    auto* c_enc = app.add_subcommand("enhance-coarse", "Run the adjuster only");
    c_enc->add_option("--input", enc.input)->required();
    c_enc->add_option("--weights,--acca", enc.acca)->required();
    c_enc->add_option("--output", enc.output)->required();
    c_enc->add_option("--depth", enc.depth)->capture_default_str();

    EnhanceArgs enh;
    auto* c_enh = app.add_subcommand("enhance", "Run the full coarse-to-fine pipeline");
    c_enh->add_option("--input", enh.input)->required();
    c_enh->add_option("--acca", enh.acca)->required();
    c_enh->add_option("--ldrm", enh.ldrm)->required();
    c_enh->add_option("--levels", enh.levels, "Override the config level count");
    c_enh->add_option("--output", enh.output)->required();
    c_enh->add_option("--depth", enh.depth)->capture_default_str();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train one phase");
    c_tr->add_option("--phase", tr.phase, "acca, ldrm, e2e or unified (default from config)")
        ->check(CLI::IsMember({"acca", "ldrm", "e2e", "end-to-end", "unified"}));
    c_tr->add_option("--data-dir", tr.data_dir, "Paired folder with low/ and gt/")->required();
    c_tr->add_option("--out", tr.out, "Output directory for weights and history")->required();
    c_tr->add_option("--acca", tr.acca, "Adjuster weights for ldrm/e2e (default <out>/acca.fdw)");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Score a model on a paired folder");
    c_ev->add_option("--pairs", ev.pairs)->required();
    c_ev->add_option("--model", ev.model, "full, coarse, unified or input")
        ->check(CLI::IsMember({"full", "coarse", "unified", "input"}))
        ->capture_default_str();
    c_ev->add_option("--acca", ev.acca);
    c_ev->add_option("--ldrm", ev.ldrm);
    c_ev->add_option("--unified", ev.unified);
    c_ev->add_option("--report", ev.report, "Per-image CSV");

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synth", "Generate synthetic low-light pairs");
    c_sy->add_option("--count", sy.count)->capture_default_str();
    c_sy->add_option("--size", sy.size)->capture_default_str();
    c_sy->add_option("--seed", sy.seed)->capture_default_str();
    c_sy->add_option("--depth", sy.depth)->capture_default_str();
    c_sy->add_option("--clean-dir", sy.clean_dir, "Degrade these images instead of procedural ones");
    c_sy->add_option("--out", sy.out)->required();

    AblateArgs ab;
    auto* c_ab = app.add_subcommand("ablate", "Train and score an ablation suite");
    c_ab->add_option("--suite", ab.suite, "li, k, alpha, freeze or all")
        ->check(CLI::IsMember({"li", "k", "alpha", "freeze", "all"}))
        ->required();
    c_ab->add_option("--out", ab.out)->required();
    c_ab->add_option("--seeds", ab.seeds, "Number of seeds, counted up from --seed")->capture_default_str();
    c_ab->add_option("--data-dir", ab.data_dir, "Paired folder (default: synthetic set)");
    c_ab->add_option("--count", ab.count)->capture_default_str();
    c_ab->add_option("--size", ab.size)->capture_default_str();
    c_ab->add_option("--train-fraction", ab.train_fraction)->capture_default_str();

    BenchArgs bw;
    auto* c_bench = app.add_subcommand("bench", "Cost accounting");
    auto* c_bw = c_bench->add_subcommand("wcca", "Analytic vs counted multiply-accumulates");
    c_bw->set_help_flag("--help", "Print this help message and exit");
    c_bw->add_option("--h", bw.h)->capture_default_str();
    c_bw->add_option("--w", bw.w)->capture_default_str();
    c_bw->add_option("--c", bw.c)->capture_default_str();
    c_bw->add_option("--s", bw.s)->capture_default_str();
    auto* c_ba = c_bench->add_subcommand("acca", "Adjuster parameter count");

    bool dump = false;
    auto* c_cfg = app.add_subcommand("config", "Show or check a configuration");
    c_cfg->add_flag("--dump", dump, "Print the effective configuration with every default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    if (*seed_opt)
        g.seed = seed;

    try {
        if (*c_dec)
            return run_decompose(dec);
        if (*c_rec)
            return run_reconstruct(rec);
        if (*c_enc)
            return run_enhance_coarse(g, enc);
        if (*c_enh)
            return run_enhance(g, enh);
        if (*c_tr)
            return run_train(g, tr);
        if (*c_ev)
            return run_eval(g, ev);
        if (*c_sy)
            return run_synth(sy);
        if (*c_ab)
            return run_ablate(g, ab);
        if (*c_bench) {
            const bool any = *c_bw || *c_ba;
            if (*c_bw || !any)
                bench_wcca(bw);
            if (*c_ba || !any)
                bench_acca(g);
            return 0;
        }
        if (*c_cfg) {
            const auto cfg = g.train_config();
            if (dump)
                std::cout << config::to_json(cfg).dump(2) << "\n";
            else
                std::cout << "config ok\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
