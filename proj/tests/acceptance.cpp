// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//
//   freqdis_acceptance [--only 1,2,...]

#include "test_util.hpp"

#include "freqdis/image_io.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace freqdis;
using freqdis::test::max_abs_diff;
using freqdis::test::random;
namespace fs = std::filesystem;

namespace {

    using Clock = std::chrono::steady_clock;
    using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

    double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    struct Outcome {
        bool pass = false;
        std::string detail;
    };

    int failures = 0;

    void report(int id, const char* title, const Outcome& o) {
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass)
            ++failures;
    }

    template <class... A>
    std::string fmt(const char* f, A... a) {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, a...);
        return buf;
    }

    // Moves values at least `gap` away from zero so kinks stay outside the finite-difference stencil.
    Tensor<double> off_zero(Tensor<double> t, double gap = 0.05) {
        for (auto& v : t.mutable_data())
            v = v < 0 ? v - gap : v + gap;
        return t;
    }

    // ---------------------------------------------------------------------------------------------

    Outcome pyramid_round_trip() {
        const auto t0 = Clock::now();
        double exact = 0.0, literal = 0.0;
        for (std::uint64_t i = 0; i < 100; ++i) {
            auto img = random<float>({1, 3, 64, 64}, 1000 + i, 0.0, 1.0);
            exact = std::max(exact, max_abs_diff(pyramid::reconstruct(pyramid::decompose(img, 4)), img));
            literal = std::max(literal, max_abs_diff(pyramid::reconstruct(pyramid::decompose(
                                                         img, 4, pyramid::Mode::literal)),
                                                     img));
        }
        const double sec = seconds_since(t0);
        return {exact <= 1e-6 && sec < 10.0,
                fmt("exact max err %.3g (<= 1e-6), literal-mode max err %.4g, %.2f s (< 10 s)", exact, literal, sec)};
    }

    Outcome composition_oracle() {
        const auto t0 = Clock::now();
        const int s = 8, c = 16;
        double worst = 0.0;
        for (std::uint64_t t = 0; t < 1000; ++t) {
            auto fh = random<double>({s}, 3 * t + 1), fw = random<double>({s}, 3 * t + 2), fc = random<double>({c}, 3 * t + 3);
            auto o = wcca::compose_similarity(fh, fw, fc);
            if (o.shape() != Shape{s, s, c})
                return {false, "compose_similarity returned " + to_string(o.shape())};
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < s; ++i)
                    for (int j = 0; j < s; ++j) {
                        const double want = fh[static_cast<std::size_t>(i)] * fw[static_cast<std::size_t>(j)] *
                                            fc[static_cast<std::size_t>(ch)];
                        worst = std::max(worst, std::abs(o[static_cast<std::size_t>((i * s + j) * c + ch)] - want));
                    }
        }
        const double sec = seconds_since(t0);
        return {worst <= 1e-6 && sec < 10.0, fmt("1000 triples, max err %.3g (<= 1e-6), %.2f s (< 10 s)", worst, sec)};
    }

    Outcome gradient_suite() {
        const auto t0 = Clock::now();
        struct Case {
            const char* name;
            Fn f;
            std::vector<Tensor<double>> in;
        };
        std::vector<Case> prims;
        auto x4 = [](std::uint64_t seed) { return random<double>({2, 4, 6, 6}, seed); };
        prims.push_back({"conv2d zero pad", [](const auto& v) { return ops::conv2d(v[0], v[1], v[2], {1, 1}); },
                         {x4(1), random<double>({3, 4, 3, 3}, 2), random<double>({3}, 3)}});
        prims.push_back({"conv2d reflect stride2 grouped",
                         [](const auto& v) { return ops::conv2d(v[0], v[1], v[2], {2, 1, ops::PadMode::reflect, 2}); },
                         {x4(4), random<double>({4, 2, 3, 3}, 5), random<double>({4}, 6)}});
        prims.push_back({"window_conv2d",
                         [](const auto& v) { return ops::window_conv2d(v[0], v[1], v[2], 4, 2); },
                         {random<double>({1, 4, 8, 8}, 7), random<double>({4, 2, 3, 3}, 8), random<double>({4}, 9)}});
        prims.push_back({"add (broadcast)", [](const auto& v) { return ops::add(v[0], v[1]); },
                         {x4(10), random<double>({2, 4, 1, 1}, 11)}});
        prims.push_back({"sub (broadcast)", [](const auto& v) { return ops::sub(v[0], v[1]); },
                         {x4(12), random<double>({1, 4, 6, 6}, 13)}});
        prims.push_back({"mul (broadcast)", [](const auto& v) { return ops::mul(v[0], v[1]); },
                         {x4(14), random<double>({2, 1, 6, 6}, 15)}});
        prims.push_back({"add_scalar/mul_scalar",
                         [](const auto& v) { return ops::mul_scalar(ops::add_scalar(v[0], 0.3), -1.7); }, {x4(16)}});
        prims.push_back({"relu", [](const auto& v) { return ops::relu(v[0]); }, {off_zero(x4(17))}});
        prims.push_back({"tanh", [](const auto& v) { return ops::tanh(v[0]); }, {x4(18)}});
        prims.push_back({"sigmoid", [](const auto& v) { return ops::sigmoid(v[0]); }, {x4(19)}});
        prims.push_back({"clamp", [](const auto& v) { return ops::clamp(ops::add_scalar(v[0], 0.25), 0.0, 1.0); },
                         {off_zero(ops::mul_scalar(x4(20), 0.5), 0.05)}});
        prims.push_back({"pow_gamma", [](const auto& v) { return ops::pow_gamma(v[0], v[1]); },
                         {random<double>({2, 3, 4, 4}, 21, 0.1, 1.0), random<double>({2, 1, 1, 1}, 22, 0.5, 2.0)}});
        prims.push_back({"sum", [](const auto& v) { return ops::sum(v[0]); }, {x4(23)}});
        prims.push_back({"mean", [](const auto& v) { return ops::mean(v[0]); }, {x4(24)}});
        {
            auto a = x4(25);
            auto b = ops::add(a, off_zero(x4(26), 0.05)).detach();
            prims.push_back({"l1_mean", [](const auto& v) { return ops::l1_mean(v[0], v[1]); }, {a, b}});
        }
        prims.push_back({"global_avg_pool", [](const auto& v) { return ops::global_avg_pool(v[0]); }, {x4(27)}});
        prims.push_back({"linear", [](const auto& v) { return ops::linear(v[0], v[1], v[2]); },
                         {random<double>({2, 5}, 28), random<double>({3, 5}, 29), random<double>({3}, 30)}});
        prims.push_back({"reshape", [](const auto& v) { return ops::mul(ops::reshape(v[0], {2, 144}), v[1]); },
                         {x4(31), random<double>({2, 144}, 32)}});
        prims.push_back({"concat_channels",
                         [](const auto& v) { return ops::mul(ops::concat_channels<double>({v[0], v[1]}), v[2]); },
                         {x4(33), random<double>({2, 2, 6, 6}, 34), random<double>({2, 6, 6, 6}, 35)}});
        prims.push_back({"slice_channels", [](const auto& v) { return ops::mul(ops::slice_channels(v[0], 1, 2), v[1]); },
                         {x4(36), random<double>({2, 2, 6, 6}, 37)}});
        prims.push_back({"crop_spatial", [](const auto& v) { return ops::mul(ops::crop_spatial(v[0], 1, 2, 3, 4), v[1]); },
                         {x4(38), random<double>({2, 4, 3, 4}, 39)}});
        prims.push_back({"resize_bilinear up",
                         [](const auto& v) { return ops::mul(ops::resize_bilinear(v[0], 9, 11), v[1]); },
                         {x4(40), random<double>({2, 4, 9, 11}, 41)}});
        prims.push_back({"resize_bilinear down",
                         [](const auto& v) { return ops::mul(ops::resize_bilinear(v[0], 4, 3), v[1]); },
                         {x4(42), random<double>({2, 4, 4, 3}, 43)}});
        prims.push_back({"upsample2", [](const auto& v) { return ops::mul(ops::upsample2(v[0]), v[1]); },
                         {x4(44), random<double>({2, 4, 12, 12}, 45)}});
        prims.push_back({"downsample2", [](const auto& v) { return ops::mul(ops::downsample2(v[0]), v[1]); },
                         {x4(46), random<double>({2, 4, 3, 3}, 47)}});
        prims.push_back({"separable_blur",
                         [](const auto& v) {
                             return ops::mul(ops::separable_blur(v[0], {0.0625, 0.25, 0.375, 0.25, 0.0625}), v[1]);
                         },
                         {x4(48), random<double>({2, 4, 6, 6}, 49)}});
        prims.push_back({"matmul3", [](const auto& v) { return ops::mul(ops::matmul3(v[0], v[1]), v[2]); },
                         {random<double>({2, 3, 3}, 50), random<double>({2, 3, 4, 4}, 51), random<double>({2, 3, 4, 4}, 52)}});
        prims.push_back({"outer3", [](const auto& v) { return ops::mul(ops::outer3(v[0], v[1], v[2]), v[3]); },
                         {random<double>({4}, 53), random<double>({4}, 54), random<double>({3}, 55),
                          random<double>({4, 4, 3}, 56)}});
        prims.push_back({"compose_windows",
                         [](const auto& v) { return ops::mul(ops::compose_windows(v[0], v[1], v[2]), v[3]); },
                         {random<double>({1, 4, 2, 2}, 57), random<double>({1, 4, 2, 2}, 58),
                          random<double>({1, 3, 2, 2}, 59), random<double>({1, 3, 8, 8}, 60)}});

        double worst_prim = 0.0;
        std::string worst_name;
        for (auto& c : prims) {
            const double e = grad_check(c.f, c.in);
            if (e > worst_prim) {
                worst_prim = e;
                worst_name = c.name;
            }
        }

        // Adjuster + restorer + disentangled loss; every parameter tensor and the input are probed.
        auto acfg = test::tiny_acca();
        ldrm::LdrmConfig lcfg;
        lcfg.levels = 3;
        lcfg.width = 4;
        lcfg.blocks = 1;
        nn::Rng rng(14);
        auto aw = acca::AccaWeights<double>::init(acfg, rng);
        auto net = ldrm::make_backbone<double>(lcfg, rng);
        test::jitter(aw.params(), 15, 0.1);
        test::jitter(net->params(), 16, 0.1);
        auto img = random<double>({1, 3, 8, 8}, 17, 0.05, 1.0);
        auto gt = random<double>({1, 3, 8, 8}, 18, 0.0, 1.0);
        std::vector<Tensor<double>> inputs;
        for (const auto& [n, t] : aw.params())
            inputs.push_back(t);
        for (const auto& [n, t] : net->params())
            inputs.push_back(t);
        inputs.push_back(img);
        Fn composite = [&](const auto& in) {
            auto out = ldrm::enhance(in.back(), aw, acfg, *net, lcfg);
            return losses::disentangled_loss(out.restored, pyramid::decompose(gt, lcfg.levels), out.coarse_bands, 1.0);
        };
        const auto r = grad_check_detailed(composite, inputs, {.max_probes_per_input = 4, .seed = 3});
        const double sec = seconds_since(t0);
        return {worst_prim <= 1e-6 && r.max_rel_error <= 1e-4 && sec < 120.0,
                fmt("%zu primitives, worst %.3g (%s) (<= 1e-6); composite %.3g over %zu probes (<= 1e-4); %.1f s "
                    "(< 120 s)",
                    prims.size(), worst_prim, worst_name.c_str(), r.max_rel_error, r.probes, sec)};
    }

    Outcome complexity_scaling() {
        wcca::WccaConfig cfg{16, 8};
        nn::Rng rng(0);
        auto w = wcca::WccaWeights<float>::init(cfg, rng);
        const double e256 = static_cast<double>(wcca::flops_empirical(256, 256, w, cfg));
        const double e128 = static_cast<double>(wcca::flops_empirical(128, 128, w, cfg));
        const double ratio = e256 / e128;
        const double analytic = wcca::flops_analytic(256, 256, 16, 8);
        return {std::abs(ratio - 4.0) <= 0.04 && analytic == 8388608.0,
                fmt("empirical 256^2/128^2 = %.0f/%.0f = %.4f (4.0 +- 1%%); analytic %.0f (== 8388608)", e256, e128, ratio,
                    analytic)};
    }

    Outcome identity_path() {
        acca::AccaConfig acfg;
        ldrm::LdrmConfig lcfg;
        double worst = 0.0;
        const std::vector<std::pair<int, int>> sizes{{64, 64}, {64, 48}, {32, 96}, {128, 72}};
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            nn::Rng rng(100 + i);
            auto aw = acca::AccaWeights<float>::init(acfg, rng);
            auto net = ldrm::make_backbone<float>(lcfg, rng);
            auto img = random<float>({1, 3, sizes[i].first, sizes[i].second}, 200 + i, 0.0, 1.0);
            NoGradGuard ng;
            worst = std::max(worst, max_abs_diff(ldrm::enhance(img, aw, acfg, *net, lcfg).output, img));
        }
        return {worst <= 1e-4, fmt("%zu inputs in [0, 1], max err %.3g (<= 1e-4)", sizes.size(), worst)};
    }

    std::string cell_list(const eval::AblationTable& t, const std::string& config) {
        std::ostringstream os;
        const char* sep = "";
        for (double p : t.psnr_of(config)) {
            os << sep << fmt("%.3f", p);
            sep = " ";
        }
        return os.str();
    }

    struct AblationResults {
        Outcome li, freeze;
    };

    AblationResults ablations() {
        const auto data = eval::synth_dataset(200, 64, {});
        training::Dataset train(data.begin(), data.begin() + 160), test(data.begin() + 160, data.end());
        eval::Experiment ex(std::move(train), std::move(test), {}, eval::default_threads());
        ex.on_trained = [](const std::string& what, std::uint64_t seed, double sec) {
            std::fprintf(stderr, "  trained %s (seed %llu) in %.1f s\n", what.c_str(), static_cast<unsigned long long>(seed),
                         sec);
        };
        const std::vector<std::uint64_t> seeds{0, 1, 2};

        auto t0 = Clock::now();
        const auto li = ex.run("li", seeds);
        const double li_sec = seconds_since(t0);
        std::printf("# li suite (200-pair synthetic set, 160 train / 40 test, seeds 0 1 2)\n%s", li.summary_csv().c_str());
        const double with = li.median_psnr("full_with_li"), without = li.median_psnr("full_without_li"),
                     unified = li.median_psnr("unified");
        AblationResults r;
        r.li = {with >= without + 0.3 && with >= unified + 0.3 && li_sec <= 90 * 60.0,
                fmt("median PSNR with L_i %.3f, without %.3f (%+.3f dB, need >= +0.3), unified %.3f (%+.3f dB, need >= "
                    "+0.3); %.1f min (<= 90)",
                    with, without, with - without, unified, with - unified, li_sec / 60.0)};

        t0 = Clock::now();
        const auto fr = ex.run("freeze", seeds);
        std::printf("# freeze suite (paired seeds 0 1 2)\n%s", fr.summary_csv().c_str());
        const double frozen = fr.median_psnr("frozen"), e2e = fr.median_psnr("end_to_end");
        std::string detail = fmt("median PSNR frozen %.3f vs end-to-end %.3f (%+.3f dB); per seed frozen [%s], end-to-end "
                                 "[%s]; %.1f min",
                                 frozen, e2e, frozen - e2e, cell_list(fr, "frozen").c_str(),
                                 cell_list(fr, "end_to_end").c_str(), seconds_since(t0) / 60.0);
        if (frozen < e2e)
            detail += "; FLAGGED: frozen below end-to-end at this scale";
        r.freeze = {frozen >= e2e, detail};
        return r;
    }

#ifdef FREQDIS_CLI_PATH
    int run_cli(const std::string& args, std::string* out = nullptr) {
        const auto log = fs::temp_directory_path() / ("freqdis_accept_cli_" + std::to_string(::getpid()) + ".txt");
        const std::string cmd = std::string("\"") + FREQDIS_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
        const int rc = std::system(cmd.c_str());
        if (out) {
            std::ifstream in(log);
            *out = {std::istreambuf_iterator<char>(in), {}};
        }
        fs::remove(log);
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }

    std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }
#endif

    Outcome param_budget() {
        nn::Rng rng(0);
        const auto n = acca::param_count(acca::AccaWeights<float>::init(acca::AccaConfig{}, rng));
        const bool in_range = n >= 60000 && n <= 120000;
#ifdef FREQDIS_CLI_PATH
        std::string out;
        const int rc = run_cli("bench", &out);
        const bool printed = rc == 0 && out.find("acca params " + std::to_string(n)) != std::string::npos;
        return {in_range && printed, fmt("param_count %lld (in [60K, 120K]); `freqdis bench` %s", static_cast<long long>(n),
                                         printed ? "prints it" : "does not print it")};
#else
        return {false, fmt("param_count %lld; CLI not built, cannot check `freqdis bench`", static_cast<long long>(n))};
#endif
    }

    Outcome metrics() {
        auto a = random<float>({1, 3, 32, 32}, 1, 0.3, 0.7);
        auto shifted = [&](float d) {
            auto b = a.detach();
            auto v = b.mutable_data();
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] += (i % 2 ? d : -d);
            return b;
        };
        const double p20 = eval::psnr(a, shifted(0.1f)), p40 = eval::psnr(a, shifted(0.01f));
        auto img = eval::clean_image(48, 48, 7, 1);
        auto other = eval::synth_pair(img, {}, 1).low;
        const double same = eval::ssim(img, img);
        const double asym = std::abs(eval::ssim(img, other) - eval::ssim(other, img));
        return {std::abs(p20 - 20.0) <= 0.01 && std::abs(p40 - 40.0) <= 0.01 && same == 1.0 && asym <= 1e-9,
                fmt("psnr %.4f @ MSE 0.01, %.4f @ MSE 1e-4; ssim(a,a) = %.17g; |ssim(a,b) - ssim(b,a)| = %.3g", p20, p40,
                    same, asym)};
    }

    Outcome determinism() {
#ifdef FREQDIS_CLI_PATH
        const auto dir = fs::temp_directory_path() / ("freqdis_accept_det_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        {
            std::ofstream cfg(dir / "cfg.json");
            cfg << R"({"acca_epochs": 2, "ldrm_iters": 40, "crop": 32, "seed": 5})" << "\n";
        }
        const std::string data = (dir / "data").string(), cfg = "--config " + (dir / "cfg.json").string() + " ";
        const std::string acca = (dir / "a" / "acca.fdw").string();
        Outcome o;
        if (run_cli("synth --count 24 --size 64 --seed 7 --out " + data) != 0 ||
            run_cli(cfg + "train --phase acca --data-dir " + data + " --out " + (dir / "a").string()) != 0) {
            o = {false, "setup (synth / train acca) failed"};
        } else {
            const int r1 = run_cli(cfg + "--single-thread train --phase ldrm --data-dir " + data + " --acca " + acca +
                                   " --out " + (dir / "run1").string());
            const int r2 = run_cli(cfg + "--single-thread train --phase ldrm --data-dir " + data + " --acca " + acca +
                                   " --out " + (dir / "run2").string());
            const auto w1 = slurp(dir / "run1" / "ldrm.fdw"), w2 = slurp(dir / "run2" / "ldrm.fdw");
            o = {r1 == 0 && r2 == 0 && !w1.empty() && w1 == w2,
                 fmt("two single-thread `train --phase ldrm` runs: exit %d/%d, %zu vs %zu bytes, %s", r1, r2, w1.size(),
                     w2.size(), w1 == w2 ? "byte-identical" : "DIFFERENT")};
        }
        fs::remove_all(dir);
        return o;
#else
        return {false, "CLI not built"};
#endif
    }

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');)
                only.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: %s [--only 1,2,...]\n", argv[0]);
            return 2;
        }
    }
    auto want = [&](int id) { return only.empty() || only.count(id) > 0; };

    const auto t0 = Clock::now();
    try {
        if (want(1))
            report(1, "pyramid round trip", pyramid_round_trip());
        if (want(2))
            report(2, "composition oracle", composition_oracle());
        if (want(3))
            report(3, "gradient suite", gradient_suite());
        if (want(4))
            report(4, "complexity scaling", complexity_scaling());
        if (want(5))
            report(5, "identity path", identity_path());
        if (want(8))
            report(8, "adjuster parameter budget", param_budget());
        if (want(9))
            report(9, "metric correctness", metrics());
        if (want(10))
            report(10, "training determinism", determinism());
        if (want(6) || want(7)) {
            const auto r = ablations();
            if (want(6))
                report(6, "disentanglement effect", r.li);
            if (want(7))
                report(7, "freeze ablation", r.freeze);
        }
    } catch (const std::exception& e) {
        std::printf("[FAIL] aborted: %s\n", e.what());
        return 1;
    }
    std::printf("acceptance: %d failing, %.1f min total\n", failures, seconds_since(t0) / 60.0);
    return failures == 0 ? 0 : 1;
}
