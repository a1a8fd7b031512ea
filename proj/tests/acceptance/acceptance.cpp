// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: acceptance [--work DIR] [--only NAME]

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sanet/app.hpp"
#include "sanet/colorimetry.hpp"
#include "sanet/gradcore.hpp"
#include "sanet/metrics.hpp"
#include "sanet/network.hpp"
#include "sanet/pcs.hpp"
#include "support/mini_net.hpp"
#include "support/oracles.hpp"

using namespace sanet;
using namespace sanet::grad;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Gradient certification

using Fn = std::function<Var(Graph<double>&, Var)>;

Fn probe(Fn op, std::uint64_t seed) {
    return [op, seed](Graph<double>& g, Var x) {
        const Var y = op(g, x);
        std::mt19937_64 gen(seed * 31 + 7);
        return reduce_sum(g, mul(g, y, g.leaf(oracle::random_tensor(gen, g.shape(y)))));
    };
}

Outcome gradient_certification() {
    const auto t0 = Clock::now();
    const double h = 1e-5;
    double worst = 0;
    std::string worst_name;
    int draws = 0;
    auto check = [&](const std::string& name, const Fn& f, const Tensor<double>& x) {
        const double e = grad_check<double>(f, x, h);
        if (!(e <= worst)) {
            worst = e;
            worst_name = name;
        }
    };
    for (std::uint64_t s = 0; s < 10; ++s) {
        std::mt19937_64 gen(s);
        check("relu", probe([](auto& g, Var v) { return relu(g, v); }, s), oracle::random_tensor_off_zero(gen, {2, 3, 4}));
        check("sigmoid", probe([](auto& g, Var v) { return sigmoid(g, v); }, s), oracle::random_tensor(gen, {12}, -4, 4));
        check("upsample", probe([](auto& g, Var v) { return upsample_bilinear(g, v, 7, 5); }, s),
              oracle::random_tensor(gen, {2, 2, 3, 2}));
        const auto feats = oracle::random_tensor(gen, {2, 3, 4, 4});
        const auto att = oracle::random_tensor(gen, {2, 1, 4, 4});
        check("mul/attention", probe([&](auto& g, Var v) { return mul(g, g.leaf(feats), v); }, s), att);
        check("mul/features", probe([&](auto& g, Var v) { return mul(g, v, g.leaf(att)); }, s), feats);
        const auto other = oracle::random_tensor(gen, {3, 4});
        check("add", probe([&](auto& g, Var v) { return add(g, v, g.leaf(other)); }, s), oracle::random_tensor(gen, {3, 4}));
        check("scale", probe([](auto& g, Var v) { return scale(g, v, -1.7); }, s), oracle::random_tensor(gen, {5}));
        check("reduce_sum", [](auto& g, Var v) { return reduce_sum(g, mul(g, v, v)); }, oracle::random_tensor(gen, {6}));
        check("reduce_mean", [](auto& g, Var v) { return reduce_mean(g, mul(g, v, v)); }, oracle::random_tensor(gen, {6}));
        check("avg_pool2", probe([](auto& g, Var v) { return avg_pool2(g, v); }, s), oracle::random_tensor(gen, {1, 2, 4, 6}));
        const std::size_t stride = 1 + s % 2, pad = (s / 2) % 2;
        const auto x = oracle::random_tensor(gen, {2, 2, 5, 6});
        const auto w = oracle::random_tensor(gen, {3, 2, 3, 3});
        const auto b = oracle::random_tensor(gen, {3});
        check("conv2d/x", probe([&](auto& g, Var v) { return conv2d(g, v, g.leaf(w), g.leaf(b), stride, pad); }, s), x);
        check("conv2d/w", probe([&](auto& g, Var v) { return conv2d(g, g.leaf(x), v, g.leaf(b), stride, pad); }, s), w);
        check("conv2d/b", probe([&](auto& g, Var v) { return conv2d(g, g.leaf(x), g.leaf(w), v, stride, pad); }, s), b);

        // SAM followed by the segmentation loss.
        const auto fs_ = oracle::random_tensor(gen, {2, 2, 4, 4});
        const auto fd = oracle::random_tensor_off_zero(gen, {2, 1, 2, 2}, 0.05);
        auto gt = oracle::random_tensor(gen, {2, 2, 4, 4}, 0, 1);
        for (double& v : gt.data) v = v > 0.5;
        check("sam+loss/deep",
              [&](auto& g, Var v) { return segmentation_loss(g, sigmoid(g, sam(g, g.leaf(fs_), v)), g.leaf(gt)); }, fd);
        check("sam+loss/shallow",
              [&](auto& g, Var v) { return segmentation_loss(g, sigmoid(g, sam(g, v, g.leaf(fd))), g.leaf(gt)); }, fs_);

        // Whole miniature network: two blocks, 8x8 inputs, every parameter
        // array, at a point with no ReLU input within 1e-3 of its kink.
        const oracle::NetPoint pt = oracle::mini_net_point(s);
        draws += pt.draws;
        for (std::size_t k = 0; k < pt.model.params.entries.size(); ++k)
            check("network/" + pt.model.params.entries[k].first,
                  [&](auto& g, Var v) {
                      ParamVars pv = bind_parameters(g, pt.model.params, false);
                      pv.vars[k].second = v;
                      return oracle::net_loss(g, pt.model.config, pv, pt.batch);
                  },
                  pt.model.params.entries[k].second);
    }
    const double t = seconds_since(t0);
    return {worst < 1e-4 && t < 60,
            "10 seeds, worst rel. err " + fmt(worst, 3) + " (" + worst_name + "), " + std::to_string(draws) +
                " network draws, " + fmt(t, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome convolution_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(12);
    double worst = 0;
    int cases = 0;
    for (std::size_t k : {1, 3})
        for (std::size_t s : {1, 2})
            for (std::size_t p : {0, 1})
                for (std::size_t h = 1; h <= 8; ++h)
                    for (std::size_t w = 1; w <= 8; ++w) {
                        if (h + 2 * p < k || w + 2 * p < k) continue;
                        const auto x = oracle::random_tensor(gen, {2, 3, h, w});
                        const auto wt = oracle::random_tensor(gen, {2, 3, k, k});
                        const auto b = oracle::random_tensor(gen, {2});
                        std::size_t oh = 0, ow = 0;
                        const auto ref = oracle::conv2d(x.data, 2, 3, h, w, wt.data, b.data, 2, k, s, p, oh, ow);
                        Graph<double> g;
                        const auto& y = g.value(conv2d(g, g.leaf(x), g.leaf(wt), g.leaf(b), s, p));
                        if (y.shape != Shape{2, 2, oh, ow}) return {false, "shape mismatch"};
                        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y.data[i] - ref[i]));
                        ++cases;
                    }
    const double t = seconds_since(t0);
    return {worst <= 1e-10 && t < 60,
            std::to_string(cases) + " shapes, max abs diff " + fmt(worst, 3) + ", " + fmt(t, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome colorimetry() {
    double round_trip = 0;
    for (int r = 0; r <= 16; ++r)
        for (int g = 0; g <= 16; ++g)
            for (int b = 0; b <= 16; ++b) {
                const color::Vec3 x{r / 16.0, g / 16.0, b / 16.0};
                const auto y = color::lab_to_srgb(color::srgb_to_lab(x));
                for (int c = 0; c < 3; ++c) round_trip = std::max(round_trip, std::abs(y[c] - x[c]));
            }
    const auto white = color::srgb_to_lab({1, 1, 1});
    const auto black = color::srgb_to_lab({0, 0, 0});
    const auto red = color::srgb_to_lab({1, 0, 0});
    const bool golden = std::abs(white[0] - 100) <= 1e-6 && std::abs(white[1]) <= 1e-6 && std::abs(white[2]) <= 1e-6 &&
                        std::abs(black[0]) <= 1e-6 && std::abs(black[1]) <= 1e-6 && std::abs(black[2]) <= 1e-6 &&
                        std::abs(red[0] - 53.24) <= 0.05 && std::abs(red[1] - 80.09) <= 0.05 &&
                        std::abs(red[2] - 67.20) <= 0.05;

    std::mt19937_64 gen(21);
    double transfer = 0;
    int pairs = 0;
    for (int t = 0; t < 100 && pairs < 30; ++t) {
        const ImageRGB a = oracle::random_image(gen, 12, 10, 0.3, 0.7), b = oracle::random_image(gen, 9, 11, 0.35, 0.65);
        const auto la = color::rgb_to_lab(a);
        const auto moved = color::transfer_stats(la, color::channel_stats(la), color::channel_stats(color::rgb_to_lab(b)));
        bool clamps = false;
        for (std::size_t i = 0; i < moved.pixels(); ++i)
            for (double c : color::lab_to_srgb_unclamped({moved.data[3 * i], moved.data[3 * i + 1], moved.data[3 * i + 2]}))
                clamps = clamps || c < 0 || c > 1;
        if (clamps) continue;
        ++pairs;
        const auto out = color::color_exchange(a, b).first;
        const auto so = oracle::image_lab_stats(out), sb = oracle::image_lab_stats(b);
        for (int c = 0; c < 3; ++c)
            transfer = std::max({transfer, std::abs(so.mean[c] - sb.mean[c]), std::abs(so.sd[c] - sb.sd[c])});
    }
    return {round_trip < 1e-6 && golden && transfer <= 1e-3 && pairs >= 20,
            "round trip " + fmt(round_trip, 3) + ", red (" + fmt(red[0]) + ", " + fmt(red[1]) + ", " + fmt(red[2]) +
                "), stats transfer " + fmt(transfer, 3) + " over " + std::to_string(pairs) + " pairs"};
}

// ---------------------------------------------------------------------------

Outcome pcs_invariants() {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(-1, 3);
    std::bernoulli_distribution coin(0.2);
    bool signs = true;
    data::Dataset ds;
    std::vector<pcs::LogitMap> maps;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t w = 4 + t % 9, h = 3 + t % 7;
        std::vector<double> v(w * h);
        for (double& x : v) x = n(gen);
        if (t % 10 == 0) v[0] = 0.0;
        maps.emplace_back(w, h, v);
        const auto c = pcs::correct(maps.back());
        for (std::size_t i = 0; i < v.size(); ++i) signs = signs && ((v[i] > 0) == (c.logits[i] > 0)) && ((v[i] < 0) == (c.logits[i] < 0));
        Mask m(w, h);
        for (auto& x : m.data) x = coin(gen);
        ds.push_back({ImageRGB(w, h), m, std::to_string(t)});
    }
    std::size_t k = 0;
    auto pred = [&](const ImageRGB&) { return maps[k++ % maps.size()]; };
    const double off = metrics::evaluate(ds, pred, false).mean_dice;
    const double on = metrics::evaluate(ds, pred, true).mean_dice;
    const auto ex = pcs::correct(pcs::LogitMap(2, 2, {2, -1, -1, -1}));
    const bool worked = ex.logits == std::vector<double>{8, -4.0 / 3, -4.0 / 3, -4.0 / 3};
    const bool same = std::memcmp(&on, &off, sizeof on) == 0;
    return {signs && same && worked, std::string("sign preserved: ") + (signs ? "yes" : "no") + ", hard mDice off " +
                                         metrics::format_real(off) + " on " + metrics::format_real(on) +
                                         ", 2x2 example " + (worked ? "exact" : "wrong")};
}

// ---------------------------------------------------------------------------

Outcome metrics_identities() {
    std::mt19937_64 gen(6);
    std::bernoulli_distribution coin(0.35);
    std::uniform_real_distribution<double> u(0, 1);
    double identity = 0;
    bool curve_exact = true;
    for (int t = 0; t < 500; ++t) {
        Mask p(9, 7), g(9, 7);
        for (auto& v : p.data) v = coin(gen);
        for (auto& v : g.data) v = coin(gen);
        const double d = metrics::dice(p, g);
        identity = std::max(identity, std::abs(metrics::iou(p, g) - d / (2 - d)));

        std::vector<double> prob(63);
        for (double& v : prob) v = t % 2 ? std::round(u(gen) * 100) / 100 : u(gen);
        for (const auto& [th, dc] : metrics::dice_curve(prob, g))
            curve_exact = curve_exact && dc == oracle::dice_at(prob, g.data, th);
    }
    return {identity <= 1e-12 && curve_exact,
            "max |iou - d/(2-d)| " + fmt(identity, 3) + ", curve recount " + (curve_exact ? "exact" : "differs")};
}

// ---------------------------------------------------------------------------
// Training experiments, driven through the command-line entry point.

struct Cli {
    fs::path work;

    int operator()(std::vector<std::string> args, std::string* out_text = nullptr) const {
        args.insert(args.begin(), "sanet");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        if (out_text) *out_text = out.str();
        if (code != 0) std::cerr << err.str();
        return code;
    }

    fs::path dataset(const std::string& name, std::size_t count, std::uint64_t seed, const std::string& mode) const {
        const fs::path root = work / "data" / name;
        if (!fs::exists(root / "meta.json"))
            (*this)({"synth", "--out", root.string(), "--count", std::to_string(count), "--seed", std::to_string(seed),
                     "--mode", mode});
        return root;
    }

    struct Run {
        double mdice = -1;
        double seconds = 0;
        fs::path dir;
    };

    Run train_eval(const std::string& name, const fs::path& train, const fs::path& test, std::uint64_t seed,
                   const json& extra) const {
        Run r;
        r.dir = work / "runs" / name;
        fs::remove_all(r.dir);
        fs::create_directories(r.dir);
        json cfg = {{"train_data", train.string()}, {"out_dir", r.dir.string()}, {"seed", seed}};
        for (const auto& [k, v] : extra.items()) cfg[k] = v;
        std::ofstream(r.dir / "run.json") << cfg.dump(2);
        const auto t0 = Clock::now();
        if ((*this)({"train", "--config", (r.dir / "run.json").string()}) != 0) return r;
        if ((*this)({"eval", "--checkpoint", (r.dir / "checkpoint.bin").string(), "--data", test.string(), "--out",
                     (r.dir / "eval").string(), "--config", (r.dir / "run.json").string()}) != 0)
            return r;
        r.seconds = seconds_since(t0);
        std::ifstream f(r.dir / "eval" / "report.json");
        r.mdice = json::parse(f)["mDice"].get<double>();
        std::cout << "  run " << name << ": held-out mDice " << fmt(r.mdice) << " in " << fmt(r.seconds, 3) << " s"
                  << std::endl;
        return r;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Experiments {
    Cli cli;
    std::vector<Cli::Run> sam, backbone, ce_off, ce_on;

    fs::path train_set(std::uint64_t s) const { return cli.dataset("train_" + std::to_string(s), 200, 1000 + s, "plain"); }
    fs::path test_set(std::uint64_t s) const { return cli.dataset("test_" + std::to_string(s), 50, 5000 + s, "plain"); }

    void ensure_sam() {
        if (!sam.empty()) return;
        for (std::uint64_t s = 0; s < 3; ++s)
            sam.push_back(cli.train_eval("sam_" + std::to_string(s), train_set(s), test_set(s), s, json::object()));
    }
};

double mean_dice(const std::vector<Cli::Run>& runs) {
    double m = 0;
    for (const auto& r : runs) m += r.mdice;
    return m / static_cast<double>(runs.size());
}

Outcome end_to_end(Experiments& ex) {
    ex.ensure_sam();
    int passing = 0;
    std::string detail;
    for (std::size_t s = 0; s < ex.sam.size(); ++s) {
        const auto& r = ex.sam[s];
        passing += r.mdice >= 0.90 && r.seconds < 600;
        detail += (s ? ", " : "") + std::string("seed ") + std::to_string(s) + " " + fmt(r.mdice) + " (" +
                  fmt(r.seconds, 3) + " s)";
    }
    return {passing >= 2, std::to_string(passing) + "/3 seeds reach 0.90: " + detail};
}

Outcome ablation(Experiments& ex) {
    ex.ensure_sam();
    for (std::uint64_t s = 0; s < 3; ++s)
        ex.backbone.push_back(ex.cli.train_eval("backbone_" + std::to_string(s), ex.train_set(s), ex.test_set(s), s,
                                                {{"fusion", "none"}}));
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto train = ex.cli.dataset("confound_train_" + std::to_string(s), 200, 2000 + s, "confound-train");
        const auto test = ex.cli.dataset("confound_test_" + std::to_string(s), 50, 6000 + s, "confound-test");
        ex.ce_off.push_back(ex.cli.train_eval("confound_sam_" + std::to_string(s), train, test, s, json::object()));
        ex.ce_on.push_back(
            ex.cli.train_eval("confound_sam_ce_" + std::to_string(s), train, test, s, {{"color_exchange", true}}));
    }
    const double sam = mean_dice(ex.sam), base = mean_dice(ex.backbone);
    const double off = mean_dice(ex.ce_off), on = mean_dice(ex.ce_on);
    return {sam - base > 0.01 && on - off > 0.01,
            "SAM " + fmt(sam) + " vs backbone " + fmt(base) + " (margin " + fmt(sam - base, 3) + "); SAM+CE " + fmt(on) +
                " vs SAM " + fmt(off) + " on recolored test (margin " + fmt(on - off, 3) + ")"};
}

Outcome reproducibility(Experiments& ex) {
    ex.ensure_sam();
    const auto again = ex.cli.train_eval("sam_0_repeat", ex.train_set(0), ex.test_set(0), 0, json::object());
    const std::string a = slurp(ex.sam[0].dir / "eval" / "report.json");
    const std::string b = slurp(again.dir / "eval" / "report.json");
    const bool ckpt = slurp(ex.sam[0].dir / "checkpoint.bin") == slurp(again.dir / "checkpoint.bin");
    return {!a.empty() && a == b && ckpt, "report.json " + std::to_string(a.size()) + " bytes " +
                                              (a == b ? "identical" : "differ") + ", checkpoint " +
                                              (ckpt ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "sanet_acceptance";
    std::string only;
    for (int i = 1; i + 1 < argc; i += 2) {
        if (std::strcmp(argv[i], "--work") == 0) work = argv[i + 1];
        else if (std::strcmp(argv[i], "--only") == 0) only = argv[i + 1];
    }
    fs::create_directories(work);
    Experiments ex{Cli{work}, {}, {}, {}, {}};

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient-certification", gradient_certification},
        {"convolution-oracle", convolution_oracle},
        {"colorimetry", colorimetry},
        {"pcs-invariants", pcs_invariants},
        {"metrics-identities", metrics_identities},
        {"end-to-end-training", [&] { return end_to_end(ex); }},
        {"directional-ablation", [&] { return ablation(ex); }},
        {"reproducibility", [&] { return reproducibility(ex); }},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && only != name) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
