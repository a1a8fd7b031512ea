#pragma once

// Command-line front end: exchange, train, infer, eval, stats, synth, schema.
// run() is the whole program; tools/sanet.cpp only forwards argv to it.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sanet/checkpoint.hpp"
#include "sanet/colorimetry.hpp"
#include "sanet/dataio.hpp"
#include "sanet/metrics.hpp"
#include "sanet/png_io.hpp"
#include "sanet/run_config.hpp"
#include "sanet/training.hpp"

namespace sanet::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

// Raised for data that is present but unusable (as opposed to a bad config).
struct DataProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::F32;
    if (s == "f64") return Precision::F64;
    throw ConfigError({"precision must be f32 or f64, got '" + s + "'"});
}

inline bool parse_switch(const std::string& s, const char* what) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw ConfigError({std::string(what) + " must be on or off, got '" + s + "'"});
}

inline data::Dataset load_strict(const fs::path& root, std::ostream& err) {
    data::LoadResult r = data::load_dataset(root, true);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    return std::move(r.samples);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw DataProblem("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

template <class T>
metrics::Predictor predictor(const Model<T>& m) {
    return [&m](const ImageRGB& img) { return predict(m, img); };
}

template <class T>
Model<T> load_model(const fs::path& path) {
    return load_checkpoint<T>(path);
}

template <class T>
void train_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const data::Dataset train_set = load_strict(rc.train_data, err);
    if (train_set.empty()) throw DataProblem(rc.train_data.string() + ": no training samples");
    fs::create_directories(rc.out_dir);
    write_json(rc.out_dir / "config.json", to_json(rc));

    std::ofstream log(rc.out_dir / "loss.csv");
    log << "step,lr,loss\n";
    const std::size_t every = std::max<std::size_t>(1, rc.train.steps / 10);
    const Model<T> model = train<T>(rc.train, train_set, [&](const StepLog& s) {
        log << s.step << ',' << metrics::format_real(s.lr) << ',' << metrics::format_real(s.loss) << '\n';
        if (s.step % every == 0 || s.step + 1 == rc.train.steps)
            out << "step " << s.step << " lr " << s.lr << " loss " << s.loss << '\n';
    });
    save_checkpoint(rc.out_dir / "checkpoint.bin", model);

    if (!rc.val_data.empty()) {
        const data::Dataset val = load_strict(rc.val_data, err);
        if (val.empty()) throw DataProblem(rc.val_data.string() + ": no validation samples");
        const auto report = metrics::evaluate(val, predictor(model), rc.pcs, rc.val_data.string());
        metrics::write_report(rc.out_dir / "eval", report);
        out << "val mDice " << report.mean_dice << " mIoU " << report.mean_iou << '\n';
    }
}

template <class T>
int eval_run(const fs::path& ckpt, const fs::path& data_root, const fs::path& out_dir, bool pcs_on,
             const std::optional<NetworkConfig>& expected, std::ostream& out, std::ostream& err) {
    const Model<T> model = load_model<T>(ckpt);
    if (expected && to_json(*expected) != to_json(model.config))
        throw ConfigError({"checkpoint network config " + to_json(model.config).dump() +
                           " does not match the run config " + to_json(*expected).dump()});
    const data::Dataset ds = load_strict(data_root, err);
    if (ds.empty()) throw DataProblem(data_root.string() + ": dataset is empty");
    const auto report = metrics::evaluate(ds, predictor(model), pcs_on, data_root.string());
    metrics::write_report(out_dir, report);
    for (const auto& e : report.errors) err << "error: " << e << '\n';
    out << "mDice " << report.mean_dice << " mIoU " << report.mean_iou << " max-curve Dice " << report.max_curve_dice
        << '\n';
    return report.errors.empty() ? kOk : kDataError;
}

template <class T>
void infer_run(const fs::path& ckpt, const std::vector<fs::path>& inputs, const fs::path& out_dir, bool pcs_on,
               std::ostream& out) {
    const Model<T> model = load_model<T>(ckpt);
    std::vector<fs::path> files;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        } else if (fs::is_regular_file(p)) {
            files.push_back(p);
        } else {
            throw DataProblem(p.string() + ": no such file or directory");
        }
    }
    std::sort(files.begin(), files.end());
    fs::create_directories(out_dir / "prob");
    fs::create_directories(out_dir / "mask");
    for (const auto& f : files) {
        const ImageRGB img = png::read_rgb(f);
        pcs::LogitMap logits = predict(model, img);
        if (pcs_on) logits = pcs::correct(logits);
        const std::string name = f.stem().string() + ".png";
        png::write_gray16(out_dir / "prob" / name, img.width, img.height, pcs::to_probability(logits));
        png::write_mask(out_dir / "mask" / name, metrics::binarize(logits.logits, img.width, img.height, 0.0));
    }
    out << "wrote " << files.size() << " predictions to " << out_dir.string() << '\n';
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Shallow-attention polyp segmentation toolkit"};
    app.require_subcommand(1);

    // exchange
    std::string ex_a, ex_b, ex_oa, ex_ob;
    auto* exchange = app.add_subcommand("exchange", "swap LAB color statistics between two images");
    exchange->add_option("image1", ex_a, "first input PNG")->required();
    exchange->add_option("image2", ex_b, "second input PNG")->required();
    exchange->add_option("out1", ex_oa, "image1 recolored with image2's statistics")->required();
    exchange->add_option("out2", ex_ob, "image2 recolored with image1's statistics")->required();

    // train
    std::string tr_config, tr_out, tr_precision;
    std::optional<std::uint64_t> tr_seed;
    auto* train_cmd = app.add_subcommand("train", "train a model from a run configuration");
    train_cmd->add_option("-c,--config", tr_config, "run configuration JSON")->required();
    train_cmd->add_option("--seed", tr_seed, "overrides the configured seed");
    train_cmd->add_option("--out", tr_out, "overrides the configured run directory");
    train_cmd->add_option("--precision", tr_precision, "f32 or f64; overrides the configuration");

    // infer
    std::string in_ckpt, in_out, in_pcs = "on", in_precision = "f32";
    std::vector<std::string> in_inputs;
    auto* infer = app.add_subcommand("infer", "write probability maps and masks for images");
    infer->add_option("--checkpoint", in_ckpt, "trained checkpoint")->required();
    infer->add_option("inputs", in_inputs, "PNG files or directories")->required();
    infer->add_option("--out", in_out, "output directory")->required();
    infer->add_option("--pcs", in_pcs, "probability correction: on or off");
    infer->add_option("--precision", in_precision, "f32 or f64");

    // eval
    std::string ev_ckpt, ev_data, ev_out, ev_pcs = "on", ev_precision = "f32", ev_config;
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a labeled dataset");
    eval->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    eval->add_option("--data", ev_data, "dataset root with images/ and masks/")->required();
    eval->add_option("--out", ev_out, "report directory")->required();
    eval->add_option("--pcs", ev_pcs, "probability correction: on or off");
    eval->add_option("--precision", ev_precision, "f32 or f64");
    eval->add_option("--config", ev_config, "run configuration the checkpoint must match");

    // stats
    std::string st_data, st_out;
    auto* stats = app.add_subcommand("stats", "foreground-size histogram of a dataset");
    stats->add_option("--data", st_data, "dataset root")->required();
    stats->add_option("--out", st_out, "output directory")->required();

    // synth
    data::SynthConfig sc;
    std::string sy_out, sy_mode = "plain";
    std::optional<std::uint64_t> sy_seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic blob dataset");
    synth->add_option("--out", sy_out, "dataset root to create")->required();
    synth->add_option("--count", sc.count, "number of samples")->required();
    synth->add_option("--seed", sy_seed, "generator seed")->required();
    synth->add_option("--height", sc.height, "image height");
    synth->add_option("--width", sc.width, "image width");
    synth->add_option("--min-area", sc.min_area, "smallest blob area fraction");
    synth->add_option("--max-area", sc.max_area, "largest blob area fraction");
    synth->add_option("--mode", sy_mode, "plain, confound-train or confound-test");
    synth->add_option("--prefix", sc.id_prefix, "sample id prefix");

    auto* schema = app.add_subcommand("schema", "print the run configuration JSON Schema");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (schema->parsed()) {
            out << schema_document().dump(2) << '\n';
            return kOk;
        }
        if (exchange->parsed()) {
            const ImageRGB a = png::read_rgb(ex_a), b = png::read_rgb(ex_b);
            const auto [oa, ob] = color::color_exchange(a, b);
            png::write_rgb(ex_oa, oa);
            png::write_rgb(ex_ob, ob);
            return kOk;
        }
        if (train_cmd->parsed()) {
            std::ifstream f(tr_config);
            if (!f) throw ConfigError({"cannot open config " + tr_config});
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(f);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError({tr_config + ": " + e.what()});
            }
            if (!doc.is_object()) throw ConfigError({tr_config + ": configuration must be a JSON object"});
            if (tr_seed) doc["seed"] = *tr_seed;
            if (!tr_out.empty()) doc["out_dir"] = tr_out;
            if (!tr_precision.empty()) doc["precision"] = tr_precision;
            const RunConfig rc = parse_run_config(doc);
            if (rc.precision == Precision::F64) detail::train_run<double>(rc, out, err);
            else detail::train_run<float>(rc, out, err);
            return kOk;
        }
        if (infer->parsed()) {
            const bool pcs_on = detail::parse_switch(in_pcs, "--pcs");
            std::vector<fs::path> inputs(in_inputs.begin(), in_inputs.end());
            if (detail::parse_precision(in_precision) == Precision::F64)
                detail::infer_run<double>(in_ckpt, inputs, in_out, pcs_on, out);
            else
                detail::infer_run<float>(in_ckpt, inputs, in_out, pcs_on, out);
            return kOk;
        }
        if (eval->parsed()) {
            const bool pcs_on = detail::parse_switch(ev_pcs, "--pcs");
            const Precision p = detail::parse_precision(ev_precision);
            std::optional<NetworkConfig> expected;
            if (!ev_config.empty()) expected = load_run_config(ev_config, false).train.network;
            return p == Precision::F64 ? detail::eval_run<double>(ev_ckpt, ev_data, ev_out, pcs_on, expected, out, err)
                                       : detail::eval_run<float>(ev_ckpt, ev_data, ev_out, pcs_on, expected, out, err);
        }
        if (stats->parsed()) {
            const data::Dataset ds = detail::load_strict(st_data, err);
            const auto hist = metrics::size_histogram(ds);
            fs::create_directories(st_out);
            nlohmann::json edges = nlohmann::json::array();
            for (std::size_t b = 0; b <= metrics::kHistogramBins; ++b)
                edges.push_back(static_cast<double>(b) / metrics::kHistogramBins);
            detail::write_json(fs::path(st_out) / "histogram.json",
                               {{"version", 1}, {"dataset", st_data}, {"count", ds.size()},
                                {"bin_edges", edges}, {"fraction", hist}});
            std::ofstream csv(fs::path(st_out) / "histogram.csv");
            csv << "bin_low,bin_high,fraction\n";
            for (std::size_t b = 0; b < hist.size(); ++b)
                csv << metrics::format_real(edges[b].get<double>()) << ','
                    << metrics::format_real(edges[b + 1].get<double>()) << ',' << metrics::format_real(hist[b]) << '\n';
            out << ds.size() << " masks; fraction below 0.1: " << hist[0] << '\n';
            return kOk;
        }
        if (synth->parsed()) {
            sc.seed = *sy_seed;
            try {
                sc.color_mode = data::parse_color_mode(sy_mode);
            } catch (const std::invalid_argument& e) {
                throw ConfigError({e.what()});
            }
            if (auto errs = sc.validate(); !errs.empty()) throw ConfigError(errs);
            data::write_synthetic(sy_out, sc, data::synth_blobs(sc));
            return kOk;
        }
    } catch (const ConfigError& e) {
        for (const auto& m : e.errors()) err << "config error: " << m << '\n';
        return kConfigError;
    } catch (const NonFiniteLoss& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const data::DataError& e) {
        for (const auto& m : e.items()) err << "data error: " << m << '\n';
        return kDataError;
    } catch (const png::PngError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const CheckpointError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const DataProblem& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::invalid_argument& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
    return kConfigError;
}

}  // namespace sanet::cli
