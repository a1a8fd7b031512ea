#pragma once

// Run configuration: a flat JSON object whose keys, types and defaults are
// given by run_config_schema(). Validation reports every problem at once.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sanet/checkpoint.hpp"
#include "sanet/training.hpp"

namespace sanet::cli {

using nlohmann::json;

enum class Precision { F32, F64 };

inline const char* to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

struct FieldSpec {
    std::string key;
    std::string type;  // JSON Schema type name; arrays carry item type below
    std::string items;
    bool required = false;
    json default_value;
    std::vector<std::string> choices;
    std::string description;
};

inline const std::vector<FieldSpec>& run_config_schema() {
    static const std::vector<FieldSpec> fields = {
        {"train_data", "string", "", true, nullptr, {}, "dataset root with images/ and masks/"},
        {"val_data", "string", "", false, "", {}, "optional held-out dataset evaluated after training"},
        {"out_dir", "string", "", false, "run", {}, "run directory receiving every output"},
        {"seed", "integer", "", true, nullptr, {}, "master seed for initialization, shuffling and augmentation"},
        {"precision", "string", "", false, "f32", {"f32", "f64"}, "arithmetic precision for training and inference"},
        {"pcs", "boolean", "", false, true, {}, "apply probability correction when evaluating val_data"},
        {"widths", "array", "integer", false, json::array({16, 32, 64}), {}, "channels per encoder block, shallow to deep"},
        {"first_stride", "integer", "", false, 2, {}, "stride of the first encoder block (1 or 2)"},
        {"input_size", "integer", "", false, 64, {}, "square network input resolution"},
        {"attention", "string", "", false, "relu", {"relu", "sigmoid"}, "activation applied to the upsampled attention map"},
        {"fusion", "string", "", false, "sam", {"sam", "none"}, "sam: shallow attention fusion; none: deepest block only"},
        {"lr", "number", "", false, 0.04, {}, "peak SGD learning rate"},
        {"momentum", "number", "", false, 0.9, {}, "SGD momentum"},
        {"schedule", "string", "", false, "cosine", {"cosine", "constant"}, "learning-rate decay after warmup"},
        {"warmup_steps", "integer", "", false, 50, {}, "linear warmup length"},
        {"steps", "integer", "", false, 800, {}, "number of SGD updates"},
        {"batch", "integer", "", false, 8, {}, "images per update"},
        {"max_grad_norm", "number", "", false, 5.0, {}, "global gradient norm clip, 0 disables"},
        {"lambda_bce", "number", "", false, 1.0, {}, "weight of the BCE term"},
        {"lambda_dice", "number", "", false, 1.0, {}, "weight of the soft Dice term"},
        {"flip_prob", "number", "", false, 0.5, {}, "probability of flipping along each axis"},
        {"rotate_prob", "number", "", false, 0.5, {}, "probability of a right-angle rotation"},
        {"scales", "array", "number", false, json::array({0.75, 1.0, 1.25}), {}, "multi-scale training multipliers"},
        {"color_exchange", "boolean", "", false, false, {}, "LAB color exchange with a random training partner"},
    };
    return fields;
}

// JSON Schema (draft 2020-12) document for the run configuration.
inline json schema_document() {
    json props = json::object();
    json required = json::array();
    for (const auto& f : run_config_schema()) {
        json p = {{"type", f.type}, {"description", f.description}};
        if (!f.items.empty()) p["items"] = {{"type", f.items}};
        if (!f.default_value.is_null()) p["default"] = f.default_value;
        if (!f.choices.empty()) p["enum"] = f.choices;
        props[f.key] = p;
        if (f.required) required.push_back(f.key);
    }
    return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
            {"title", "sanet run configuration"},
            {"type", "object"},
            {"additionalProperties", false},
            {"required", required},
            {"properties", props}};
}

struct RunConfig {
    std::filesystem::path train_data;
    std::filesystem::path val_data;
    std::filesystem::path out_dir = "run";
    Precision precision = Precision::F32;
    bool pcs = true;
    TrainConfig train;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : std::runtime_error(errors.empty() ? "invalid configuration" : errors.front()), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const { return errors_; }

private:
    std::vector<std::string> errors_;
};

namespace detail {

inline bool type_matches(const json& v, const std::string& type) {
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "array") return v.is_array();
    return false;
}

}  // namespace detail

// Fills defaults, checks types and ranges, and resolves into a RunConfig.
// Throws ConfigError carrying every problem found.
inline RunConfig parse_run_config(const json& doc, bool check_paths = true) {
    std::vector<std::string> errs;
    if (!doc.is_object()) throw ConfigError({"configuration must be a JSON object"});

    json v = json::object();
    for (const auto& f : run_config_schema()) {
        if (!doc.contains(f.key)) {
            if (f.required) errs.push_back(f.key + ": required key missing");
            else v[f.key] = f.default_value;
            continue;
        }
        const json& x = doc.at(f.key);
        if (!detail::type_matches(x, f.type)) {
            errs.push_back(f.key + ": expected " + f.type + ", got " + x.type_name());
            continue;
        }
        if (f.type == "array")
            for (const auto& item : x)
                if (!detail::type_matches(item, f.items)) {
                    errs.push_back(f.key + ": elements must be " + f.items);
                    break;
                }
        if (f.type == "integer" && x.get<std::int64_t>() < 0) errs.push_back(f.key + ": must be non-negative");
        if (!f.choices.empty() && std::find(f.choices.begin(), f.choices.end(), x.get<std::string>()) == f.choices.end())
            errs.push_back(f.key + ": '" + x.get<std::string>() + "' is not one of the allowed values");
        v[f.key] = x;
    }
    for (const auto& [key, _] : doc.items()) {
        const auto& s = run_config_schema();
        if (std::none_of(s.begin(), s.end(), [&](const FieldSpec& f) { return f.key == key; }))
            errs.push_back(key + ": unknown key");
    }
    if (!errs.empty()) throw ConfigError(errs);

    RunConfig rc;
    rc.train_data = v["train_data"].get<std::string>();
    rc.val_data = v["val_data"].get<std::string>();
    rc.out_dir = v["out_dir"].get<std::string>();
    rc.precision = v["precision"] == "f64" ? Precision::F64 : Precision::F32;
    rc.pcs = v["pcs"].get<bool>();

    TrainConfig& t = rc.train;
    t.seed = v["seed"].get<std::uint64_t>();
    t.network.widths = v["widths"].get<std::vector<std::size_t>>();
    t.network.first_stride = v["first_stride"].get<std::size_t>();
    t.network.input_size = v["input_size"].get<std::size_t>();
    t.network.attention = parse_attention(v["attention"].get<std::string>());
    t.network.fusion = parse_fusion(v["fusion"].get<std::string>());
    t.network.seed = t.seed;
    t.lr = v["lr"].get<double>();
    t.momentum = v["momentum"].get<double>();
    t.schedule = v["schedule"] == "constant" ? LrSchedule::Constant : LrSchedule::Cosine;
    t.warmup_steps = v["warmup_steps"].get<std::size_t>();
    t.steps = v["steps"].get<std::size_t>();
    t.batch = v["batch"].get<std::size_t>();
    t.max_grad_norm = v["max_grad_norm"].get<double>();
    t.loss.bce = v["lambda_bce"].get<double>();
    t.loss.dice = v["lambda_dice"].get<double>();
    t.augment.flip_prob = v["flip_prob"].get<double>();
    t.augment.rotate_prob = v["rotate_prob"].get<double>();
    t.augment.scales = v["scales"].get<std::vector<double>>();
    t.augment.color_exchange = v["color_exchange"].get<bool>();
    t.augment.seed = t.seed;

    errs = t.validate();
    if (check_paths) {
        if (!std::filesystem::is_directory(rc.train_data))
            errs.push_back("train_data: " + rc.train_data.string() + " is not a directory");
        if (!rc.val_data.empty() && !std::filesystem::is_directory(rc.val_data))
            errs.push_back("val_data: " + rc.val_data.string() + " is not a directory");
    }
    if (!errs.empty()) throw ConfigError(errs);
    return rc;
}

// Fully resolved configuration, every key present.
inline json to_json(const RunConfig& rc) {
    const TrainConfig& t = rc.train;
    return {{"train_data", rc.train_data.string()},
            {"val_data", rc.val_data.string()},
            {"out_dir", rc.out_dir.string()},
            {"seed", t.seed},
            {"precision", to_string(rc.precision)},
            {"pcs", rc.pcs},
            {"widths", t.network.widths},
            {"first_stride", t.network.first_stride},
            {"input_size", t.network.input_size},
            {"attention", to_string(t.network.attention)},
            {"fusion", to_string(t.network.fusion)},
            {"lr", t.lr},
            {"momentum", t.momentum},
            {"schedule", t.schedule == LrSchedule::Constant ? "constant" : "cosine"},
            {"warmup_steps", t.warmup_steps},
            {"steps", t.steps},
            {"batch", t.batch},
            {"max_grad_norm", t.max_grad_norm},
            {"lambda_bce", t.loss.bce},
            {"lambda_dice", t.loss.dice},
            {"flip_prob", t.augment.flip_prob},
            {"rotate_prob", t.augment.rotate_prob},
            {"scales", t.augment.scales},
            {"color_exchange", t.augment.color_exchange}};
}

inline RunConfig load_run_config(const std::filesystem::path& path, bool check_paths = true) {
    std::ifstream f(path);
    if (!f) throw ConfigError({"cannot open config " + path.string()});
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
    return parse_run_config(doc, check_paths);
}

}  // namespace sanet::cli
