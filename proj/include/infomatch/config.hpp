#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "infomatch/augment.hpp"
#include "infomatch/common.hpp"
#include "infomatch/dataset.hpp"
#include "infomatch/threshold.hpp"

namespace infomatch {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Schema: every known key with its type and default. Parsing rejects unknown
// keys, reports missing required keys by dotted path, and materializes every
// default into the resolved snapshot.
// ---------------------------------------------------------------------------

namespace cfgdetail {

inline const json& schema_defaults() {
    static const json defaults = {
        {"run", {{"name", "run"}, {"seed", 1}}},
        {"data",
         {{"source", nullptr},  // required: "synthetic" | "cifar10"
          {"cifar_train", ""},
          {"cifar_test", ""},
          {"labels_per_class", 4},
          {"split_seed", 11},
          {"synthetic",
           {{"class_count", 4}, {"per_class", 1500}, {"height", 16}, {"width", 16},
            {"channels", 1}, {"noise", 0.5}, {"seed", 7}}},
          {"synthetic_eval", {{"per_class", 250}, {"seed", 8}}}}},
        {"augment",
         {{"weak", {{"pad_crop", false}, {"pad", 4}}},
          {"strong",
           {{"ops_per_image", 2}, {"magnitude_min", 1}, {"magnitude_max", 10},
            {"cutout_fraction", 0.5}}},
          {"cutmix", {{"alpha", 1.0}}}}},
        {"model",
         {{"arch", "small_conv"}, {"conv_channels", {16, 32, 64}}, {"lower_features", "logits"}}},
        {"threshold", {{"mode", "adaptive"}, {"fixed_value", 0.95}, {"momentum", 0.999}}},
        {"objective",
         {{"lambda", 0.002}, {"enable_pseudo", true}, {"enable_cutmix", true},
          {"enable_lower", true}}},
        {"trainer",
         {{"lr0", 0.03}, {"momentum", 0.9}, {"nesterov", true}, {"weight_decay", 5e-4},
          {"total_steps", 4096}, {"batch_labeled", 8}, {"batch_unlabeled", 32},
          {"ema_decay", 0.999}, {"log_interval", 64}, {"eval_interval", 256},
          {"checkpoint_interval", 1024}, {"augment_labeled", true}, {"eval_batch", 256}}},
    };
    return defaults;
}

inline bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        // ints may not stand in for explicit non-integral defaults' strings etc.
        return !(a.is_number_float() && !b.is_number());
    }
    return a.type() == b.type();
}

inline void merge_validate(const json& schema, const json& user, json& out, const std::string& prefix,
                           std::vector<std::string>& missing) {
    for (auto it = schema.begin(); it != schema.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        const bool required = it.value().is_null();
        if (it.value().is_object()) {
            const json sub = user.contains(it.key()) ? user.at(it.key()) : json::object();
            if (!sub.is_object())
                throw ConfigError(cat("config key '", path, "' must be an object"));
            out[it.key()] = json::object();
            merge_validate(it.value(), sub, out[it.key()], path, missing);
        } else if (user.contains(it.key())) {
            const json& v = user.at(it.key());
            if (!required && !same_kind(v, it.value()))
                throw ConfigError(cat("config key '", path, "' has the wrong type (expected ",
                                      it.value().type_name(), ")"));
            out[it.key()] = v;
        } else if (required) {
            missing.push_back(path);
        } else {
            out[it.key()] = it.value();
        }
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (!schema.contains(it.key())) {
            const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
            throw ConfigError(cat("unknown config key '", path, "'"));
        }
    }
}

}  // namespace cfgdetail

// Parses user JSON against the schema; returns the fully resolved snapshot.
inline json resolve_config(const json& user) {
    json out = json::object();
    std::vector<std::string> missing;
    cfgdetail::merge_validate(cfgdetail::schema_defaults(), user, out, "", missing);
    if (!missing.empty()) {
        std::string msg = "missing required config key(s):";
        for (const auto& m : missing) msg += " '" + m + "'";
        throw ConfigError(msg);
    }
    return out;
}

// Applies one dotted override like "objective.lambda=0.01". Values parse as
// JSON when possible, else as strings. The key must already exist.
inline void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError(cat("override '", assignment, "' is not of the form key.path=value"));
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &config;
    size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        const auto dot = key.find('.', start);
        parts.push_back(key.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
            throw ConfigError(cat("override references unknown config section '", key, "'"));
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back()))
        throw ConfigError(cat("override references unknown config key '", key, "'"));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string
    (*node)[parts.back()] = value;
}

struct RunConfig {
    json resolved;  // full snapshot, already validated

    std::string run_name;
    std::uint64_t seed = 1;

    std::string data_source;  // "synthetic" | "cifar10"
    std::string cifar_train;
    std::string cifar_test;
    int labels_per_class = 4;
    std::uint64_t split_seed = 11;
    SyntheticSpec synthetic;
    int eval_per_class = 250;
    std::uint64_t eval_seed = 8;

    AugmentConfig augment;
    std::vector<int> conv_channels;
    std::string lower_features;

    ThresholdMode threshold_mode = ThresholdMode::kAdaptive;
    double threshold_fixed_value = 0.95;
    double threshold_momentum = 0.999;

    double lambda = 0.002;
    bool enable_pseudo = true;
    bool enable_cutmix = true;
    bool enable_lower = true;

    double lr0 = 0.03;
    double sgd_momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    std::int64_t total_steps = 4096;
    int batch_labeled = 8;
    int batch_unlabeled = 32;
    double ema_decay = 0.999;
    std::int64_t log_interval = 64;
    std::int64_t eval_interval = 256;
    std::int64_t checkpoint_interval = 1024;
    bool augment_labeled = true;
    int eval_batch = 256;
};

inline RunConfig make_run_config(const json& user) {
    RunConfig rc;
    rc.resolved = resolve_config(user);
    const json& j = rc.resolved;

    rc.run_name = j["run"]["name"].get<std::string>();
    rc.seed = j["run"]["seed"].get<std::uint64_t>();

    rc.data_source = j["data"]["source"].get<std::string>();
    if (rc.data_source != "synthetic" && rc.data_source != "cifar10")
        throw ConfigError(cat("config key 'data.source' must be 'synthetic' or 'cifar10', got '",
                              rc.data_source, "'"));
    rc.cifar_train = j["data"]["cifar_train"].get<std::string>();
    rc.cifar_test = j["data"]["cifar_test"].get<std::string>();
    rc.labels_per_class = j["data"]["labels_per_class"].get<int>();
    rc.split_seed = j["data"]["split_seed"].get<std::uint64_t>();
    const json& syn = j["data"]["synthetic"];
    rc.synthetic.class_count = syn["class_count"].get<int>();
    rc.synthetic.per_class = syn["per_class"].get<int>();
    rc.synthetic.height = syn["height"].get<int>();
    rc.synthetic.width = syn["width"].get<int>();
    rc.synthetic.channels = syn["channels"].get<int>();
    rc.synthetic.noise = syn["noise"].get<double>();
    rc.synthetic.seed = syn["seed"].get<std::uint64_t>();
    rc.eval_per_class = j["data"]["synthetic_eval"]["per_class"].get<int>();
    rc.eval_seed = j["data"]["synthetic_eval"]["seed"].get<std::uint64_t>();

    rc.augment.weak.pad_crop = j["augment"]["weak"]["pad_crop"].get<bool>();
    rc.augment.weak.pad = j["augment"]["weak"]["pad"].get<int>();
    rc.augment.strong.ops_per_image = j["augment"]["strong"]["ops_per_image"].get<int>();
    rc.augment.strong.magnitude_min = j["augment"]["strong"]["magnitude_min"].get<int>();
    rc.augment.strong.magnitude_max = j["augment"]["strong"]["magnitude_max"].get<int>();
    rc.augment.strong.cutout_fraction = j["augment"]["strong"]["cutout_fraction"].get<double>();
    rc.augment.cutmix_alpha = j["augment"]["cutmix"]["alpha"].get<double>();
    if (rc.augment.strong.magnitude_min < 0 ||
        rc.augment.strong.magnitude_max < rc.augment.strong.magnitude_min)
        throw ConfigError("config: augment.strong magnitude range is invalid");

    const std::string arch = j["model"]["arch"].get<std::string>();
    if (arch != "small_conv")
        throw ConfigError(cat("config key 'model.arch': unknown architecture '", arch,
                              "' (available: small_conv)"));
    rc.conv_channels = j["model"]["conv_channels"].get<std::vector<int>>();
    rc.lower_features = j["model"]["lower_features"].get<std::string>();

    const std::string mode = j["threshold"]["mode"].get<std::string>();
    if (mode == "fixed") rc.threshold_mode = ThresholdMode::kFixed;
    else if (mode == "adaptive") rc.threshold_mode = ThresholdMode::kAdaptive;
    else throw ConfigError(cat("config key 'threshold.mode' must be 'fixed' or 'adaptive', got '", mode, "'"));
    rc.threshold_fixed_value = j["threshold"]["fixed_value"].get<double>();
    rc.threshold_momentum = j["threshold"]["momentum"].get<double>();

    rc.lambda = j["objective"]["lambda"].get<double>();
    if (rc.lambda < 0.0) throw ConfigError("config key 'objective.lambda' must be nonnegative");
    rc.enable_pseudo = j["objective"]["enable_pseudo"].get<bool>();
    rc.enable_cutmix = j["objective"]["enable_cutmix"].get<bool>();
    rc.enable_lower = j["objective"]["enable_lower"].get<bool>();

    rc.lr0 = j["trainer"]["lr0"].get<double>();
    rc.sgd_momentum = j["trainer"]["momentum"].get<double>();
    rc.nesterov = j["trainer"]["nesterov"].get<bool>();
    rc.weight_decay = j["trainer"]["weight_decay"].get<double>();
    rc.total_steps = j["trainer"]["total_steps"].get<std::int64_t>();
    rc.batch_labeled = j["trainer"]["batch_labeled"].get<int>();
    rc.batch_unlabeled = j["trainer"]["batch_unlabeled"].get<int>();
    rc.ema_decay = j["trainer"]["ema_decay"].get<double>();
    rc.log_interval = j["trainer"]["log_interval"].get<std::int64_t>();
    rc.eval_interval = j["trainer"]["eval_interval"].get<std::int64_t>();
    rc.checkpoint_interval = j["trainer"]["checkpoint_interval"].get<std::int64_t>();
    rc.augment_labeled = j["trainer"]["augment_labeled"].get<bool>();
    rc.eval_batch = j["trainer"]["eval_batch"].get<int>();

    if (rc.total_steps < 0) throw ConfigError("config key 'trainer.total_steps' must be >= 0");
    if (rc.batch_labeled < 1 || rc.batch_unlabeled < 1)
        throw ConfigError("config: batch sizes must be >= 1");
    if (rc.ema_decay < 0.0 || rc.ema_decay > 1.0)
        throw ConfigError("config key 'trainer.ema_decay' must be in [0,1]");
    if (rc.sgd_momentum < 0.0 || rc.sgd_momentum >= 1.0)
        throw ConfigError("config key 'trainer.momentum' must be in [0,1)");
    if (rc.threshold_momentum < 0.0 || rc.threshold_momentum > 1.0)
        throw ConfigError("config key 'threshold.momentum' must be in [0,1]");
    if (rc.threshold_fixed_value < 0.0 || rc.threshold_fixed_value > 1.0)
        throw ConfigError("config key 'threshold.fixed_value' must be in [0,1]");
    return rc;
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError(cat("cannot open config ", path));
    json user;
    try {
        in >> user;
    } catch (const json::exception& e) {
        throw ConfigError(cat("config ", path, ": ", e.what()));
    }
    json resolved = resolve_config(user);
    for (const auto& ov : overrides) apply_override(resolved, ov);
    return make_run_config(resolved);
}

}  // namespace infomatch
