#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "occo/contextual.hpp"
#include "occo/data_pipeline.hpp"
#include "occo/fusion_net.hpp"
#include "occo/pixel_losses.hpp"

namespace occo {

/// Training variants. `kFull` is the complete objective and network; the
/// numbered models swap the latent feature space or the contrastive form,
/// the `kNo*` variants drop one attention path of the fusion block.
enum class Variant {
    kFull,
    kModel1, // deep layers only, Euclidean distance
    kModel2, // all five layers, contextual distance
    kModel3, // all five layers, Euclidean distance
    kModel4, // masked intensity objective instead of contrastive + intensity
    kModel5, // relative distances only (no absolute-distance term)
    kNoSe,   // no spatial enhancement
    kNoCc,   // no cross-channel attention
    kNoCa,   // no cross attention
};

inline constexpr std::array<Variant, 9> kAllVariants = {
    Variant::kFull,   Variant::kModel1, Variant::kModel2,
    Variant::kModel3, Variant::kModel4, Variant::kModel5,
    Variant::kNoSe,   Variant::kNoCc,   Variant::kNoCa,
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kModel1: return "model1";
        case Variant::kModel2: return "model2";
        case Variant::kModel3: return "model3";
        case Variant::kModel4: return "model4";
        case Variant::kModel5: return "model5";
        case Variant::kNoSe: return "no_se";
        case Variant::kNoCc: return "no_cc";
        case Variant::kNoCa: return "no_ca";
    }
    throw ConfigError("unreachable variant value");
}

inline Variant variant_from_name(const std::string& name) {
    for (Variant v : kAllVariants)
        if (name == variant_name(v)) return v;
    std::string known;
    for (Variant v : kAllVariants) {
        if (!known.empty()) known += ", ";
        known += variant_name(v);
    }
    throw ConfigError("unknown variant '" + name + "' (known: " + known + ")");
}

/// Whole-run configuration. Defaults follow the reference hyperparameters;
/// `steps` has no blessed default and must be set explicitly.
struct TrainConfig {
    uint64_t seed = 0;
    int64_t steps = 0;
    int64_t batch_size = 12;
    int64_t group_n = 3;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Global gradient-norm ceiling; 0 disables clipping.
    double grad_clip = 0.0;
    int64_t checkpoint_every = 50;
    Variant variant = Variant::kFull;

    NetConfig net;
    ContrastiveConfig contrastive;
    LossWeights loss;
    PatchConfig patch;
    AblationMaskLossOptions mask_objective;

    void validate() const {
        OCCO_CHECK_CFG(steps >= 1, "steps must be set to a positive count, got ", steps);
        OCCO_CHECK_CFG(batch_size >= 1, "batch_size must be >= 1, got ", batch_size);
        OCCO_CHECK_CFG(group_n >= 1, "group_n must be >= 1, got ", group_n);
        OCCO_CHECK_CFG(batch_size % group_n == 0, "batch_size ", batch_size,
                       " must be divisible by group_n ", group_n);
        OCCO_CHECK_CFG(learning_rate > 0.0, "learning_rate must be positive");
        OCCO_CHECK_CFG(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0,1)");
        OCCO_CHECK_CFG(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0,1)");
        OCCO_CHECK_CFG(adam_epsilon > 0.0, "adam_epsilon must be positive");
        OCCO_CHECK_CFG(grad_clip >= 0.0, "grad_clip must be >= 0 (0 disables)");
        OCCO_CHECK_CFG(checkpoint_every >= 1, "checkpoint_every must be >= 1");
        net.validate();
        contrastive.validate();
        loss.validate();
        patch.validate();
        mask_objective.validate();
    }

    /// The masked-intensity variant routes the objective away from the
    /// contrastive and intensity terms.
    bool uses_mask_objective() const { return variant == Variant::kModel4; }

    /// Copy with the variant folded into the concrete knobs it stands for.
    /// The group size of the contrastive sampler always follows group_n.
    TrainConfig resolved() const {
        TrainConfig r = *this;
        r.contrastive.group_size = r.group_n;
        switch (variant) {
            case Variant::kFull:
            case Variant::kModel4:
                break;
            case Variant::kModel1:
                r.contrastive.distance = FeatureDistance::kEuclidean;
                r.contrastive.deep_layers = {4, 5};
                break;
            case Variant::kModel2:
                r.contrastive.distance = FeatureDistance::kContextual;
                r.contrastive.deep_layers = {1, 2, 3, 4, 5};
                break;
            case Variant::kModel3:
                r.contrastive.distance = FeatureDistance::kEuclidean;
                r.contrastive.deep_layers = {1, 2, 3, 4, 5};
                break;
            case Variant::kModel5:
                r.contrastive.lambda_cs = 0.0;
                break;
            case Variant::kNoSe:
                r.net.ablate_spatial_attention = true;
                break;
            case Variant::kNoCc:
                r.net.ablate_channel_attention = true;
                break;
            case Variant::kNoCa:
                r.net.ablate_cross_attention = true;
                break;
        }
        r.validate();
        return r;
    }
};

namespace detail_cfg {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    OCCO_CHECK_CFG(j.is_object(), where, " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) known = true;
        OCCO_CHECK_CFG(known, "unknown key '", item.key(), "' in ", where);
    }
}

template <typename T>
T fetch(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

} // namespace detail_cfg

inline nlohmann::json net_config_to_json(const NetConfig& c) {
    return {
        {"base_channels", c.base_channels},
        {"attention_token_downsample", c.attention_token_downsample},
        {"mlp_hidden_divisor", c.mlp_hidden_divisor},
        {"ablate_channel_attention", c.ablate_channel_attention},
        {"ablate_cross_attention", c.ablate_cross_attention},
        {"ablate_spatial_attention", c.ablate_spatial_attention},
    };
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    using detail_cfg::fetch;
    detail_cfg::check_keys(j,
                           {"base_channels", "attention_token_downsample", "mlp_hidden_divisor",
                            "ablate_channel_attention", "ablate_cross_attention",
                            "ablate_spatial_attention"},
                           "net");
    NetConfig c;
    c.base_channels = fetch<int64_t>(j, "base_channels", c.base_channels, "net");
    c.attention_token_downsample =
        fetch<int64_t>(j, "attention_token_downsample", c.attention_token_downsample, "net");
    c.mlp_hidden_divisor = fetch<int64_t>(j, "mlp_hidden_divisor", c.mlp_hidden_divisor, "net");
    c.ablate_channel_attention =
        fetch<bool>(j, "ablate_channel_attention", c.ablate_channel_attention, "net");
    c.ablate_cross_attention =
        fetch<bool>(j, "ablate_cross_attention", c.ablate_cross_attention, "net");
    c.ablate_spatial_attention =
        fetch<bool>(j, "ablate_spatial_attention", c.ablate_spatial_attention, "net");
    return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j = {
        {"seed", c.seed},
        {"steps", c.steps},
        {"batch_size", c.batch_size},
        {"group_n", c.group_n},
        {"learning_rate", c.learning_rate},
        {"adam", {{"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.adam_epsilon}}},
        {"grad_clip", c.grad_clip},
        {"checkpoint_every", c.checkpoint_every},
        {"variant", variant_name(c.variant)},
        {"net", net_config_to_json(c.net)},
        {"contrastive",
         {{"omega1", c.contrastive.omega1},
          {"omega2", c.contrastive.omega2},
          {"lambda_cs", c.contrastive.lambda_cs},
          {"epsilon", c.contrastive.epsilon},
          {"deep_layers", c.contrastive.deep_layers},
          {"distance",
           c.contrastive.distance == FeatureDistance::kContextual ? "contextual" : "euclidean"}}},
        {"loss",
         {{"lambda_int", c.loss.lambda_int},
          {"lambda_tex", c.loss.lambda_tex},
          {"lambda_con", c.loss.lambda_con}}},
        {"patch",
         {{"crop", c.patch.crop},
          {"min_salient_fraction", c.patch.min_salient_fraction},
          {"max_retries", c.patch.max_retries}}},
        {"mask_objective",
         {{"omega1", c.mask_objective.omega1},
          {"omega2", c.mask_objective.omega2},
          {"literal_vi_positive", c.mask_objective.literal_vi_positive}}},
    };
    return j;
}

/// Builds a TrainConfig from a nested JSON document; absent keys keep their
/// defaults, unknown keys are rejected. The result is not yet validated so
/// callers may override fields (e.g. from command-line flags) first.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    using detail_cfg::fetch;
    detail_cfg::check_keys(j,
                           {"seed", "steps", "batch_size", "group_n", "learning_rate", "adam",
                            "grad_clip", "checkpoint_every", "variant", "net", "contrastive",
                            "loss", "patch", "mask_objective"},
                           "config");
    TrainConfig c;
    c.seed = fetch<uint64_t>(j, "seed", c.seed, "config");
    c.steps = fetch<int64_t>(j, "steps", c.steps, "config");
    c.batch_size = fetch<int64_t>(j, "batch_size", c.batch_size, "config");
    c.group_n = fetch<int64_t>(j, "group_n", c.group_n, "config");
    c.learning_rate = fetch<double>(j, "learning_rate", c.learning_rate, "config");
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        detail_cfg::check_keys(a, {"beta1", "beta2", "epsilon"}, "adam");
        c.beta1 = fetch<double>(a, "beta1", c.beta1, "adam");
        c.beta2 = fetch<double>(a, "beta2", c.beta2, "adam");
        c.adam_epsilon = fetch<double>(a, "epsilon", c.adam_epsilon, "adam");
    }
    c.grad_clip = fetch<double>(j, "grad_clip", c.grad_clip, "config");
    c.checkpoint_every = fetch<int64_t>(j, "checkpoint_every", c.checkpoint_every, "config");
    if (j.contains("variant"))
        c.variant = variant_from_name(fetch<std::string>(j, "variant", "full", "config"));
    if (j.contains("net")) c.net = net_config_from_json(j.at("net"));
    if (j.contains("contrastive")) {
        const auto& s = j.at("contrastive");
        detail_cfg::check_keys(
            s, {"omega1", "omega2", "lambda_cs", "epsilon", "deep_layers", "distance"},
            "contrastive");
        c.contrastive.omega1 = fetch<double>(s, "omega1", c.contrastive.omega1, "contrastive");
        c.contrastive.omega2 = fetch<double>(s, "omega2", c.contrastive.omega2, "contrastive");
        c.contrastive.lambda_cs =
            fetch<double>(s, "lambda_cs", c.contrastive.lambda_cs, "contrastive");
        c.contrastive.epsilon = fetch<double>(s, "epsilon", c.contrastive.epsilon, "contrastive");
        c.contrastive.deep_layers =
            fetch<std::vector<int>>(s, "deep_layers", c.contrastive.deep_layers, "contrastive");
        std::string d = fetch<std::string>(s, "distance", "contextual", "contrastive");
        if (d == "contextual")
            c.contrastive.distance = FeatureDistance::kContextual;
        else if (d == "euclidean")
            c.contrastive.distance = FeatureDistance::kEuclidean;
        else
            throw ConfigError("contrastive.distance must be 'contextual' or 'euclidean', got '" +
                              d + "'");
    }
    if (j.contains("loss")) {
        const auto& s = j.at("loss");
        detail_cfg::check_keys(s, {"lambda_int", "lambda_tex", "lambda_con"}, "loss");
        c.loss.lambda_int = fetch<double>(s, "lambda_int", c.loss.lambda_int, "loss");
        c.loss.lambda_tex = fetch<double>(s, "lambda_tex", c.loss.lambda_tex, "loss");
        c.loss.lambda_con = fetch<double>(s, "lambda_con", c.loss.lambda_con, "loss");
    }
    if (j.contains("patch")) {
        const auto& s = j.at("patch");
        detail_cfg::check_keys(s, {"crop", "min_salient_fraction", "max_retries"}, "patch");
        c.patch.crop = fetch<int64_t>(s, "crop", c.patch.crop, "patch");
        c.patch.min_salient_fraction =
            fetch<double>(s, "min_salient_fraction", c.patch.min_salient_fraction, "patch");
        c.patch.max_retries = fetch<int64_t>(s, "max_retries", c.patch.max_retries, "patch");
    }
    if (j.contains("mask_objective")) {
        const auto& s = j.at("mask_objective");
        detail_cfg::check_keys(s, {"omega1", "omega2", "literal_vi_positive"}, "mask_objective");
        c.mask_objective.omega1 =
            fetch<double>(s, "omega1", c.mask_objective.omega1, "mask_objective");
        c.mask_objective.omega2 =
            fetch<double>(s, "omega2", c.mask_objective.omega2, "mask_objective");
        c.mask_objective.literal_vi_positive = fetch<bool>(
            s, "literal_vi_positive", c.mask_objective.literal_vi_positive, "mask_objective");
    }
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is.good()) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return train_config_from_json(j);
}

} // namespace occo
