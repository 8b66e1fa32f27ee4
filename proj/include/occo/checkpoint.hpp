#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>

#include "occo/config.hpp"
#include "occo/nn.hpp"
#include "occo/serialize.hpp"

namespace occo {

inline constexpr char kCheckpointMagic[] = "OCCOCKPT";

/// Full training state: enough to continue a run bit-compatibly or to fuse
/// with the trained weights. Per-step randomness is re-derived from the
/// config seed and the step index, so (config, step) pins the rng state.
struct Checkpoint {
    TrainConfig config;
    int64_t step = 0;
    int64_t adam_step = 0;
    io::NamedTensors params;
    io::NamedTensors buffers;
    io::NamedTensors adam_m;
    io::NamedTensors adam_v;
};

namespace detail_ckpt {

inline io::NamedTensors snapshot(const std::vector<std::pair<std::string, Var>>& params) {
    io::NamedTensors out;
    out.reserve(params.size());
    for (const auto& [name, v] : params) out.emplace_back(name, v->value.clone());
    return out;
}

inline io::NamedTensors snapshot(const std::vector<std::pair<std::string, Tensor>>& buffers) {
    io::NamedTensors out;
    out.reserve(buffers.size());
    for (const auto& [name, t] : buffers) out.emplace_back(name, t.clone());
    return out;
}

inline void copy_into(const std::string& name, const Tensor& src, Tensor dst) {
    OCCO_CHECK(src.same_shape(dst), "checkpoint tensor ", name, " has shape ",
               shape_str(src.shape()), ", model expects ", shape_str(dst.shape()));
    std::copy(src.ptr(), src.ptr() + src.numel(), dst.ptr());
}

inline const Tensor& find(const io::NamedTensors& block, const std::string& name,
                          const char* what) {
    for (const auto& [n, t] : block)
        if (n == name) return t;
    throw DataError(std::string("checkpoint is missing ") + what + " tensor " + name);
}

} // namespace detail_ckpt

inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
    std::ofstream os(path, std::ios::binary);
    OCCO_CHECK(os.good(), "cannot open ", path, " for writing");
    os.write(kCheckpointMagic, 8);
    io::write_u32(os, 1); // version
    nlohmann::json header = {
        {"config", train_config_to_json(cp.config)},
        {"step", cp.step},
        {"adam_step", cp.adam_step},
    };
    io::write_string(os, header.dump());
    io::write_tensor_block(os, cp.params);
    io::write_tensor_block(os, cp.buffers);
    io::write_tensor_block(os, cp.adam_m);
    io::write_tensor_block(os, cp.adam_v);
    OCCO_CHECK(os.good(), "write failure for ", path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    OCCO_CHECK(is.good(), "cannot open checkpoint ", path);
    char magic[8] = {};
    is.read(magic, 8);
    OCCO_CHECK(is.good() && std::string(magic, 8) == kCheckpointMagic, path,
               " is not a checkpoint container");
    uint32_t version = io::read_u32(is);
    OCCO_CHECK(version == 1, "unsupported checkpoint version ", version);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(io::read_string(is));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
    }
    Checkpoint cp;
    cp.config = train_config_from_json(header.at("config"));
    cp.step = header.at("step").get<int64_t>();
    cp.adam_step = header.at("adam_step").get<int64_t>();
    cp.params = io::read_tensor_block(is);
    cp.buffers = io::read_tensor_block(is);
    cp.adam_m = io::read_tensor_block(is);
    cp.adam_v = io::read_tensor_block(is);
    return cp;
}

/// Writes checkpointed parameters and normalization statistics into a model
/// registry. The stored network shape must match the registry exactly; a
/// differently configured model is rejected rather than partially loaded.
inline void restore_model(const Checkpoint& cp, const NetConfig& expected,
                          nn::ParamRegistry& reg) {
    NetConfig stored = cp.config.resolved().net;
    OCCO_CHECK(stored == expected,
               "checkpoint network configuration does not match the model being restored");
    OCCO_CHECK(cp.params.size() == reg.params().size(), "checkpoint holds ", cp.params.size(),
               " parameter tensors, model has ", reg.params().size());
    OCCO_CHECK(cp.buffers.size() == reg.buffers().size(), "checkpoint holds ", cp.buffers.size(),
               " buffer tensors, model has ", reg.buffers().size());
    for (const auto& [name, v] : reg.params())
        detail_ckpt::copy_into(name, detail_ckpt::find(cp.params, name, "parameter"), v->value);
    for (const auto& [name, t] : reg.buffers())
        detail_ckpt::copy_into(name, detail_ckpt::find(cp.buffers, name, "buffer"), t);
}

/// Restores optimizer moments. The Adam instance must have been built from
/// the registry's parameter list (same order).
inline void restore_optimizer(const Checkpoint& cp, const nn::ParamRegistry& reg,
                              nn::Adam& adam) {
    const auto& params = reg.params();
    OCCO_CHECK(cp.adam_m.size() == params.size() && cp.adam_v.size() == params.size(),
               "optimizer moment count does not match the model parameter count");
    for (size_t k = 0; k < params.size(); ++k) {
        const std::string& name = params[k].first;
        detail_ckpt::copy_into(name, detail_ckpt::find(cp.adam_m, name, "first-moment"),
                               adam.m()[k]);
        detail_ckpt::copy_into(name, detail_ckpt::find(cp.adam_v, name, "second-moment"),
                               adam.v()[k]);
    }
    adam.set_step_count(cp.adam_step);
}

} // namespace occo
