#pragma once

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>

#include "occo/mask.hpp"
#include "occo/rng.hpp"

namespace occo {

struct MaskProviderSpec {
    enum class Kind { synthetic, file, external_lvm };

    Kind kind = Kind::synthetic;
    uint64_t seed = 0;        // synthetic
    std::string path;         // file: mask PNG to load
    std::string endpoint;     // external: base URL, e.g. http://127.0.0.1:8080
    std::string prompt;       // external: detection text prompt
    int max_in_flight = 4;    // external: concurrent request bound
    int retry_base_ms = 100;  // external: backoff base delay

    void validate() const {
        if (kind == Kind::external_lvm) {
            OCCO_CHECK_CFG(!prompt.empty(), "external mask provider requires a prompt");
            OCCO_CHECK_CFG(!endpoint.empty(), "external mask provider requires an endpoint");
        }
        if (kind == Kind::file) OCCO_CHECK_CFG(!path.empty(), "file mask provider requires a path");
    }
};

inline const char* provider_name(MaskProviderSpec::Kind k) {
    switch (k) {
        case MaskProviderSpec::Kind::synthetic: return "synthetic";
        case MaskProviderSpec::Kind::file: return "file";
        case MaskProviderSpec::Kind::external_lvm: return "external";
    }
    return "unknown";
}

inline MaskProviderSpec::Kind provider_kind_from_name(const std::string& name) {
    if (name == "synthetic") return MaskProviderSpec::Kind::synthetic;
    if (name == "file") return MaskProviderSpec::Kind::file;
    if (name == "external") return MaskProviderSpec::Kind::external_lvm;
    throw ConfigError("unknown mask provider '" + name + "'");
}

/// Sidecar record persisted next to every generated mask PNG.
struct MaskSidecar {
    std::string image;
    std::string prompt;
    int instance_count = 0;
    std::string provider;
};

inline void write_mask_sidecar(const std::string& path, const MaskSidecar& s) {
    nlohmann::json j{{"image", s.image},
                     {"prompt", s.prompt},
                     {"instance_count", s.instance_count},
                     {"provider", s.provider}};
    std::ofstream out(path);
    OCCO_CHECK(out.good(), "cannot write sidecar ", path);
    out << j.dump(2) << "\n";
}

inline MaskSidecar read_mask_sidecar(const std::string& path) {
    std::ifstream in(path);
    OCCO_CHECK(in.good(), "cannot read sidecar ", path);
    nlohmann::json j = nlohmann::json::parse(in);
    return {j.at("image").get<std::string>(), j.at("prompt").get<std::string>(),
            j.at("instance_count").get<int>(), j.at("provider").get<std::string>()};
}

/// Seeded arrangement of filled rectangles and ellipses; a pure function of
/// (dimensions, seed).
inline BinaryMask synthetic_mask(int64_t H, int64_t W, uint64_t seed,
                                 int* instance_count = nullptr) {
    OCCO_CHECK(H >= 1 && W >= 1, "synthetic mask needs positive dimensions");
    auto rng = make_rng(derive_seed(seed, "synthetic-mask", static_cast<uint64_t>(H),
                                    static_cast<uint64_t>(W)));
    std::uniform_int_distribution<int> count_dist(1, 3);
    int shapes = count_dist(rng);
    Tensor m({H, W});
    auto span = [&](int64_t extent) {
        int64_t lo = std::max<int64_t>(1, extent / 8);
        int64_t hi = std::max<int64_t>(lo, extent / 2);
        return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
    };
    for (int s = 0; s < shapes; ++s) {
        bool rect = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
        int64_t h = span(H), w = span(W);
        int64_t y0 = std::uniform_int_distribution<int64_t>(0, std::max<int64_t>(0, H - h))(rng);
        int64_t x0 = std::uniform_int_distribution<int64_t>(0, std::max<int64_t>(0, W - w))(rng);
        if (rect) {
            for (int64_t i = y0; i < std::min(H, y0 + h); ++i)
                for (int64_t j = x0; j < std::min(W, x0 + w); ++j) m.at(i, j) = 1.0;
        } else {
            double cy = y0 + (h - 1) / 2.0, cx = x0 + (w - 1) / 2.0;
            double ry = std::max(0.5, h / 2.0), rx = std::max(0.5, w / 2.0);
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double dy = (i - cy) / ry, dx = (j - cx) / rx;
                    if (dy * dy + dx * dx <= 1.0) m.at(i, j) = 1.0;
                }
        }
    }
    if (instance_count) *instance_count = shapes;
    return BinaryMask(std::move(m));
}

/// Remote detection+segmentation adapter. One POST per image carrying the
/// prompt; the response lists per-instance masks which are unioned. Requests
/// retry up to 3 times with exponential backoff; each request uses its own
/// connection and total in-flight requests are bounded by max_in_flight.
class ExternalLvm {
public:
    explicit ExternalLvm(MaskProviderSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        OCCO_CHECK_CFG(spec_.max_in_flight >= 1, "max_in_flight must be >= 1");
    }

    BinaryMask segment(const Image& image, int* instance_count = nullptr) {
        Slot slot(*this);
        int64_t H = image.height(), W = image.width();
        YcbcrImage ycc = to_ycbcr(image);
        nlohmann::json req{{"prompt", spec_.prompt}, {"width", W}, {"height", H}};
        auto& pixels = req["pixels"] = nlohmann::json::array();
        for (int64_t i = 0; i < H * W; ++i) pixels.push_back(static_cast<int>(to_byte(ycc.y[i])));
        std::string body = req.dump();

        std::string err;
        for (int attempt = 0; attempt <= 3; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(spec_.retry_base_ms * (1 << (attempt - 1))));
            httplib::Client cli(spec_.endpoint);
            cli.set_connection_timeout(5, 0);
            cli.set_read_timeout(30, 0);
            auto res = cli.Post("/segment", body, "application/json");
            if (!res) {
                err = "transport error " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                err = "http status " + std::to_string(res->status);
                continue;
            }
            return parse_response(res->body, H, W, instance_count);
        }
        throw DataError("external mask provider unreachable after retries: " + err);
    }

private:
    static BinaryMask parse_response(const std::string& body, int64_t H, int64_t W,
                                     int* instance_count) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed segmentation response: ") + e.what());
        }
        OCCO_CHECK(j.contains("instances") && j["instances"].is_array(),
                   "segmentation response missing instances array");
        Tensor m({H, W});
        int count = 0;
        for (const auto& inst : j["instances"]) {
            OCCO_CHECK(inst.contains("mask") && inst["mask"].is_array() &&
                           static_cast<int64_t>(inst["mask"].size()) == H * W,
                       "instance mask size mismatch, expected ", H * W);
            for (int64_t i = 0; i < H * W; ++i) {
                int v = inst["mask"][static_cast<size_t>(i)].get<int>();
                OCCO_CHECK(v == 0 || v == 1, "instance mask value ", v, " is not 0/1");
                if (v) m[i] = 1.0;
            }
            ++count;
        }
        if (instance_count) *instance_count = count;
        return BinaryMask(std::move(m));
    }

    // RAII in-flight slot enforcing the concurrency bound.
    struct Slot {
        explicit Slot(ExternalLvm& c) : client(c) {
            std::unique_lock lk(client.mu_);
            client.cv_.wait(lk, [&] { return client.in_flight_ < client.spec_.max_in_flight; });
            ++client.in_flight_;
        }
        ~Slot() {
            {
                std::lock_guard lk(client.mu_);
                --client.in_flight_;
            }
            client.cv_.notify_one();
        }
        ExternalLvm& client;
    };

    MaskProviderSpec spec_;
    std::mutex mu_;
    std::condition_variable cv_;
    int in_flight_ = 0;
};

/// Produces the salient-object mask for one image via the selected backend.
inline BinaryMask generate_modal_mask(const Image& image, const MaskProviderSpec& spec,
                                      int* instance_count = nullptr) {
    spec.validate();
    switch (spec.kind) {
        case MaskProviderSpec::Kind::synthetic:
            return synthetic_mask(image.height(), image.width(), spec.seed, instance_count);
        case MaskProviderSpec::Kind::file: {
            BinaryMask m = read_mask_png(spec.path);
            OCCO_CHECK(m.height() == image.height() && m.width() == image.width(),
                       "mask file ", spec.path, " is ", m.height(), "x", m.width(),
                       " but image is ", image.height(), "x", image.width());
            if (instance_count) *instance_count = m.empty() ? 0 : 1;
            return m;
        }
        case MaskProviderSpec::Kind::external_lvm: {
            ExternalLvm client(spec);
            return client.segment(image, instance_count);
        }
    }
    throw ConfigError("unhandled mask provider kind");
}

} // namespace occo
