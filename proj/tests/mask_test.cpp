#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "occo/mask_providers.hpp"
#include "test_util.hpp"

using namespace occo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("occo_mask_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

BinaryMask random_mask(int64_t h, int64_t w, std::mt19937_64& rng, double p = 0.5) {
    Tensor t({h, w});
    std::bernoulli_distribution d(p);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = d(rng) ? 1.0 : 0.0;
    return BinaryMask(std::move(t));
}

} // namespace

TEST(BinaryMaskType, RejectsNonBinaryValues) {
    EXPECT_THROW(BinaryMask(Tensor::from({0, 0.5}, {1, 2})), DataError);
    EXPECT_NO_THROW(BinaryMask(Tensor::from({0, 1}, {1, 2})));
    EXPECT_THROW(BinaryMask(Tensor::zeros({2, 2, 2})), DataError);
}

TEST(Decompose, AllOnesAndDisjointCases) {
    BinaryMask ones = BinaryMask::ones(3, 3), zeros = BinaryMask::zeros(3, 3);
    MaskPartition p = decompose_masks(ones, ones);
    EXPECT_EQ(p.shared.count(), 9);
    EXPECT_EQ(p.unique_vi.count(), 0);
    EXPECT_EQ(p.unique_ir.count(), 0);
    EXPECT_EQ(p.background.count(), 0);

    Tensor a = Tensor::zeros({2, 2}), b = Tensor::zeros({2, 2});
    a.at(0, 0) = 1.0;
    b.at(1, 1) = 1.0;
    p = decompose_masks(BinaryMask(a.clone()), BinaryMask(b.clone()));
    EXPECT_EQ(p.shared.count(), 0);
    EXPECT_LT(max_abs_diff(p.unique_vi.m, a), 1e-15);
    EXPECT_LT(max_abs_diff(p.unique_ir.m, b), 1e-15);
    EXPECT_EQ(p.background.count(), 2);

    p = decompose_masks(zeros, zeros);
    EXPECT_EQ(p.background.count(), 9);
    EXPECT_THROW(decompose_masks(ones, BinaryMask::ones(3, 4)), DataError);
}

TEST(Decompose, MatchesPerPixelOracleAndInvariants) {
    auto rng = make_rng(derive_seed(11, "decompose"));
    std::uniform_int_distribution<int64_t> hd(1, 40), wd(1, 40);
    for (int trial = 0; trial < 300; ++trial) {
        int64_t h = hd(rng), w = wd(rng);
        BinaryMask mvi = random_mask(h, w, rng), mir = random_mask(h, w, rng);
        MaskPartition p = decompose_masks(mvi, mir);
        for (int64_t i = 0; i < h * w; ++i) {
            bool vi = mvi.m[i] == 1.0, ir = mir.m[i] == 1.0;
            // independent per-pixel case analysis
            double es = (vi && ir) ? 1 : 0, eu = (vi && !ir) ? 1 : 0, ei = (!vi && ir) ? 1 : 0,
                   eb = (!vi && !ir) ? 1 : 0;
            ASSERT_EQ(p.shared.m[i], es);
            ASSERT_EQ(p.unique_vi.m[i], eu);
            ASSERT_EQ(p.unique_ir.m[i], ei);
            ASSERT_EQ(p.background.m[i], eb);
            ASSERT_EQ(p.shared.m[i] + p.unique_vi.m[i] + p.unique_ir.m[i] + p.background.m[i],
                      1.0);
            ASSERT_LE(es * eu + es * ei + es * eb + eu * ei + eu * eb + ei * eb, 0.0);
        }
        // modality swap exchanges the uniques and fixes shared/background
        MaskPartition q = decompose_masks(mir, mvi);
        ASSERT_LT(max_abs_diff(q.shared.m, p.shared.m), 1e-15);
        ASSERT_LT(max_abs_diff(q.background.m, p.background.m), 1e-15);
        ASSERT_LT(max_abs_diff(q.unique_vi.m, p.unique_ir.m), 1e-15);
        ASSERT_LT(max_abs_diff(q.unique_ir.m, p.unique_vi.m), 1e-15);
    }
}

TEST(ApplyMask, TrivialContracts) {
    auto rng = make_rng(derive_seed(12, "apply"));
    Tensor img = Tensor::uniform({4, 5}, 0.0, 1.0, rng);
    EXPECT_LT(max_abs_diff(apply_mask(img, BinaryMask::ones(4, 5)), img), 1e-15);
    Tensor z = apply_mask(img, BinaryMask::zeros(4, 5));
    EXPECT_DOUBLE_EQ(z.abs_max(), 0.0);
    Tensor half = Tensor::zeros({4, 5});
    for (int64_t j = 0; j < 5; ++j) half.at(0, j) = half.at(1, j) = 1.0;
    Tensor c = Tensor::full({4, 5}, 0.5);
    Tensor out = apply_mask(c, BinaryMask(half.clone()));
    EXPECT_DOUBLE_EQ(out.at(1, 3), 0.5);
    EXPECT_DOUBLE_EQ(out.at(2, 3), 0.0);
    EXPECT_THROW(apply_mask(img, BinaryMask::ones(5, 4)), DataError);
}

TEST(MaskPng, RoundTripAndThreshold) {
    fs::path dir = temp_dir("png");
    auto rng = make_rng(derive_seed(13, "maskpng"));
    BinaryMask m = random_mask(9, 13, rng);
    std::string path = (dir / mask_filename("scene", "vi")).string();
    EXPECT_EQ(path, (dir / "scene.vi.mask.png").string());
    write_mask_png(path, m);
    BinaryMask back = read_mask_png(path);
    EXPECT_LT(max_abs_diff(back.m, m.m), 1e-15);

    // 8-bit values {0,100,200} binarize to {0,0,1}
    Tensor raw({1, 1, 3});
    raw[0] = 0.0 / 255.0;
    raw[1] = 100.0 / 255.0;
    raw[2] = 200.0 / 255.0;
    std::string tpath = (dir / "t.png").string();
    write_png(tpath, Image(std::move(raw)));
    BinaryMask t = read_mask_png(tpath);
    EXPECT_DOUBLE_EQ(t.m[0], 0.0);
    EXPECT_DOUBLE_EQ(t.m[1], 0.0);
    EXPECT_DOUBLE_EQ(t.m[2], 1.0);

    // exact boundary: 127 -> 0, 128 -> 1
    Tensor edge({1, 1, 2});
    edge[0] = 127.0 / 255.0;
    edge[1] = 128.0 / 255.0;
    std::string epath = (dir / "e.png").string();
    write_png(epath, Image(std::move(edge)));
    BinaryMask e = read_mask_png(epath);
    EXPECT_DOUBLE_EQ(e.m[0], 0.0);
    EXPECT_DOUBLE_EQ(e.m[1], 1.0);
}

TEST(SyntheticProvider, DeterministicPureFunction) {
    BinaryMask a = synthetic_mask(64, 64, 7);
    BinaryMask b = synthetic_mask(64, 64, 7);
    EXPECT_LT(max_abs_diff(a.m, b.m), 1e-300); // bitwise identical
    EXPECT_GT(a.count(), 0);
    BinaryMask c = synthetic_mask(64, 64, 8);
    EXPECT_GT(max_abs_diff(a.m, c.m), 0.0);
    BinaryMask d = synthetic_mask(32, 64, 7);
    EXPECT_EQ(d.height(), 32);
    // degenerate sizes still work
    EXPECT_NO_THROW(synthetic_mask(1, 1, 3));
    EXPECT_NO_THROW(synthetic_mask(2, 257, 3));
}

TEST(Providers, GenerateModalMaskDispatch) {
    fs::path dir = temp_dir("dispatch");
    Tensor t({1, 16, 16});
    t.fill(0.3);
    Image img(std::move(t));

    MaskProviderSpec syn;
    syn.kind = MaskProviderSpec::Kind::synthetic;
    syn.seed = 7;
    int count = 0;
    BinaryMask m1 = generate_modal_mask(img, syn, &count);
    BinaryMask m2 = generate_modal_mask(img, syn);
    EXPECT_LT(max_abs_diff(m1.m, m2.m), 1e-300);
    EXPECT_GE(count, 1);

    // file provider: all-zeros file loads as all-zeros mask
    std::string zpath = (dir / "z.png").string();
    write_mask_png(zpath, BinaryMask::zeros(16, 16));
    MaskProviderSpec file;
    file.kind = MaskProviderSpec::Kind::file;
    file.path = zpath;
    BinaryMask z = generate_modal_mask(img, file, &count);
    EXPECT_TRUE(z.empty());
    EXPECT_EQ(count, 0);

    // dimension mismatch is a data error
    std::string wpath = (dir / "w.png").string();
    write_mask_png(wpath, BinaryMask::ones(8, 8));
    file.path = wpath;
    EXPECT_THROW(generate_modal_mask(img, file), DataError);

    MaskProviderSpec bad;
    bad.kind = MaskProviderSpec::Kind::external_lvm;
    EXPECT_THROW(generate_modal_mask(img, bad), ConfigError);
}

TEST(Sidecar, JsonRoundTrip) {
    fs::path dir = temp_dir("sidecar");
    MaskSidecar s{"scene.png", "person;car", 3, "external"};
    std::string path = (dir / "scene.vi.mask.json").string();
    write_mask_sidecar(path, s);
    MaskSidecar back = read_mask_sidecar(path);
    EXPECT_EQ(back.image, s.image);
    EXPECT_EQ(back.prompt, s.prompt);
    EXPECT_EQ(back.instance_count, 3);
    EXPECT_EQ(back.provider, "external");
}

namespace {

// In-process segmentation stub for adapter tests.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/segment", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

nlohmann::json instance_response(const std::vector<std::vector<int>>& masks) {
    nlohmann::json j;
    j["instances"] = nlohmann::json::array();
    for (const auto& m : masks) j["instances"].push_back({{"mask", m}});
    return j;
}

} // namespace

TEST(ExternalProvider, UnionsInstanceMasks) {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        auto j = nlohmann::json::parse(req.body);
        EXPECT_EQ(j.at("prompt"), "car");
        EXPECT_EQ(j.at("width"), 2);
        EXPECT_EQ(j.at("height"), 2);
        res.set_content(instance_response({{1, 0, 0, 0}, {0, 0, 0, 1}}).dump(),
                        "application/json");
    });
    MaskProviderSpec spec;
    spec.kind = MaskProviderSpec::Kind::external_lvm;
    spec.endpoint = server.endpoint();
    spec.prompt = "car";
    Tensor t({1, 2, 2});
    t.fill(0.5);
    int count = 0;
    BinaryMask m = generate_modal_mask(Image(std::move(t)), spec, &count);
    EXPECT_EQ(count, 2);
    EXPECT_DOUBLE_EQ(m.m[0], 1.0);
    EXPECT_DOUBLE_EQ(m.m[1], 0.0);
    EXPECT_DOUBLE_EQ(m.m[2], 0.0);
    EXPECT_DOUBLE_EQ(m.m[3], 1.0);
    EXPECT_EQ(calls.load(), 1);
}

TEST(ExternalProvider, RetriesThenSucceeds) {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++calls <= 2) {
            res.status = 503;
            return;
        }
        res.set_content(instance_response({{1}}).dump(), "application/json");
    });
    MaskProviderSpec spec;
    spec.kind = MaskProviderSpec::Kind::external_lvm;
    spec.endpoint = server.endpoint();
    spec.prompt = "p";
    spec.retry_base_ms = 1;
    Tensor t({1, 1, 1});
    BinaryMask m = generate_modal_mask(Image(std::move(t)), spec);
    EXPECT_EQ(calls.load(), 3);
    EXPECT_EQ(m.count(), 1);
}

TEST(ExternalProvider, GivesUpAfterThreeRetries) {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
    });
    MaskProviderSpec spec;
    spec.kind = MaskProviderSpec::Kind::external_lvm;
    spec.endpoint = server.endpoint();
    spec.prompt = "p";
    spec.retry_base_ms = 1;
    Tensor t({1, 1, 1});
    EXPECT_THROW(generate_modal_mask(Image(std::move(t)), spec), DataError);
    EXPECT_EQ(calls.load(), 4); // initial attempt + 3 retries
}

TEST(ExternalProvider, MalformedResponsesAreDataErrors) {
    int mode = 0;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        if (mode == 0) res.set_content("not json", "application/json");
        if (mode == 1) res.set_content(instance_response({{1, 0}}).dump(), "application/json");
        if (mode == 2) res.set_content(instance_response({{7}}).dump(), "application/json");
    });
    MaskProviderSpec spec;
    spec.kind = MaskProviderSpec::Kind::external_lvm;
    spec.endpoint = server.endpoint();
    spec.prompt = "p";
    spec.retry_base_ms = 1;
    for (mode = 0; mode < 3; ++mode) {
        Tensor t({1, 1, 1});
        EXPECT_THROW(generate_modal_mask(Image(std::move(t)), spec), DataError) << mode;
    }
}

TEST(ExternalProvider, BoundsInFlightRequests) {
    std::atomic<int> active{0}, peak{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        int now = ++active;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --active;
        res.set_content(instance_response({{1}}).dump(), "application/json");
    });
    MaskProviderSpec spec;
    spec.kind = MaskProviderSpec::Kind::external_lvm;
    spec.endpoint = server.endpoint();
    spec.prompt = "p";
    spec.max_in_flight = 2;
    ExternalLvm client(spec);
    std::vector<std::thread> workers;
    for (int i = 0; i < 6; ++i)
        workers.emplace_back([&] {
            Tensor t({1, 1, 1});
            client.segment(Image(std::move(t)));
        });
    for (auto& w : workers) w.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}
