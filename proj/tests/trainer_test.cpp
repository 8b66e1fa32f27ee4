#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "occo/trainer.hpp"
#include "test_util.hpp"
#include "toy_data.hpp"

using namespace occo;
using occo_test::make_training_dataset;
using occo_test::random_tensor;
using occo_test::scratch_dir;

namespace {

const Backbone& test_backbone() {
    static TestBackbone bb;
    return bb;
}

/// Small but non-degenerate setup: 4 train pairs, micro network, crop 16.
struct ToyWorld {
    std::string dir;
    DatasetManifest manifest;
    TrainConfig cfg;

    explicit ToyWorld(const std::string& tag) {
        dir = scratch_dir(tag);
        SyntheticSpec spec;
        spec.count = 6;
        spec.test_count = 2;
        spec.height = 64;
        spec.width = 64;
        spec.seed = 5;
        manifest = make_training_dataset(dir, spec);
        cfg.seed = 21;
        cfg.steps = 4;
        cfg.batch_size = 2;
        cfg.group_n = 1;
        cfg.net.base_channels = 4;
        cfg.patch.crop = 16;
    }
};

void expect_reports_equal(const StepReport& a, const StepReport& b) {
    EXPECT_EQ(a.step, b.step);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.pixel, b.pixel);
    EXPECT_EQ(a.ssim, b.ssim);
    EXPECT_EQ(a.intensity, b.intensity);
    EXPECT_EQ(a.texture, b.texture);
    EXPECT_EQ(a.con, b.con);
    EXPECT_EQ(a.con_unique, b.con_unique);
    EXPECT_EQ(a.con_share, b.con_share);
    EXPECT_EQ(a.con_bg, b.con_bg);
}

} // namespace

TEST(Trainer, TwoRunsWithTheSameSeedGiveIdenticalReportStreams) {
    ToyWorld w("trainer_determinism");
    Trainer a(w.cfg, w.manifest, test_backbone());
    Trainer b(w.cfg, w.manifest, test_backbone());
    for (int s = 0; s < 3; ++s) {
        StepReport ra = a.step();
        StepReport rb = b.step();
        expect_reports_equal(ra, rb);
        EXPECT_TRUE(std::isfinite(ra.total));
    }
}

TEST(Trainer, ZeroAuxiliaryWeightsReduceTheObjectiveToStructuralLoss) {
    ToyWorld w("trainer_ssim_only");
    w.cfg.loss.lambda_int = 0.0;
    w.cfg.loss.lambda_tex = 0.0;
    w.cfg.loss.lambda_con = 0.0;
    Trainer t(w.cfg, w.manifest, test_backbone());
    StepReport r = t.step();
    EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_DOUBLE_EQ(r.total, r.ssim);
    EXPECT_DOUBLE_EQ(r.pixel, r.ssim);
}

TEST(Trainer, FrozenBackboneFeaturesAreUntouchedByTenSteps) {
    ToyWorld w("trainer_frozen");
    w.cfg.steps = 10;
    Trainer t(w.cfg, w.manifest, test_backbone());

    Var probe = constant(random_tensor({1, 1, 16, 16}, 77, 0.0, 1.0));
    FeaturePyramid before = test_backbone().extract(probe);
    std::vector<Tensor> frozen;
    for (const Var& lv : before.levels) frozen.push_back(lv->value.clone());

    for (int s = 0; s < 10; ++s) t.step();

    FeaturePyramid after = test_backbone().extract(probe);
    for (size_t k = 0; k < frozen.size(); ++k)
        EXPECT_EQ(max_abs_diff(after.levels[k]->value, frozen[k]), 0.0) << "level " << k;
}

TEST(Trainer, ResumeFromASnapshotIsBitCompatible) {
    ToyWorld w("trainer_resume");
    Trainer a(w.cfg, w.manifest, test_backbone());
    a.step();
    a.step();
    Checkpoint cp = a.snapshot();
    StepReport a3 = a.step();
    StepReport a4 = a.step();

    Trainer b(w.cfg, w.manifest, test_backbone());
    b.resume(cp);
    EXPECT_EQ(b.completed_steps(), 2);
    StepReport b3 = b.step();
    StepReport b4 = b.step();
    expect_reports_equal(a3, b3);
    expect_reports_equal(a4, b4);
}

TEST(Trainer, ResumeRequiresTheSameConfigurationUpToStepBudget) {
    ToyWorld w("trainer_resume_reject");
    Trainer a(w.cfg, w.manifest, test_backbone());
    a.step();
    Checkpoint cp = a.snapshot();

    TrainConfig longer = w.cfg;
    longer.steps = 9; // extending the budget is the one allowed change
    Trainer ok(longer, w.manifest, test_backbone());
    EXPECT_NO_THROW(ok.resume(cp));

    TrainConfig hotter = w.cfg;
    hotter.learning_rate = 5e-4;
    Trainer bad(hotter, w.manifest, test_backbone());
    EXPECT_THROW(bad.resume(cp), ConfigError);
}

TEST(Trainer, RunEmitsCheckpointsAndAParseableStepLog) {
    ToyWorld w("trainer_run");
    w.cfg.steps = 3;
    w.cfg.checkpoint_every = 2;
    Trainer t(w.cfg, w.manifest, test_backbone());

    std::string out = scratch_dir("trainer_run_out");
    std::ostringstream log;
    std::vector<StepReport> reports;
    std::string final_path = t.run(out, &log, &reports);

    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "checkpoint_000002.ckpt"));
    ASSERT_TRUE(std::filesystem::exists(final_path));
    EXPECT_EQ(load_checkpoint(final_path).step, 3);
    ASSERT_EQ(reports.size(), 3u);

    std::istringstream lines(log.str());
    std::string line;
    int64_t expect_step = 1;
    while (std::getline(lines, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("step").get<int64_t>(), expect_step++);
        EXPECT_TRUE(j.contains("l_total"));
        EXPECT_TRUE(j.contains("l_con"));
        EXPECT_TRUE(j.contains("wall_ms"));
    }
    EXPECT_EQ(expect_step, 4);
}

TEST(Trainer, MaskObjectiveVariantRoutesTheLogEntries) {
    ToyWorld w("trainer_model4");
    w.cfg.variant = Variant::kModel4;
    Trainer t(w.cfg, w.manifest, test_backbone());
    StepReport r = t.step();
    EXPECT_TRUE(r.uses_mask_objective);
    EXPECT_TRUE(std::isfinite(r.total));

    nlohmann::json j = r.to_json();
    EXPECT_TRUE(j.contains("l_abl"));
    EXPECT_FALSE(j.contains("l_con"));
    EXPECT_FALSE(j.contains("l_int"));
    EXPECT_DOUBLE_EQ(j.at("l_total").get<double>(),
                     j.at("l_pixel").get<double>() + j.at("l_abl").get<double>());
}

TEST(Trainer, AllNineVariantsProduceDistinctFirstStepLosses) {
    ToyWorld w("trainer_variants");
    std::vector<double> totals;
    for (Variant v : kAllVariants) {
        TrainConfig cfg = w.cfg;
        cfg.variant = v;
        Trainer t(cfg, w.manifest, test_backbone());
        totals.push_back(t.step().total);
        EXPECT_TRUE(std::isfinite(totals.back())) << variant_name(v);
    }
    for (size_t i = 0; i < totals.size(); ++i)
        for (size_t j = i + 1; j < totals.size(); ++j)
            EXPECT_NE(totals[i], totals[j])
                << variant_name(kAllVariants[i]) << " vs " << variant_name(kAllVariants[j]);
}

TEST(Trainer, NonFiniteLossAbortsWithAComponentDump) {
    ToyWorld w("trainer_nan");
    Trainer t(w.cfg, w.manifest, test_backbone());
    t.net().registry().params()[0].second->value[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        t.step();
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("step 1"), std::string::npos);
        EXPECT_NE(msg.find("l_total"), std::string::npos);
    }
}

TEST(Trainer, MissingMasksInTheTrainSplitAreRejected) {
    std::string dir = scratch_dir("trainer_no_masks");
    SyntheticSpec spec;
    spec.count = 4;
    spec.test_count = 1;
    spec.seed = 9;
    DatasetManifest manifest = generate_synthetic_dataset(dir, spec);

    TrainConfig cfg;
    cfg.steps = 1;
    cfg.batch_size = 1;
    cfg.group_n = 1;
    cfg.net.base_channels = 4;
    cfg.patch.crop = 16;
    EXPECT_THROW(Trainer(cfg, manifest, test_backbone()), DataError);
}

TEST(TrainerGradients, MicroNetParameterGradientsMatchFiniteDifferences) {
    NetConfig nc;
    nc.base_channels = 4;
    FusionNet net(nc, 7);
    const Backbone& bb = test_backbone();

    // Check at a generic point: zero-initialized biases combined with all-zero
    // feature columns park ReLU kinks exactly at the evaluation point, where
    // central differences average the two one-sided slopes.
    auto jrng = make_rng(301);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    for (auto& v : net.registry().param_vars())
        for (int64_t i = 0; i < v->value.numel(); ++i) v->value[i] += jitter(jrng);

    int64_t B = 2, P = 32;
    Var vi = constant(random_tensor({B, 1, P, P}, 51, 0.05, 0.95));
    Var ir = constant(random_tensor({B, 1, P, P}, 52, 0.05, 0.95));
    std::vector<MaskPartition> parts;
    for (int64_t i = 0; i < B; ++i)
        parts.push_back(
            decompose_masks(synthetic_mask(P, P, derive_seed(53, "vi", static_cast<uint64_t>(i))),
                            synthetic_mask(P, P, derive_seed(53, "ir", static_cast<uint64_t>(i)))));

    ContrastiveConfig ccfg;
    ccfg.group_size = 1;
    LossWeights w;
    auto build = [&]() {
        Var fused = net.fuse(vi, ir, true);
        ContrastiveSampleSet samples = build_sample_set(fused, vi, ir, parts, 1);
        return total_loss(fused, vi, ir, samples, ccfg, bb, w).total;
    };
    occo_test::check_gradients(build, net.registry().param_vars(),
                               {.h = 1e-5,
                                .rtol = 1e-3,
                                .atol = 1e-8,
                                .max_elems_per_leaf = 1,
                                .sample_seed = 54});
}
