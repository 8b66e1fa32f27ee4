#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "occo/backbone.hpp"
#include "occo/checkpoint.hpp"
#include "occo/config.hpp"
#include "occo/data_pipeline.hpp"

namespace occo {

/// Scalar view of one optimization step. The masked-intensity variant logs
/// its own objective and omits the contrastive and intensity entries.
struct StepReport {
    int64_t step = 0;
    double total = 0.0;
    double pixel = 0.0;
    double ssim = 0.0;
    double intensity = 0.0;
    double texture = 0.0;
    double con = 0.0;
    double con_unique = 0.0;
    double con_share = 0.0;
    double con_bg = 0.0;
    double mask_objective = 0.0;
    bool uses_mask_objective = false;
    double wall_ms = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j = {
            {"step", step},       {"l_total", total}, {"l_pixel", pixel},
            {"l_ssim", ssim},     {"l_tex", texture}, {"wall_ms", wall_ms},
        };
        if (uses_mask_objective) {
            j["l_abl"] = mask_objective;
        } else {
            j["l_int"] = intensity;
            j["l_con"] = con;
            j["l_con_unique"] = con_unique;
            j["l_con_share"] = con_share;
            j["l_con_bg"] = con_bg;
        }
        return j;
    }
};

/// One training record held in memory: registered luminance planes and the
/// four-way mask partition.
struct TrainItem {
    Tensor vi, ir;
    MaskPartition part;
};

/// Deterministic training loop. All randomness is re-derived per step from
/// the config seed, so a (checkpoint, step) pair resumes bit-compatibly.
class Trainer {
public:
    Trainer(const TrainConfig& raw, const DatasetManifest& manifest, const Backbone& bb)
        : raw_(raw),
          cfg_(raw.resolved()),
          bb_(bb),
          net_(cfg_.net, cfg_.seed),
          adam_(net_.registry().param_vars(), cfg_.learning_rate, cfg_.beta1, cfg_.beta2,
                cfg_.adam_epsilon) {
        load_items(manifest);
        plan_ = make_batches(manifest, cfg_.batch_size, cfg_.group_n, cfg_.seed, "train");
        OCCO_CHECK(!plan_.batches.empty(), "train split holds ", items_.size(),
                   " records, not enough for one batch of ", cfg_.batch_size);
    }

    const TrainConfig& config() const { return cfg_; }
    FusionNet& net() { return net_; }
    int64_t completed_steps() const { return step_; }

    /// Runs one optimization step and reports its loss components.
    StepReport step() {
        auto t0 = std::chrono::steady_clock::now();
        int64_t s = step_ + 1;
        const auto& batch = plan_.batches[static_cast<size_t>((s - 1) % plan_.batches.size())];
        auto rng = make_rng(derive_seed(cfg_.seed, "train-step", static_cast<uint64_t>(s)));

        int64_t B = cfg_.batch_size, P = cfg_.patch.crop;
        Tensor vi_b({B, 1, P, P}), ir_b({B, 1, P, P});
        std::vector<MaskPartition> parts;
        parts.reserve(static_cast<size_t>(B));
        for (int64_t i = 0; i < B; ++i) {
            const TrainItem& item = items_.at(batch[static_cast<size_t>(i)]);
            TrainPatch p = sample_patch(item.vi, item.ir, item.part, cfg_.patch, rng);
            std::copy(p.vi.ptr(), p.vi.ptr() + P * P, vi_b.ptr() + i * P * P);
            std::copy(p.ir.ptr(), p.ir.ptr() + P * P, ir_b.ptr() + i * P * P);
            parts.push_back(std::move(p.partition));
        }
        Var vi = constant(std::move(vi_b));
        Var ir = constant(std::move(ir_b));
        Var fused = net_.fuse(vi, ir, /*training=*/true);

        StepReport r;
        r.step = s;
        Var objective;
        if (cfg_.uses_mask_objective()) {
            r.uses_mask_objective = true;
            Var l_ssim = ssim_loss(fused, vi, ir);
            Var l_tex = texture_loss(fused, vi, ir);
            Var l_abl = ablation_mask_loss(fused, vi, ir, parts, cfg_.mask_objective);
            Var l_pixel = ops::add(l_ssim, ops::mul_scalar(l_tex, cfg_.loss.lambda_tex));
            objective = ops::add(l_pixel, l_abl);
            r.ssim = l_ssim->value.item();
            r.texture = l_tex->value.item();
            r.mask_objective = l_abl->value.item();
            r.pixel = l_pixel->value.item();
            r.total = objective->value.item();
        } else {
            ContrastiveSampleSet samples = build_sample_set(fused, vi, ir, parts, cfg_.group_n);
            LossReport lr = total_loss(fused, vi, ir, samples, cfg_.contrastive, bb_, cfg_.loss);
            objective = lr.total;
            r.total = lr.total->value.item();
            r.pixel = lr.pixel->value.item();
            r.ssim = lr.ssim->value.item();
            r.intensity = lr.intensity->value.item();
            r.texture = lr.texture->value.item();
            r.con = lr.con->value.item();
            r.con_unique = lr.con_unique->value.item();
            r.con_share = lr.con_share->value.item();
            r.con_bg = lr.con_bg->value.item();
        }
        check_finite(r);

        net_.registry().zero_grad();
        backward(objective);
        if (cfg_.grad_clip > 0.0) clip_gradients(cfg_.grad_clip);
        adam_.step();
        ++step_;

        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
        return r;
    }

    /// Full training state for persistence.
    Checkpoint snapshot() {
        Checkpoint cp;
        cp.config = raw_;
        cp.step = step_;
        cp.adam_step = adam_.step_count();
        cp.params = detail_ckpt::snapshot(net_.registry().params());
        cp.buffers = detail_ckpt::snapshot(net_.registry().buffers());
        const auto& params = net_.registry().params();
        for (size_t k = 0; k < params.size(); ++k) {
            cp.adam_m.emplace_back(params[k].first, adam_.m()[k].clone());
            cp.adam_v.emplace_back(params[k].first, adam_.v()[k].clone());
        }
        return cp;
    }

    /// Continues from a saved state. Everything but the step budget must
    /// match the requested configuration; the budget may be extended.
    void resume(const Checkpoint& cp) {
        nlohmann::json want = train_config_to_json(raw_);
        nlohmann::json have = train_config_to_json(cp.config);
        want.erase("steps");
        have.erase("steps");
        OCCO_CHECK_CFG(want == have,
                       "checkpoint was trained with a different configuration; only the step "
                       "budget may change on resume");
        restore_model(cp, cfg_.net, net_.registry());
        restore_optimizer(cp, net_.registry(), adam_);
        step_ = cp.step;
    }

    /// Trains to the configured step budget, streaming JSON-lines step
    /// records and checkpointing on the configured cadence. Returns the
    /// final checkpoint path.
    std::string run(const std::string& out_dir, std::ostream* log = nullptr,
                    std::vector<StepReport>* reports = nullptr) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        std::string final_path = (fs::path(out_dir) / "checkpoint_final.ckpt").string();
        while (step_ < cfg_.steps) {
            StepReport r = step();
            if (log) (*log) << r.to_json().dump() << "\n";
            if (reports) reports->push_back(r);
            if (r.step % cfg_.checkpoint_every == 0 && r.step != cfg_.steps) {
                char name[32];
                std::snprintf(name, sizeof(name), "checkpoint_%06lld.ckpt",
                              static_cast<long long>(r.step));
                save_checkpoint((fs::path(out_dir) / name).string(), snapshot());
            }
        }
        save_checkpoint(final_path, snapshot());
        return final_path;
    }

private:
    void load_items(const DatasetManifest& manifest) {
        for (int64_t idx : manifest.indices_for_split("train")) {
            const ManifestRecord& rec = manifest.records[static_cast<size_t>(idx)];
            OCCO_CHECK(!rec.mask_vi_path.empty() && !rec.mask_ir_path.empty(), "record ",
                       rec.vi_path, " has no mask paths; generate masks first");
            LoadedPair pair = load_pair(manifest, rec);
            BinaryMask mvi = read_mask_png(manifest.resolve(rec.mask_vi_path));
            BinaryMask mir = read_mask_png(manifest.resolve(rec.mask_ir_path));
            OCCO_CHECK(mvi.m.same_shape(pair.vi_y), "mask ", rec.mask_vi_path, " size ",
                       shape_str(mvi.m.shape()), " does not match image ",
                       shape_str(pair.vi_y.shape()));
            items_.emplace(idx,
                           TrainItem{pair.vi_y, pair.ir_y, decompose_masks(mvi, mir)});
        }
        OCCO_CHECK(!items_.empty(), "manifest has no train records");
    }

    void check_finite(const StepReport& r) const {
        if (std::isfinite(r.total)) return;
        nlohmann::json dump = r.to_json();
        dump.erase("wall_ms");
        throw NumericError("non-finite loss at step " + std::to_string(r.step) + ": " +
                           dump.dump());
    }

    void clip_gradients(double max_norm) {
        double sq = 0.0;
        for (const auto& [name, v] : net_.registry().params()) {
            if (!v->grad.defined()) continue;
            for (int64_t i = 0; i < v->grad.numel(); ++i) sq += v->grad[i] * v->grad[i];
        }
        double norm = std::sqrt(sq);
        if (norm <= max_norm) return;
        double scale = max_norm / norm;
        for (const auto& [name, v] : net_.registry().params()) {
            if (!v->grad.defined()) continue;
            for (int64_t i = 0; i < v->grad.numel(); ++i) v->grad[i] *= scale;
        }
    }

    TrainConfig raw_;
    TrainConfig cfg_;
    const Backbone& bb_;
    FusionNet net_;
    nn::Adam adam_;
    BatchPlan plan_;
    std::map<int64_t, TrainItem> items_;
    int64_t step_ = 0;
};

} // namespace occo
