#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "occo/nn.hpp"
#include "occo/ops.hpp"
#include "occo/rng.hpp"

namespace occo {

/// Architecture knobs. Two nets are checkpoint-compatible only when their
/// configs compare equal.
struct NetConfig {
    static constexpr int64_t kLevels = 4;

    int64_t base_channels = 16;
    /// K/V source features are average-pooled by this factor before the
    /// attention products to bound the (HW)^2 cost; queries stay full-res.
    int64_t attention_token_downsample = 1;
    /// Hidden width of the attention MLPs is max(1, C / mlp_hidden_divisor).
    int64_t mlp_hidden_divisor = 2;

    bool ablate_channel_attention = false;
    bool ablate_cross_attention = false;
    bool ablate_spatial_attention = false;

    bool operator==(const NetConfig&) const = default;

    void validate() const {
        OCCO_CHECK_CFG(base_channels >= 4, "base_channels must be >= 4, got ", base_channels);
        OCCO_CHECK_CFG(attention_token_downsample >= 1, "attention_token_downsample must be >= 1");
        OCCO_CHECK_CFG(mlp_hidden_divisor >= 1, "mlp_hidden_divisor must be >= 1");
    }

    int64_t channels_at(int level) const { return base_channels << (level - 1); }
    int64_t mlp_hidden(int64_t c) const { return std::max<int64_t>(1, c / mlp_hidden_divisor); }
};

/// One pyramid level of both modalities.
struct LevelFeatures {
    Var vi, ir;
};

/// Everything the fusion block computes on the way to phi_f, kept around so
/// callers can assert normalization and range contracts.
struct FifbIntermediates {
    Var cw_vi, cw_ir;                               // channel weights (B,C)
    Var rho_vi, rho_ir;                             // channel-enhanced features
    std::vector<Var> attn_vi_to_ir, attn_ir_to_vi;  // per batch item, rows sum to 1
    Var cross_vi, cross_ir;                         // cross-enhanced features
    Var spatial_map_vi, spatial_map_ir;             // (B,1,H,W), sums to 1 over H*W
    Var up_vi, up_ir;                               // spatially-enhanced features
    Var embedded;                                   // concatenated streams (B,4C,H,W)
    Var fused;                                      // (B,C,H,W)
};

namespace detail_net {

/// 3x3 conv + batch norm + relu.
struct ConvUnit {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;

    ConvUnit() = default;
    ConvUnit(nn::ParamRegistry& reg, const std::string& name, int64_t cin, int64_t cout,
             std::mt19937_64& rng)
        : conv(reg, name + ".conv", cin, cout, 3, 1, 1, rng), bn(reg, name + ".bn", cout) {}

    Var operator()(const Var& x, bool training) { return ops::relu(bn(conv(x), training)); }
};

}  // namespace detail_net

/// Interaction block for one pyramid level: channel reweighting across both
/// modalities, bidirectional cross attention, per-modality spatial gating,
/// then a bottleneck that folds the four streams back to C channels.
class FusionBlock {
public:
    FusionBlock() = default;

    FusionBlock(nn::ParamRegistry& reg, const std::string& name, const NetConfig& cfg,
                int64_t channels, std::mt19937_64& rng)
        : cfg_(cfg), c_(channels) {
        int64_t hidden = cfg.mlp_hidden(channels);
        mlp1_ = nn::Linear(reg, name + ".cw.fc1", 4 * channels, hidden, rng);
        mlp2_ = nn::Linear(reg, name + ".cw.fc2", hidden, 2 * channels, rng);
        q_vi_ = nn::Linear(reg, name + ".attn.q_vi", channels, channels, rng, false);
        k_ir_ = nn::Linear(reg, name + ".attn.k_ir", channels, channels, rng, false);
        v_ir_ = nn::Linear(reg, name + ".attn.v_ir", channels, channels, rng, false);
        q_ir_ = nn::Linear(reg, name + ".attn.q_ir", channels, channels, rng, false);
        k_vi_ = nn::Linear(reg, name + ".attn.k_vi", channels, channels, rng, false);
        v_vi_ = nn::Linear(reg, name + ".attn.v_vi", channels, channels, rng, false);
        sa_vi_1_ = nn::Conv2d(reg, name + ".sa_vi.fc1", channels, hidden, 1, 1, 0, rng);
        sa_vi_2_ = nn::Conv2d(reg, name + ".sa_vi.fc2", hidden, 1, 1, 1, 0, rng);
        sa_ir_1_ = nn::Conv2d(reg, name + ".sa_ir.fc1", channels, hidden, 1, 1, 0, rng);
        sa_ir_2_ = nn::Conv2d(reg, name + ".sa_ir.fc2", hidden, 1, 1, 1, 0, rng);
        bn_ir_ = nn::BatchNorm2d(reg, name + ".embed_bn_ir", 2 * channels);
        bn_vi_ = nn::BatchNorm2d(reg, name + ".embed_bn_vi", 2 * channels);
        squeeze_ = nn::Conv2d(reg, name + ".mix.squeeze", 4 * channels, channels, 1, 1, 0, rng);
        dw_ = nn::DepthwiseConv2d(reg, name + ".mix.dw", channels, 3, rng, 1, 1);
        expand_ = nn::Conv2d(reg, name + ".mix.out", channels, channels, 1, 1, 0, rng);
        shortcut_ = nn::Conv2d(reg, name + ".mix.shortcut", 4 * channels, channels, 1, 1, 0, rng);
        bn_f_ = nn::BatchNorm2d(reg, name + ".mix.bn", channels);
    }

    /// Pooled descriptors of both modalities -> two-layer MLP -> sigmoid,
    /// split vi-first, applied channel-wise.
    std::pair<Var, Var> channel_attention(const Var& phi_vi, const Var& phi_ir,
                                          FifbIntermediates* t = nullptr) const {
        Var desc = ops::concat({ops::global_max_pool(phi_vi), ops::global_avg_pool(phi_vi),
                                ops::global_max_pool(phi_ir), ops::global_avg_pool(phi_ir)},
                               1);
        Var cw = ops::sigmoid(mlp2_(ops::relu(mlp1_(desc))));
        Var cw_vi = ops::slice(cw, 1, 0, c_);
        Var cw_ir = ops::slice(cw, 1, c_, c_);
        if (t) {
            t->cw_vi = cw_vi;
            t->cw_ir = cw_ir;
        }
        return {ops::scale_channels(phi_vi, cw_vi), ops::scale_channels(phi_ir, cw_ir)};
    }

    /// Bidirectional token attention between the channel-enhanced features.
    /// Queries from one modality attend over keys/values of the other; the
    /// result keeps the query grid, so output shapes match the inputs.
    std::pair<Var, Var> cross_attention(const Var& rho_vi, const Var& rho_ir,
                                        FifbIntermediates* t = nullptr) const {
        int64_t B = rho_vi->value.size(0);
        int64_t H = rho_vi->value.size(2), W = rho_vi->value.size(3);
        int64_t d = cfg_.attention_token_downsample;
        Var kv_vi = rho_vi, kv_ir = rho_ir;
        if (d > 1 && H >= d && W >= d) {
            kv_vi = ops::avgpool2d(rho_vi, d, d);
            kv_ir = ops::avgpool2d(rho_ir, d, d);
        }
        std::vector<Var> out_vi, out_ir;
        out_vi.reserve(B);
        out_ir.reserve(B);
        for (int64_t b = 0; b < B; ++b) {
            Var tq_vi = tokens(rho_vi, b);
            Var tq_ir = tokens(rho_ir, b);
            Var tk_vi = tokens(kv_vi, b);
            Var tk_ir = tokens(kv_ir, b);

            Var attn_vi_ir = ops::softmax_rows(
                ops::matmul(q_vi_(tq_vi), ops::transpose2d(k_ir_(tk_ir))));
            Var cross_ir_b = ops::matmul(attn_vi_ir, v_ir_(tk_ir));

            Var attn_ir_vi = ops::softmax_rows(
                ops::matmul(q_ir_(tq_ir), ops::transpose2d(k_vi_(tk_vi))));
            Var cross_vi_b = ops::matmul(attn_ir_vi, v_vi_(tk_vi));

            if (t) {
                t->attn_vi_to_ir.push_back(attn_vi_ir);
                t->attn_ir_to_vi.push_back(attn_ir_vi);
            }
            out_ir.push_back(to_map(cross_ir_b, H, W));
            out_vi.push_back(to_map(cross_vi_b, H, W));
        }
        Var cross_vi = B == 1 ? out_vi[0] : ops::concat(out_vi, 0);
        Var cross_ir = B == 1 ? out_ir[0] : ops::concat(out_ir, 0);
        return {cross_vi, cross_ir};
    }

    /// Single-channel spatial gate, softmax-normalized over positions.
    Var spatial_enhancement(const Var& phi, bool is_ir, Var* map_out = nullptr) const {
        const nn::Conv2d& c1 = is_ir ? sa_ir_1_ : sa_vi_1_;
        const nn::Conv2d& c2 = is_ir ? sa_ir_2_ : sa_vi_2_;
        int64_t B = phi->value.size(0), H = phi->value.size(2), W = phi->value.size(3);
        Var a = c2(ops::relu(c1(phi)));
        Var m = ops::reshape(ops::softmax_rows(ops::reshape(a, {B, H * W})), {B, 1, H, W});
        if (map_out) *map_out = m;
        return ops::scale_spatial(phi, m);
    }

    /// Residual embedding of both enhanced streams followed by the
    /// depth-wise bottleneck that restores C channels.
    Var merge(const Var& phi_vi, const Var& phi_ir, const Var& cross_vi, const Var& cross_ir,
              const Var& up_vi, const Var& up_ir, bool training,
              FifbIntermediates* t = nullptr) {
        Var stream_ir = bn_ir_(
            ops::concat({ops::add(phi_ir, cross_ir), ops::add(phi_ir, up_ir)}, 1), training);
        Var stream_vi = bn_vi_(
            ops::concat({ops::add(phi_vi, cross_vi), ops::add(phi_vi, up_vi)}, 1), training);
        Var vf = ops::concat({stream_ir, stream_vi}, 1);
        Var mixed = expand_(ops::relu(dw_(squeeze_(vf))));
        Var fused = bn_f_(ops::add(mixed, shortcut_(vf)), training);
        if (t) {
            t->embedded = vf;
            t->fused = fused;
        }
        return fused;
    }

    Var operator()(const LevelFeatures& lv, bool training, FifbIntermediates* t = nullptr) {
        OCCO_CHECK(lv.vi->value.ndim() == 4 && lv.vi->value.same_shape(lv.ir->value),
                   "fusion block expects matching (B,C,H,W) features");
        OCCO_CHECK(lv.vi->value.size(1) == c_, "fusion block built for ", c_, " channels, got ",
                   lv.vi->value.size(1));
        Var rho_vi, rho_ir;
        if (cfg_.ablate_channel_attention) {
            rho_vi = lv.vi;
            rho_ir = lv.ir;
        } else {
            std::tie(rho_vi, rho_ir) = channel_attention(lv.vi, lv.ir, t);
        }
        if (t) {
            t->rho_vi = rho_vi;
            t->rho_ir = rho_ir;
        }

        Var cross_vi, cross_ir;
        if (cfg_.ablate_cross_attention) {
            cross_vi = rho_vi;
            cross_ir = rho_ir;
        } else {
            std::tie(cross_vi, cross_ir) = cross_attention(rho_vi, rho_ir, t);
        }
        if (t) {
            t->cross_vi = cross_vi;
            t->cross_ir = cross_ir;
        }

        Var up_vi, up_ir;
        if (cfg_.ablate_spatial_attention) {
            up_vi = lv.vi;
            up_ir = lv.ir;
        } else {
            up_vi = spatial_enhancement(lv.vi, false, t ? &t->spatial_map_vi : nullptr);
            up_ir = spatial_enhancement(lv.ir, true, t ? &t->spatial_map_ir : nullptr);
        }
        if (t) {
            t->up_vi = up_vi;
            t->up_ir = up_ir;
        }
        return merge(lv.vi, lv.ir, cross_vi, cross_ir, up_vi, up_ir, training, t);
    }

private:
    /// (B,C,H,W) item b -> (HW, C) token matrix.
    static Var tokens(const Var& x, int64_t b) {
        int64_t C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
        return ops::transpose2d(ops::reshape(ops::slice(x, 0, b, 1), {C, H * W}));
    }

    /// (HW, C) tokens -> (1,C,H,W) map.
    static Var to_map(const Var& tok, int64_t H, int64_t W) {
        int64_t C = tok->value.size(1);
        return ops::reshape(ops::transpose2d(tok), {1, C, H, W});
    }

    NetConfig cfg_;
    int64_t c_ = 0;
    nn::Linear mlp1_, mlp2_;
    nn::Linear q_vi_, k_ir_, v_ir_, q_ir_, k_vi_, v_vi_;
    nn::Conv2d sa_vi_1_, sa_vi_2_, sa_ir_1_, sa_ir_2_;
    nn::BatchNorm2d bn_ir_, bn_vi_;
    nn::Conv2d squeeze_, expand_, shortcut_;
    nn::DepthwiseConv2d dw_;
    nn::BatchNorm2d bn_f_;
};

/// Dual-encoder fusion network: two four-level encoders with unshared
/// weights, one interaction block per level, and an upsampling decoder with
/// skip concatenations.
class FusionNet {
public:
    FusionNet(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        auto rng = make_rng(derive_seed(seed, "fusion-net"));
        build_encoder("enc_vi", enc_vi_, rng);
        build_encoder("enc_ir", enc_ir_, rng);
        for (int lvl = 1; lvl <= NetConfig::kLevels; ++lvl)
            blocks_.emplace_back(reg_, "fifb" + std::to_string(lvl), cfg_, cfg_.channels_at(lvl),
                                 rng);
        int64_t b = cfg_.base_channels;
        dec_.emplace_back(reg_, "dec1.u1", 8 * b, 4 * b, rng);
        dec_.emplace_back(reg_, "dec1.u2", 4 * b, 4 * b, rng);
        dec_.emplace_back(reg_, "dec2.u1", 8 * b, 2 * b, rng);
        dec_.emplace_back(reg_, "dec2.u2", 2 * b, 2 * b, rng);
        dec_.emplace_back(reg_, "dec3.u1", 4 * b, b, rng);
        dec_.emplace_back(reg_, "dec3.u2", b, b, rng);
        head_ = nn::Conv2d(reg_, "head", 2 * b, 1, 1, 1, 0, rng);
    }

    const NetConfig& config() const { return cfg_; }
    nn::ParamRegistry& registry() { return reg_; }
    const nn::ParamRegistry& registry() const { return reg_; }
    FusionBlock& block(int level) { return blocks_.at(level - 1); }

    /// Both modalities through their encoders; level i is tapped before the
    /// i-th pooling, so shapes follow (C*2^(i-1), H/2^(i-1), W/2^(i-1)).
    std::vector<LevelFeatures> encode(const Var& vi, const Var& ir, bool training) {
        check_input(vi, "visible");
        check_input(ir, "infrared");
        OCCO_CHECK(vi->value.same_shape(ir->value), "modalities must share shape, got ",
                   shape_str(vi->value.shape()), " vs ", shape_str(ir->value.shape()));
        std::vector<LevelFeatures> out(NetConfig::kLevels);
        Var x_vi = vi, x_ir = ir;
        for (int lvl = 0; lvl < NetConfig::kLevels; ++lvl) {
            x_vi = enc_vi_[2 * lvl](x_vi, training);
            x_vi = enc_vi_[2 * lvl + 1](x_vi, training);
            x_ir = enc_ir_[2 * lvl](x_ir, training);
            x_ir = enc_ir_[2 * lvl + 1](x_ir, training);
            out[lvl] = {x_vi, x_ir};
            if (lvl + 1 < NetConfig::kLevels) {
                x_vi = ops::maxpool2d(x_vi, 2, 2);
                x_ir = ops::maxpool2d(x_ir, 2, 2);
            }
        }
        return out;
    }

    Var fuse_level(int level, const LevelFeatures& lv, bool training,
                   FifbIntermediates* t = nullptr) {
        return blocks_.at(level - 1)(lv, training, t);
    }

    /// Deepest level up through three upsampling blocks with skip
    /// concatenations, then a 1x1 head squashed to (0,1).
    Var decode(const std::vector<Var>& fused, bool training) {
        OCCO_CHECK(fused.size() == NetConfig::kLevels, "decoder expects ", NetConfig::kLevels,
                   " levels, got ", fused.size());
        for (int lvl = 1; lvl <= NetConfig::kLevels; ++lvl) {
            const Tensor& v = fused[lvl - 1]->value;
            OCCO_CHECK(v.ndim() == 4 && v.size(1) == cfg_.channels_at(lvl),
                       "level ", lvl, " must have ", cfg_.channels_at(lvl), " channels, got ",
                       shape_str(v.shape()));
        }
        Var x = fused[3];
        for (int step = 0; step < 3; ++step) {
            x = dec_[2 * step](x, training);
            x = dec_[2 * step + 1](x, training);
            x = ops::upsample_nearest2x(x);
            x = ops::concat({x, fused[2 - step]}, 1);
        }
        return ops::sigmoid(head_(x));
    }

    Var fuse(const Var& vi, const Var& ir, bool training,
             std::vector<FifbIntermediates>* traces = nullptr) {
        auto levels = encode(vi, ir, training);
        std::vector<Var> fused(NetConfig::kLevels);
        for (int lvl = 1; lvl <= NetConfig::kLevels; ++lvl) {
            FifbIntermediates* t = nullptr;
            if (traces) {
                traces->emplace_back();
                t = &traces->back();
            }
            fused[lvl - 1] = fuse_level(lvl, levels[lvl - 1], training, t);
        }
        return decode(fused, training);
    }

private:
    void build_encoder(const std::string& name, std::vector<detail_net::ConvUnit>& units,
                       std::mt19937_64& rng) {
        int64_t cin = 1;
        for (int lvl = 1; lvl <= NetConfig::kLevels; ++lvl) {
            int64_t cout = cfg_.channels_at(lvl);
            std::string base = name + ".b" + std::to_string(lvl);
            units.emplace_back(reg_, base + ".u1", cin, cout, rng);
            units.emplace_back(reg_, base + ".u2", cout, cout, rng);
            cin = cout;
        }
    }

    void check_input(const Var& x, const char* which) const {
        OCCO_CHECK(x->value.ndim() == 4 && x->value.size(1) == 1, which,
                   " input must be (B,1,H,W), got ", shape_str(x->value.shape()));
        int64_t H = x->value.size(2), W = x->value.size(3);
        OCCO_CHECK(H % 16 == 0 && W % 16 == 0, which, " dims must be divisible by 16, got ", H,
                   "x", W);
        OCCO_CHECK(H > 0 && W > 0 && x->value.size(0) > 0, which, " input is empty");
    }

    NetConfig cfg_;
    nn::ParamRegistry reg_;
    std::vector<detail_net::ConvUnit> enc_vi_, enc_ir_;
    std::vector<FusionBlock> blocks_;
    std::vector<detail_net::ConvUnit> dec_;
    nn::Conv2d head_;
};

}  // namespace occo
