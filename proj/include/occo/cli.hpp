#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "occo/checkpoint.hpp"
#include "occo/data_pipeline.hpp"
#include "occo/mask_providers.hpp"
#include "occo/metrics.hpp"
#include "occo/trainer.hpp"

namespace occo::cli {

namespace fs = std::filesystem;

/// Drops the final extension and a trailing ".vi"/".ir" modality tag, so
/// "pairs/scene_004.vi.png" and "pairs/scene_004.ir.png" share one stem.
inline std::string record_stem(const std::string& path) {
    fs::path p(path);
    std::string s = (p.parent_path() / p.stem()).generic_string();
    for (const std::string tag : {".vi", ".ir"})
        if (s.size() > tag.size() && s.compare(s.size() - tag.size(), tag.size(), tag) == 0)
            return s.substr(0, s.size() - tag.size());
    return s;
}

inline std::string fused_filename(const ManifestRecord& rec) {
    return fs::path(record_stem(rec.vi_path)).filename().string() + ".fused.png";
}

/// Sidecar path for an artifact PNG: same name with a .json suffix.
inline std::string sidecar_path(const std::string& png_path) {
    return fs::path(png_path).replace_extension(".json").string();
}

inline void require_flag(bool present, const char* what) {
    OCCO_CHECK_CFG(present, what, " is required");
}

// ---------------------------------------------------------------------------
// gen-masks

struct GenMasksOptions {
    std::string manifest_path;
    std::string provider = "synthetic";
    uint64_t seed = 0;
    bool force = false;
    std::string masks_dir;  // file provider: directory holding source mask PNGs
    std::string endpoint;   // external provider
    std::string prompt;     // external provider
};

struct GenMasksSummary {
    int64_t generated = 0;
    int64_t skipped = 0;
    std::vector<std::string> failures;
};

/// Attaches per-modality salient-object masks to every manifest record.
/// Existing mask files are kept unless force is set; failures are reported
/// per record and do not stop the remaining records.
inline GenMasksSummary run_gen_masks(const GenMasksOptions& opt, std::ostream& out = std::cout,
                                     std::ostream& err = std::cerr) {
    require_flag(!opt.manifest_path.empty(), "--manifest");
    MaskProviderSpec::Kind kind = provider_kind_from_name(opt.provider);
    if (kind == MaskProviderSpec::Kind::file)
        require_flag(!opt.masks_dir.empty(), "--masks-dir (file provider)");
    if (kind == MaskProviderSpec::Kind::external_lvm) {
        require_flag(!opt.endpoint.empty(), "--endpoint (external provider)");
        require_flag(!opt.prompt.empty(), "--prompt (external provider)");
    }

    DatasetManifest manifest = DatasetManifest::load(opt.manifest_path);
    GenMasksSummary sum;
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        ManifestRecord& rec = manifest.records[i];
        std::string stem = record_stem(rec.vi_path);
        std::string rel_vi = mask_filename(stem, "vi");
        std::string rel_ir = mask_filename(stem, "ir");
        if (!opt.force && fs::exists(manifest.resolve(rel_vi)) &&
            fs::exists(manifest.resolve(rel_ir))) {
            rec.mask_vi_path = rel_vi;
            rec.mask_ir_path = rel_ir;
            ++sum.skipped;
            continue;
        }
        try {
            for (const auto& [modality, image_path, rel] :
                 {std::tuple{"vi", rec.vi_path, rel_vi}, std::tuple{"ir", rec.ir_path, rel_ir}}) {
                Image img = read_png(manifest.resolve(image_path));
                MaskProviderSpec spec;
                spec.kind = kind;
                spec.seed = derive_seed(opt.seed,
                                        std::string(modality) == "vi" ? "mask-vi" : "mask-ir", i);
                if (kind == MaskProviderSpec::Kind::file)
                    spec.path = (fs::path(opt.masks_dir) / fs::path(rel).filename()).string();
                spec.endpoint = opt.endpoint;
                spec.prompt = opt.prompt;
                int instances = 0;
                BinaryMask m = generate_modal_mask(img, spec, &instances);
                std::string mask_path = manifest.resolve(rel);
                write_mask_png(mask_path, m);
                write_mask_sidecar(sidecar_path(mask_path),
                                   {image_path, opt.prompt, instances, provider_name(kind)});
            }
            rec.mask_vi_path = rel_vi;
            rec.mask_ir_path = rel_ir;
            ++sum.generated;
        } catch (const std::exception& e) {
            std::string msg = "record " + std::to_string(i) + " (" + rec.vi_path +
                              "): " + e.what();
            sum.failures.push_back(msg);
            err << "gen-masks: " << msg << "\n";
        }
    }
    manifest.save(opt.manifest_path);
    out << "masks: generated " << sum.generated << ", skipped " << sum.skipped << ", failed "
        << sum.failures.size() << "\n";
    return sum;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    std::optional<uint64_t> seed;       // overrides the config seed
    std::optional<std::string> variant; // overrides the config variant
    std::string resume;                 // checkpoint to continue from
};

/// Runs the training loop and returns the final checkpoint path. The output
/// directory receives the effective config, a JSON-lines step log, and
/// periodic plus final checkpoints.
inline std::string run_train(const TrainOptions& opt, std::ostream& out = std::cout) {
    require_flag(!opt.config_path.empty(), "--config");
    require_flag(!opt.manifest_path.empty(), "--manifest");
    require_flag(!opt.out_dir.empty(), "--out");

    TrainConfig cfg = load_train_config(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.variant) cfg.variant = variant_from_name(*opt.variant);

    DatasetManifest manifest = DatasetManifest::load(opt.manifest_path);
    TestBackbone bb;
    Trainer trainer(cfg, manifest, bb);
    if (!opt.resume.empty()) trainer.resume(load_checkpoint(opt.resume));

    fs::create_directories(opt.out_dir);
    {
        std::ofstream cj(fs::path(opt.out_dir) / "config.json");
        OCCO_CHECK(cj.good(), "cannot write config copy under ", opt.out_dir);
        cj << train_config_to_json(cfg).dump(2) << "\n";
    }
    std::ofstream log(fs::path(opt.out_dir) / "train_log.jsonl");
    OCCO_CHECK(log.good(), "cannot write train log under ", opt.out_dir);
    std::string final_path = trainer.run(opt.out_dir, &log);
    out << "final checkpoint: " << final_path << "\n";
    return final_path;
}

// ---------------------------------------------------------------------------
// fuse

struct FuseOptions {
    std::string checkpoint_path;
    std::string vi_path, ir_path; // single-pair mode; out names the PNG
    std::string manifest_path;    // manifest mode; out names a directory
    std::string out;
    std::string split = "test";   // manifest mode: "train", "test", or "all"
};

inline int64_t ceil_multiple(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

/// Fuses one luminance pair. Inputs whose dimensions are not multiples of 16
/// are reflect-padded, fused, and cropped back.
inline Tensor fuse_planes(FusionNet& net, const Tensor& vi_y, const Tensor& ir_y) {
    int64_t H = vi_y.size(0), W = vi_y.size(1);
    int64_t Hp = ceil_multiple(H, 16), Wp = ceil_multiple(W, 16);
    Tensor pv = (Hp == H && Wp == W) ? vi_y : reflect_pad_plane(vi_y, Hp - H, Wp - W);
    Tensor pi = (Hp == H && Wp == W) ? ir_y : reflect_pad_plane(ir_y, Hp - H, Wp - W);
    Var vi = constant(pv.reshaped({1, 1, Hp, Wp}));
    Var ir = constant(pi.reshaped({1, 1, Hp, Wp}));
    Tensor fused = net.fuse(vi, ir, /*training=*/false)->value.reshaped({Hp, Wp});
    if (Hp != H || Wp != W) fused = crop_plane(fused, 0, 0, H, W);
    return fused;
}

inline void fuse_record(FusionNet& net, const DatasetManifest& m, const ManifestRecord& rec,
                        const std::string& out_png) {
    LoadedPair p = load_pair(m, rec);
    int64_t H = p.vi_y.size(0), W = p.vi_y.size(1);
    Tensor fy = fuse_planes(net, p.vi_y, p.ir_y);
    write_png(out_png, from_ycbcr(fy, p.cb, p.cr));
    int64_t Hp = ceil_multiple(H, 16), Wp = ceil_multiple(W, 16);
    if (Hp != H || Wp != W) {
        nlohmann::json note{{"height", H},
                            {"width", W},
                            {"padded_height", Hp},
                            {"padded_width", Wp},
                            {"note", "inputs reflect-padded to a multiple of 16 for fusion; "
                                     "output cropped back to the source size"}};
        std::ofstream sj(sidecar_path(out_png));
        OCCO_CHECK(sj.good(), "cannot write fusion note next to ", out_png);
        sj << note.dump(2) << "\n";
    }
}

/// Reconstructs the network from a checkpoint and writes fused RGB PNGs: the
/// fused luminance merged with the visible chroma planes.
inline void run_fuse(const FuseOptions& opt, std::ostream& out = std::cout) {
    require_flag(!opt.checkpoint_path.empty(), "--checkpoint");
    require_flag(!opt.out.empty(), "--out");
    bool single = !opt.vi_path.empty() || !opt.ir_path.empty();
    if (single) {
        OCCO_CHECK_CFG(!opt.vi_path.empty() && !opt.ir_path.empty(),
                       "--vi and --ir must be given together");
        OCCO_CHECK_CFG(opt.manifest_path.empty(), "give either --vi/--ir or --manifest, not both");
    } else {
        require_flag(!opt.manifest_path.empty(), "--manifest (or --vi/--ir)");
    }

    Checkpoint cp = load_checkpoint(opt.checkpoint_path);
    TrainConfig cfg = cp.config.resolved();
    FusionNet net(cfg.net, cfg.seed);
    restore_model(cp, cfg.net, net.registry());

    if (single) {
        DatasetManifest mem;
        mem.records.push_back({opt.vi_path, opt.ir_path});
        fs::path parent = fs::path(opt.out).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        fuse_record(net, mem, mem.records[0], opt.out);
        out << "fused: " << opt.out << "\n";
        return;
    }

    DatasetManifest manifest = DatasetManifest::load(opt.manifest_path);
    std::vector<int64_t> idx = manifest.indices_for_split(opt.split == "all" ? "" : opt.split);
    OCCO_CHECK(!idx.empty(), "manifest has no records in split '", opt.split, "'");
    fs::create_directories(opt.out);
    for (int64_t i : idx) {
        const ManifestRecord& rec = manifest.records[static_cast<size_t>(i)];
        fuse_record(net, manifest, rec, (fs::path(opt.out) / fused_filename(rec)).string());
    }
    out << "fused " << idx.size() << " pairs into " << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string manifest_path;
    std::string fused_dir;
    std::string out_path;       // empty: print to stdout
    std::string split = "test"; // "train", "test", or "all"
};

/// Scores fused images against their sources. Records whose fused image is
/// missing get a flagged row and do not enter the mean.
inline std::string run_eval(const EvalOptions& opt, std::ostream& out = std::cout) {
    require_flag(!opt.manifest_path.empty(), "--manifest");
    require_flag(!opt.fused_dir.empty(), "--fused");

    DatasetManifest manifest = DatasetManifest::load(opt.manifest_path);
    std::vector<int64_t> idx = manifest.indices_for_split(opt.split == "all" ? "" : opt.split);

    auto fmt = [](const std::string& id, const MetricReport& m) {
        char buf[192];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", id.c_str(), m.en, m.sf, m.ag,
                      m.cc);
        return std::string(buf);
    };

    std::string csv = "image_id,en,sf,ag,cc\n";
    MetricReport mean;
    int64_t present = 0;
    for (int64_t i : idx) {
        const ManifestRecord& rec = manifest.records[static_cast<size_t>(i)];
        std::string id = fs::path(record_stem(rec.vi_path)).filename().string();
        std::string fp = (fs::path(opt.fused_dir) / fused_filename(rec)).string();
        if (!fs::exists(fp)) {
            csv += id + ",missing,missing,missing,missing\n";
            continue;
        }
        LoadedPair p = load_pair(manifest, rec);
        Image fimg = read_png(fp);
        OCCO_CHECK(fimg.height() == p.vi_y.size(0) && fimg.width() == p.vi_y.size(1),
                   "fused image ", fp, " is ", fimg.height(), "x", fimg.width(),
                   " but the sources are ", p.vi_y.size(0), "x", p.vi_y.size(1));
        MetricReport r = compute_metrics(to_ycbcr(fimg).y, p.vi_y, p.ir_y);
        csv += fmt(id, r);
        mean.en += r.en;
        mean.sf += r.sf;
        mean.ag += r.ag;
        mean.cc += r.cc;
        ++present;
    }
    if (present > 0) {
        double n = static_cast<double>(present);
        mean.en /= n;
        mean.sf /= n;
        mean.ag /= n;
        mean.cc /= n;
    }
    csv += fmt("mean", mean);

    if (opt.out_path.empty()) {
        out << csv;
    } else {
        fs::path parent = fs::path(opt.out_path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream f(opt.out_path);
        OCCO_CHECK(f.good(), "cannot write metrics csv ", opt.out_path);
        f << csv;
    }
    return csv;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
    std::string config_path;
    std::string manifest_path;
    std::string out_dir;
    std::vector<std::string> variants; // empty: every known variant
    std::optional<uint64_t> seed;
};

struct AblateSummary {
    struct Row {
        std::string variant;
        bool ok = false;
        double first_total = 0.0;
        double final_total = 0.0;
    };
    std::vector<Row> rows;
    std::vector<std::string> failures;
};

/// Trains each requested variant under a shared seed, one subdirectory per
/// variant, and writes a summary CSV. Unknown variant names abort before any
/// run; a failing run is recorded and the remaining variants still execute.
inline AblateSummary run_ablate(const AblateOptions& opt, std::ostream& out = std::cout,
                                std::ostream& err = std::cerr) {
    require_flag(!opt.config_path.empty(), "--config");
    require_flag(!opt.manifest_path.empty(), "--manifest");
    require_flag(!opt.out_dir.empty(), "--out");

    TrainConfig base = load_train_config(opt.config_path);
    if (opt.seed) base.seed = *opt.seed;

    std::vector<Variant> variants;
    if (opt.variants.empty()) {
        variants.assign(kAllVariants.begin(), kAllVariants.end());
    } else {
        for (const std::string& name : opt.variants) {
            Variant v = variant_from_name(name);
            for (Variant seen : variants)
                OCCO_CHECK_CFG(seen != v, "variant '", name, "' given twice");
            variants.push_back(v);
        }
    }

    DatasetManifest manifest = DatasetManifest::load(opt.manifest_path);
    TestBackbone bb;
    fs::create_directories(opt.out_dir);

    AblateSummary sum;
    for (Variant v : variants) {
        TrainConfig cfg = base;
        cfg.variant = v;
        AblateSummary::Row row;
        row.variant = variant_name(v);
        try {
            Trainer trainer(cfg, manifest, bb);
            std::string vdir = (fs::path(opt.out_dir) / row.variant).string();
            fs::create_directories(vdir);
            std::ofstream log(fs::path(vdir) / "train_log.jsonl");
            OCCO_CHECK(log.good(), "cannot write train log under ", vdir);
            std::vector<StepReport> reports;
            trainer.run(vdir, &log, &reports);
            row.ok = true;
            row.first_total = reports.front().total;
            row.final_total = reports.back().total;
        } catch (const std::exception& e) {
            sum.failures.push_back(row.variant + ": " + e.what());
            err << "ablate: variant " << row.variant << " failed: " << e.what() << "\n";
        }
        sum.rows.push_back(row);
    }

    std::string csv = "variant,status,first_l_total,final_l_total\n";
    for (const AblateSummary::Row& r : sum.rows) {
        if (r.ok) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,ok,%.9f,%.9f\n", r.variant.c_str(), r.first_total,
                          r.final_total);
            csv += buf;
        } else {
            csv += r.variant + ",failed,,\n";
        }
    }
    std::string csv_path = (fs::path(opt.out_dir) / "summary.csv").string();
    std::ofstream f(csv_path);
    OCCO_CHECK(f.good(), "cannot write ablation summary ", csv_path);
    f << csv;
    out << csv;
    return sum;
}

} // namespace occo::cli
