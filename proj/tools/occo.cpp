#include <CLI11.hpp>

#include <iostream>

#include "occo/cli.hpp"

using namespace occo;

int main(int argc, char** argv) {
    CLI::App app{"Infrared/visible image fusion toolkit"};
    app.require_subcommand(1);

    cli::GenMasksOptions gm;
    CLI::App* gen = app.add_subcommand(
        "gen-masks", "Attach per-modality salient-object masks to a dataset manifest");
    gen->add_option("--manifest", gm.manifest_path, "Dataset manifest (JSON lines)")->required();
    gen->add_option("--provider", gm.provider, "Mask provider")
        ->check(CLI::IsMember({"external", "file", "synthetic"}));
    gen->add_option("--seed", gm.seed, "Root random seed");
    gen->add_flag("--force", gm.force, "Regenerate masks even when files already exist");
    gen->add_option("--masks-dir", gm.masks_dir,
                    "Directory holding precomputed mask PNGs (file provider)");
    gen->add_option("--endpoint", gm.endpoint, "Segmentation service URL (external provider)");
    gen->add_option("--prompt", gm.prompt, "Detection text prompt (external provider)");

    cli::TrainOptions tr;
    CLI::App* train = app.add_subcommand("train", "Train the fusion network");
    train->add_option("--config", tr.config_path, "Training config (JSON)")->required();
    train->add_option("--manifest", tr.manifest_path, "Dataset manifest")->required();
    train->add_option("--out", tr.out_dir, "Output directory for log and checkpoints")
        ->required();
    train->add_option("--seed", tr.seed, "Override the config seed");
    train->add_option("--variant", tr.variant, "Override the config variant");
    train->add_option("--resume", tr.resume, "Checkpoint to continue from");

    cli::FuseOptions fu;
    CLI::App* fuse = app.add_subcommand("fuse", "Fuse image pairs with a trained checkpoint");
    fuse->add_option("--checkpoint", fu.checkpoint_path, "Trained checkpoint")->required();
    fuse->add_option("--vi", fu.vi_path, "Visible image (single-pair mode)");
    fuse->add_option("--ir", fu.ir_path, "Infrared image (single-pair mode)");
    fuse->add_option("--manifest", fu.manifest_path, "Dataset manifest (batch mode)");
    fuse->add_option("--out", fu.out, "Output PNG (single-pair) or directory (batch)")
        ->required();
    fuse->add_option("--split", fu.split, "Manifest split to fuse: train, test, or all");

    cli::EvalOptions ev;
    CLI::App* eval = app.add_subcommand("eval", "Score fused images against their sources");
    eval->add_option("--manifest", ev.manifest_path, "Dataset manifest")->required();
    eval->add_option("--fused", ev.fused_dir, "Directory of fused PNGs")->required();
    eval->add_option("--out", ev.out_path, "Metrics CSV path (default: stdout)");
    eval->add_option("--split", ev.split, "Manifest split to score: train, test, or all");

    cli::AblateOptions ab;
    CLI::App* ablate = app.add_subcommand("ablate", "Train every variant under a shared seed");
    ablate->add_option("--config", ab.config_path, "Training config (JSON)")->required();
    ablate->add_option("--manifest", ab.manifest_path, "Dataset manifest")->required();
    ablate->add_option("--out", ab.out_dir, "Output directory, one subdirectory per variant")
        ->required();
    ablate->add_option("--variant", ab.variants, "Variants to run (default: all)")
        ->delimiter(',');
    ablate->add_option("--seed", ab.seed, "Override the config seed");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            if (!cli::run_gen_masks(gm).failures.empty()) return 1;
        } else if (train->parsed()) {
            cli::run_train(tr);
        } else if (fuse->parsed()) {
            cli::run_fuse(fu);
        } else if (eval->parsed()) {
            cli::run_eval(ev);
        } else if (ablate->parsed()) {
            if (!cli::run_ablate(ab).failures.empty()) return 1;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
