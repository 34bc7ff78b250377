// Command-line surface: synth, train, infer, eval, ablate, gradcheck, dump.
// Exit codes: 0 ok, 1 usage, 2 contract/shape, 3 I/O.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pahs/ablate.hpp"
#include "pahs/checkpoint.hpp"
#include "pahs/frames.hpp"
#include "pahs/gradcheck.hpp"
#include "pahs/metrics.hpp"
#include "pahs/sequence.hpp"
#include "pahs/synth.hpp"
#include "pahs/threads.hpp"
#include "pahs/train.hpp"

using namespace pahs;

namespace {

struct ModelFlagSet {
    std::string preset;
    int c = 0;
    int n_pp = 0;
    int attn_stride = 0;
    int attn_dim = 0;
    int window = 0;
    bool bidir = false;
    bool no_bidir = false;
    bool global_skip = false;
    bool no_global_skip = false;
    std::string order;
    std::string attention;
    std::string attention_source;

    CLI::Option* o_c = nullptr;
    CLI::Option* o_n_pp = nullptr;
    CLI::Option* o_attn_stride = nullptr;
    CLI::Option* o_attn_dim = nullptr;
    CLI::Option* o_window = nullptr;
    CLI::Option* o_order = nullptr;
    CLI::Option* o_attention = nullptr;
    CLI::Option* o_attention_source = nullptr;
    CLI::Option* o_preset = nullptr;
    CLI::Option* o_bidir = nullptr;
    CLI::Option* o_no_bidir = nullptr;
    CLI::Option* o_global_skip = nullptr;
    CLI::Option* o_no_global_skip = nullptr;

    void add_to(CLI::App* app) {
        o_preset = app->add_option("--preset", preset, "Start from a stock configuration (pahs, pahs-s)");
        o_c = app->add_option("--c", c, "Feature channels (divisible by 3)");
        o_n_pp = app->add_option("--n-pp", n_pp, "Ping-pong recurrence count");
        o_attn_stride = app->add_option("--attn-stride", attn_stride, "Attention token stride");
        o_attn_dim = app->add_option("--attn-dim", attn_dim, "q/k embedding channels (0 = c/3)");
        o_window = app->add_option("--window", window, "Future frames visible to the backward pass");
        o_bidir = app->add_flag("--bidir", bidir, "Enable bidirectional inference");
        o_no_bidir = app->add_flag("--no-bidir", no_bidir, "Disable bidirectional inference");
        o_global_skip = app->add_flag("--global-skip", global_skip, "Add the blurry input to the output");
        o_no_global_skip = app->add_flag("--no-global-skip", no_global_skip, "Disable the input skip");
        o_order = app->add_option("--order", order, "Hidden-state update order (blur_first, latent_first)");
        o_attention = app->add_option("--attention", attention, "Attention kind (none, nla, snla)");
        o_attention_source =
            app->add_option("--attention-source", attention_source, "Attention inputs (cross, self)");
    }

    ModelConfig build(std::uint64_t seed) const {
        ModelConfig cfg = o_preset->count() ? preset_config(preset) : ModelConfig{};
        if (o_c->count()) {
            cfg.c = c;
        }
        if (o_n_pp->count()) {
            cfg.n_pp = n_pp;
        }
        if (o_attn_stride->count()) {
            cfg.attn_stride = attn_stride;
        }
        if (o_attn_dim->count()) {
            cfg.attn_dim = attn_dim;
        }
        if (o_window->count()) {
            cfg.future_window = window;
        }
        if (o_bidir->count()) {
            cfg.bidirectional = true;
        }
        if (o_no_bidir->count()) {
            cfg.bidirectional = false;
        }
        if (o_global_skip->count()) {
            cfg.global_skip = true;
        }
        if (o_no_global_skip->count()) {
            cfg.global_skip = false;
        }
        if (o_order->count()) {
            cfg.update_order = update_order_from_string(order);
        }
        if (o_attention->count()) {
            cfg.attention = attention_kind_from_string(attention);
        }
        if (o_attention_source->count()) {
            cfg.attention_source = attention_source_from_string(attention_source);
        }
        cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
};

void apply_overrides(ModelConfig& cfg, const ModelFlagSet& flags) {
    if (flags.o_window->count()) {
        cfg.future_window = flags.window;
    }
    if (flags.o_bidir->count()) {
        cfg.bidirectional = true;
    }
    if (flags.o_no_bidir->count()) {
        cfg.bidirectional = false;
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Recurrent video deblurring with ping-pong hidden-state updates and selective non-local attention"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand
    app.set_config("--config")->description("Read options from a `key = value` file (# comments)");
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Seed for all randomness");

    // synth
    CLI::App* synth = app.add_subcommand("synth", "Generate a paired blur/sharp dataset");
    std::string synth_out;
    SynthSpec synth_spec;
    std::string synth_format = "ppm";
    synth->add_option("--out", synth_out, "Output directory (gets blur/ and sharp/)")->required();
    synth->add_option("--frames", synth_spec.frames, "Frames per sequence");
    synth->add_option("--size", synth_spec.canvas, "Canvas size in pixels");
    synth->add_option("--shapes", synth_spec.shapes, "Number of moving shapes");
    synth->add_option("--disp", synth_spec.max_disp, "Max per-frame displacement (pixels)");
    synth->add_option("--substeps", synth_spec.substeps, "Exposure substeps averaged into each blur frame");
    synth->add_option("--format", synth_format, "Frame format (ppm, pt4)");

    // train
    CLI::App* train_cmd = app.add_subcommand("train", "Train on a paired dataset directory");
    std::string train_data, train_ckpt_out, train_loss_csv;
    TrainOptions train_opts;
    double train_lr = 1e-4;
    std::int64_t halve_every = 0;
    ModelFlagSet train_flags;
    train_cmd->add_option("--data", train_data, "Dataset directory containing blur/ and sharp/")->required();
    train_cmd->add_option("--ckpt-out", train_ckpt_out, "Checkpoint output path")->required();
    train_cmd->add_option("--iters", train_opts.iterations, "Training iterations");
    train_cmd->add_option("--patch", train_opts.patch, "Square patch size");
    train_cmd->add_option("--lr", train_lr, "Initial learning rate");
    train_cmd->add_option("--halve-every", halve_every, "Halve the rate every N steps (0 = constant)");
    train_cmd->add_option("--loss-csv", train_loss_csv, "Per-iteration loss log (iter,loss,lr)");
    train_flags.add_to(train_cmd);

    // infer
    CLI::App* infer = app.add_subcommand("infer", "Restore every frame in a directory");
    std::string infer_in, infer_out, infer_ckpt;
    ModelFlagSet infer_flags;
    infer->add_option("--in", infer_in, "Input frame directory (*.ppm or *.pt4)")->required();
    infer->add_option("--out", infer_out, "Output directory (mirrors input names)")->required();
    infer->add_option("--ckpt", infer_ckpt, "Checkpoint to load")->required();
    infer_flags.add_to(infer);

    // eval
    CLI::App* eval_cmd = app.add_subcommand("eval", "Mean PSNR/SSIM between two frame directories");
    std::string eval_in, eval_ref;
    eval_cmd->add_option("--in", eval_in, "Restored frame directory")->required();
    eval_cmd->add_option("--ref", eval_ref, "Reference frame directory")->required();

    // ablate
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Evaluate the variant grid and emit CSV");
    std::string ablate_out;
    AblationOptions ablate_opts;
    ModelFlagSet ablate_flags;
    ablate_cmd->add_option("--out", ablate_out, "CSV output path")->required();
    ablate_cmd->add_option("--frames", ablate_opts.eval_frames, "Validation sequence length");
    ablate_cmd->add_option("--size", ablate_opts.canvas, "Validation frame size");
    ablate_cmd->add_option("--reps", ablate_opts.timing_reps, "Timing repetitions (best-of)");
    ablate_flags.add_to(ablate_cmd);

    // gradcheck
    CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference verification of all gradients");
    int gradcheck_seeds = 20;
    bool gradcheck_skip_cell = false;
    gradcheck_cmd->add_option("--seeds", gradcheck_seeds, "Random instances per kernel");
    gradcheck_cmd->add_flag("--skip-cell", gradcheck_skip_cell, "Skip the full-cell check");

    // dump
    CLI::App* dump_cmd = app.add_subcommand("dump", "Write one frame's intermediate tensors as PT4 files");
    std::string dump_in, dump_ckpt, dump_out;
    std::int64_t dump_frame = 0;
    dump_cmd->add_option("--in", dump_in, "Input frame directory")->required();
    dump_cmd->add_option("--ckpt", dump_ckpt, "Checkpoint to load")->required();
    dump_cmd->add_option("--frame", dump_frame, "Frame index to dump")->required();
    dump_cmd->add_option("--out", dump_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\nRun with --help for usage.\n", e.what());
        return 1;
    }

    apply_thread_env_cap();

    if (synth->parsed()) {
        synth_spec.seed = seed;
        synth_spec.validate();
        require(synth_format == "ppm" || synth_format == "pt4", "unknown --format: " + synth_format);
        SynthPair pair = generate_synthetic(synth_spec);
        const std::string ext = "." + synth_format;
        for (auto* seq : {&pair.blur, &pair.sharp}) {
            for (auto& e : seq->exts) {
                e = ext;
            }
        }
        save_frames(synth_out + "/blur", pair.blur, pair.blur.frames);
        save_frames(synth_out + "/sharp", pair.sharp, pair.sharp.frames);
        std::printf("wrote %d frame pairs to %s\n", synth_spec.frames, synth_out.c_str());
        return 0;
    }

    if (train_cmd->parsed()) {
        const ModelConfig cfg = train_flags.build(seed);
        SynthPair pair;
        pair.blur = load_frame_dir(train_data + "/blur");
        pair.sharp = load_frame_dir(train_data + "/sharp");
        ParameterStore<float> params = init_parameters<float>(cfg);
        train_opts.adam.lr = train_lr;
        train_opts.adam.halve_every = halve_every;
        train_opts.seed = seed;
        train_opts.loss_csv = train_loss_csv;
        const TrainResult result = train(params, cfg, {pair}, train_opts);
        save_checkpoint(train_ckpt_out, params, cfg);
        std::printf("iters=%lld first_loss=%.6g last_loss=%.6g ckpt=%s\n",
                    static_cast<long long>(train_opts.iterations), result.losses.front(), result.losses.back(),
                    train_ckpt_out.c_str());
        return 0;
    }

    if (infer->parsed()) {
        auto [params, cfg] = load_checkpoint<float>(infer_ckpt);
        apply_overrides(cfg, infer_flags);
        const FrameSequence<float> seq = load_frame_dir(infer_in);
        const std::vector<Tensor4<float>> latents = run_sequence(seq, params, cfg);
        save_frames(infer_out, seq, latents);
        std::printf("restored %lld frames to %s\n", static_cast<long long>(seq.size()), infer_out.c_str());
        return 0;
    }

    if (eval_cmd->parsed()) {
        const FrameSequence<float> a = load_frame_dir(eval_in);
        const FrameSequence<float> b = load_frame_dir(eval_ref);
        require(a.size() == b.size(), "eval: directories hold different frame counts");
        double psnr_sum = 0.0;
        double ssim_sum = 0.0;
        for (std::int64_t t = 0; t < a.size(); ++t) {
            psnr_sum += psnr(a.frames[static_cast<std::size_t>(t)], b.frames[static_cast<std::size_t>(t)]);
            ssim_sum += ssim(a.frames[static_cast<std::size_t>(t)], b.frames[static_cast<std::size_t>(t)]);
        }
        const double n = static_cast<double>(a.size());
        std::printf("psnr=%s ssim=%s\n", format_metric(psnr_sum / n).c_str(), format_metric(ssim_sum / n).c_str());
        return 0;
    }

    if (ablate_cmd->parsed()) {
        const ModelConfig cfg = ablate_flags.build(seed);
        ablate_opts.seed = seed;
        const std::vector<AblationRow> rows = run_ablation(cfg, ablate_opts);
        write_ablation_csv(ablate_out, rows);
        std::printf("wrote %zu variant rows to %s\n", rows.size(), ablate_out.c_str());
        return 0;
    }

    if (gradcheck_cmd->parsed()) {
        const GradCheckReport report = run_gradient_suite(gradcheck_seeds, !gradcheck_skip_cell);
        for (const GradCheckCase& c : report.cases) {
            std::printf("%s %-20s max_rel_err=%.3e tol=%.0e\n", c.pass ? "pass" : "FAIL", c.name.c_str(),
                        c.max_rel_err, c.tolerance);
        }
        std::printf("%s in %.1f s\n", report.all_pass ? "all gradients verified" : "GRADIENT CHECK FAILED",
                    report.seconds);
        return report.all_pass ? 0 : 2;
    }

    if (dump_cmd->parsed()) {
        auto [params, cfg] = load_checkpoint<float>(dump_ckpt);
        const FrameSequence<float> seq = load_frame_dir(dump_in);
        const DumpResult<float> result = debug_dump(seq, params, cfg, dump_frame, dump_out);
        for (const std::string& f : result.files) {
            std::printf("%s\n", f.c_str());
        }
        return 0;
    }

    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
