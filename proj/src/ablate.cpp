#include "pahs/ablate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pahs/metrics.hpp"
#include "pahs/sequence.hpp"

namespace pahs {

std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base) {
    std::vector<std::pair<std::string, ModelConfig>> out;
    auto uni = [&](const std::string& name) {
        ModelConfig cfg = base;
        cfg.bidirectional = false;
        out.emplace_back(name, cfg);
        return std::prev(out.end());
    };

    for (int n = 0; n <= 4; ++n) {
        auto it = uni("n" + std::to_string(n));
        it->second.n_pp = n;
    }
    uni("order_blur_first")->second.update_order = UpdateOrder::BlurFirst;
    uni("order_latent_first")->second.update_order = UpdateOrder::LatentFirst;
    uni("attn_none")->second.attention = AttentionKind::None;
    uni("attn_nla")->second.attention = AttentionKind::NonLocal;
    uni("attn_snla")->second.attention = AttentionKind::SelectiveNonLocal;
    uni("attn_cross")->second.attention_source = AttentionSource::Cross;
    uni("attn_self")->second.attention_source = AttentionSource::SelfState;
    for (const int w : {0, 3, 7}) {
        ModelConfig cfg = base;
        cfg.bidirectional = true;
        cfg.future_window = w;
        out.emplace_back("window_" + std::to_string(w), cfg);
    }
    return out;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, const AblationOptions& opts) {
    SynthSpec synth;
    synth.canvas = opts.canvas;
    synth.frames = opts.eval_frames;
    synth.seed = opts.seed + 1;
    const SynthPair data = generate_synthetic(synth);

    std::vector<AblationRow> rows;
    for (const auto& [name, cfg] : ablation_variants(base)) {
        cfg.validate();
        const ParameterStore<float> params = init_parameters<float>(cfg);

        std::vector<Tensor4<float>> latents;
        double best_s = 1e300;
        for (int rep = 0; rep < std::max(1, opts.timing_reps); ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            latents = run_sequence(data.blur, params, cfg);
            const auto t1 = std::chrono::steady_clock::now();
            best_s = std::min(best_s, std::chrono::duration<double>(t1 - t0).count());
        }

        AblationRow row;
        row.variant = name;
        row.wall_ms = best_s * 1e3;
        double psnr_sum = 0.0;
        double ssim_sum = 0.0;
        for (std::size_t t = 0; t < latents.size(); ++t) {
            psnr_sum += psnr(latents[t], data.sharp.frames[t]);
            ssim_sum += ssim(latents[t], data.sharp.frames[t]);
        }
        row.psnr_db = psnr_sum / static_cast<double>(latents.size());
        row.ssim_v = ssim_sum / static_cast<double>(latents.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_metric(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot open for write: " + path);
    }
    os << "variant,psnr,ssim,wall_ms\n";
    for (const AblationRow& r : rows) {
        os << r.variant << "," << format_metric(r.psnr_db) << "," << format_metric(r.ssim_v) << ","
           << format_metric(r.wall_ms) << "\n";
    }
    if (!os) {
        throw IoError("ablation csv write failed: " + path);
    }
}

} // namespace pahs
