#ifndef PAHS_ABLATE_HPP
#define PAHS_ABLATE_HPP

#include <string>
#include <vector>

#include "pahs/params.hpp"
#include "pahs/synth.hpp"

namespace pahs {

struct AblationRow {
    std::string variant;
    double psnr_db = 0.0;
    double ssim_v = 0.0;
    double wall_ms = 0.0;
};

struct AblationOptions {
    std::uint64_t seed = 0;
    int eval_frames = 6;
    int canvas = 64;
    int timing_reps = 5; // wall time is the best of this many runs
};

// Builds the variant grid from the base config: recurrence 0..4, both update
// orders, attention off/plain/selective, cross vs self attention sources, and
// the bidirectional future-window sweep {0, 3, 7}. Per-variant parameters are
// freshly initialized from the variant config (same seed).
std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base);

std::vector<AblationRow> run_ablation(const ModelConfig& base, const AblationOptions& opts);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

// Serializes one metric value, using "inf" for infinities.
std::string format_metric(double v);

} // namespace pahs

#endif
