#ifndef PAHS_SEQUENCE_HPP
#define PAHS_SEQUENCE_HPP

#include <string>
#include <vector>

#include "pahs/model.hpp"

namespace pahs {

template <typename T>
struct FrameSequence {
    std::vector<Tensor4<T>> frames; // each (N, 3, H, W), uniform dims
    std::vector<std::string> ids;   // per-frame labels for file naming
    std::vector<std::string> exts;  // source extension per frame (".ppm"/".pt4")

    std::int64_t size() const { return static_cast<std::int64_t>(frames.size()); }
    void validate() const;
    std::string id(std::int64_t t) const;
};

// Causal pass: one restored frame per input frame, in order.
template <typename T>
std::vector<Tensor4<T>> run_unidirectional(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                           const ModelConfig& cfg);

// Forward features fused with a backward pass that sees at most
// cfg.future_window frames after t (restarted per output frame; a single
// reverse sweep is used when the window covers the whole remaining sequence).
template <typename T>
std::vector<Tensor4<T>> run_bidirectional(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                          const ModelConfig& cfg);

// Dispatches on cfg.bidirectional.
template <typename T>
std::vector<Tensor4<T>> run_sequence(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                     const ModelConfig& cfg);

// Same recurrences recorded on one caller-owned tape (training, gradient
// checks). Backward-direction frame features are extracted once per frame and
// shared between the overlapping windows.
template <typename T>
std::vector<Var> run_sequence_taped(Tape<T>& tape, const std::vector<Var>& frame_vars, const ParamVars<T>& pv,
                                    const ModelConfig& cfg);

template <typename T>
struct DumpResult {
    Tensor4<T> f_b, h_in, h_updated, h_tilde;
    AttentionBundle<T> bundle;
    std::vector<std::string> files;
};

// Runs the forward recurrence to frame_index and writes that step's
// intermediates as PT4 files under out_dir.
template <typename T>
DumpResult<T> debug_dump(const FrameSequence<T>& seq, const ParameterStore<T>& params, const ModelConfig& cfg,
                         std::int64_t frame_index, const std::string& out_dir);

} // namespace pahs

#endif
