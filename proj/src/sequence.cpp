#include "pahs/sequence.hpp"

#include <filesystem>

#include "pahs/pt4.hpp"

namespace pahs {

template <typename T>
void FrameSequence<T>::validate() const {
    require(!frames.empty(), "no frames found");
    const Dims4 d0 = frames.front().dims();
    for (std::size_t i = 1; i < frames.size(); ++i) {
        require_dims_equal(frames[i].dims(), d0, "frame " + id(static_cast<std::int64_t>(i)));
    }
}

template <typename T>
std::string FrameSequence<T>::id(std::int64_t t) const {
    if (t < static_cast<std::int64_t>(ids.size())) {
        return ids[static_cast<std::size_t>(t)];
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(t));
    return buf;
}

namespace {

template <typename T>
struct CarryTensors {
    Tensor4<T> h;
    Tensor4<T> f_prev;
};

template <typename T>
CarryTensors<T> zero_carry_tensors(const ModelConfig& cfg, const Dims4& fd) {
    return CarryTensors<T>{Tensor4<T>{Dims4{fd.b, cfg.hidden_channels(), fd.h / 4, fd.w / 4}},
                           Tensor4<T>{Dims4{fd.b, cfg.c, fd.h / 4, fd.w / 4}}};
}

// One recurrent step on a fresh short-lived tape, from a precomputed frame
// feature. Returns the latent feature and the next carry as plain tensors.
template <typename T>
CellCoreOut run_core_once(Tape<T>& tape, const Tensor4<T>& f_b, const CarryTensors<T>& carry,
                          const ParamVars<T>& pv, const ModelConfig& cfg, const std::string& prefix) {
    const Var f = tape.leaf(f_b);
    CarryVars cv{tape.leaf(carry.h), tape.leaf(carry.f_prev)};
    return cell_core(tape, f, cv, pv, cfg, prefix);
}

} // namespace

template <typename T>
std::vector<Tensor4<T>> run_unidirectional(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                           const ModelConfig& cfg) {
    cfg.validate();
    seq.validate();
    cfg.validate_frame(seq.frames.front().dims());

    CarryTensors<T> carry = zero_carry_tensors<T>(cfg, seq.frames.front().dims());
    std::vector<Tensor4<T>> latents;
    latents.reserve(seq.frames.size());
    for (const Tensor4<T>& frame : seq.frames) {
        Tape<T> tape;
        const ParamVars<T> pv = load_params(tape, params);
        const Var b = tape.leaf(frame);
        CarryVars cv{tape.leaf(carry.h), tape.leaf(carry.f_prev)};
        const CellOut out = cell_step(tape, b, cv, pv, cfg);
        latents.push_back(tape.value(out.latent_image));
        carry.h = tape.value(out.carry.h);
        carry.f_prev = tape.value(out.carry.f_prev);
    }
    return latents;
}

template <typename T>
std::vector<Tensor4<T>> run_bidirectional(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                          const ModelConfig& cfg) {
    cfg.validate();
    seq.validate();
    cfg.validate_frame(seq.frames.front().dims());
    require(cfg.bidirectional && params.has("bwd.extractor.stem.w"),
            "run_bidirectional: missing backward parameter set");

    const std::int64_t n = seq.size();
    const std::int64_t window = cfg.future_window;

    // Forward sweep, keeping the per-frame latent features.
    std::vector<Tensor4<T>> f_fwd(static_cast<std::size_t>(n));
    {
        CarryTensors<T> carry = zero_carry_tensors<T>(cfg, seq.frames.front().dims());
        for (std::int64_t t = 0; t < n; ++t) {
            Tape<T> tape;
            const ParamVars<T> pv = load_params(tape, params);
            const Var b = tape.leaf(seq.frames[static_cast<std::size_t>(t)]);
            const Var f_b = extract_features(tape, b, pv, cfg);
            const CellCoreOut core = cell_core(tape, f_b, CarryVars{tape.leaf(carry.h), tape.leaf(carry.f_prev)},
                                               pv, cfg);
            f_fwd[static_cast<std::size_t>(t)] = tape.value(core.f_latent);
            carry.h = tape.value(core.carry.h);
            carry.f_prev = tape.value(core.carry.f_prev);
        }
    }

    // Backward frame features are carry-independent; compute each once.
    std::vector<Tensor4<T>> f_b_bwd(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
        Tape<T> tape;
        const ParamVars<T> pv = load_params(tape, params);
        f_b_bwd[static_cast<std::size_t>(t)] =
            tape.value(extract_features(tape, tape.leaf(seq.frames[static_cast<std::size_t>(t)]), pv, cfg, "bwd."));
    }

    std::vector<Tensor4<T>> f_bwd(static_cast<std::size_t>(n));
    if (window >= n - 1) {
        // Window saturation: one reverse sweep covers every output frame.
        CarryTensors<T> carry = zero_carry_tensors<T>(cfg, seq.frames.front().dims());
        for (std::int64_t s = n - 1; s >= 0; --s) {
            Tape<T> tape;
            const ParamVars<T> pv = load_params(tape, params);
            const CellCoreOut core = run_core_once(tape, f_b_bwd[static_cast<std::size_t>(s)], carry, pv, cfg, "bwd.");
            f_bwd[static_cast<std::size_t>(s)] = tape.value(core.f_latent);
            carry.h = tape.value(core.carry.h);
            carry.f_prev = tape.value(core.carry.f_prev);
        }
    } else {
        for (std::int64_t t = 0; t < n; ++t) {
            CarryTensors<T> carry = zero_carry_tensors<T>(cfg, seq.frames.front().dims());
            const std::int64_t start = std::min<std::int64_t>(n - 1, t + window);
            for (std::int64_t s = start; s >= t; --s) {
                Tape<T> tape;
                const ParamVars<T> pv = load_params(tape, params);
                const CellCoreOut core =
                    run_core_once(tape, f_b_bwd[static_cast<std::size_t>(s)], carry, pv, cfg, "bwd.");
                if (s == t) {
                    f_bwd[static_cast<std::size_t>(t)] = tape.value(core.f_latent);
                } else {
                    carry.h = tape.value(core.carry.h);
                    carry.f_prev = tape.value(core.carry.f_prev);
                }
            }
        }
    }

    // Fused tail over the concatenated direction features.
    std::vector<Tensor4<T>> latents(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
        Tape<T> tape;
        const ParamVars<T> pv = load_params(tape, params);
        const Var fused = tape.concat_channels(tape.leaf(f_fwd[static_cast<std::size_t>(t)]),
                                               tape.leaf(f_bwd[static_cast<std::size_t>(t)]));
        const Var b = cfg.global_skip ? tape.leaf(seq.frames[static_cast<std::size_t>(t)]) : -1;
        latents[static_cast<std::size_t>(t)] = tape.value(recon_tail(tape, fused, b, pv, cfg, "fused_tail."));
    }
    return latents;
}

template <typename T>
std::vector<Tensor4<T>> run_sequence(const FrameSequence<T>& seq, const ParameterStore<T>& params,
                                     const ModelConfig& cfg) {
    return cfg.bidirectional ? run_bidirectional(seq, params, cfg) : run_unidirectional(seq, params, cfg);
}

template <typename T>
std::vector<Var> run_sequence_taped(Tape<T>& tape, const std::vector<Var>& frame_vars, const ParamVars<T>& pv,
                                    const ModelConfig& cfg) {
    cfg.validate();
    require(!frame_vars.empty(), "no frames found");
    const Dims4 fd = tape.value(frame_vars.front()).dims();
    cfg.validate_frame(fd);

    const std::int64_t n = static_cast<std::int64_t>(frame_vars.size());
    std::vector<Var> latents(static_cast<std::size_t>(n), -1);

    // Forward recurrence.
    std::vector<Var> f_fwd(static_cast<std::size_t>(n), -1);
    CarryVars carry = zero_carry<T>(tape, cfg, fd);
    for (std::int64_t t = 0; t < n; ++t) {
        const Var f_b = extract_features(tape, frame_vars[static_cast<std::size_t>(t)], pv, cfg);
        const CellCoreOut core = cell_core(tape, f_b, carry, pv, cfg);
        f_fwd[static_cast<std::size_t>(t)] = core.f_latent;
        carry = core.carry;
    }

    if (!cfg.bidirectional) {
        for (std::int64_t t = 0; t < n; ++t) {
            latents[static_cast<std::size_t>(t)] =
                recon_tail(tape, f_fwd[static_cast<std::size_t>(t)],
                           cfg.global_skip ? frame_vars[static_cast<std::size_t>(t)] : -1, pv, cfg, "recon_tail.");
        }
        return latents;
    }

    require(pv.store->has("bwd.extractor.stem.w"), "run_sequence_taped: missing backward parameter set");

    // Backward features once per frame, shared by all windows that touch it.
    std::vector<Var> f_b_bwd(static_cast<std::size_t>(n), -1);
    for (std::int64_t t = 0; t < n; ++t) {
        f_b_bwd[static_cast<std::size_t>(t)] =
            extract_features(tape, frame_vars[static_cast<std::size_t>(t)], pv, cfg, "bwd.");
    }

    std::vector<Var> f_bwd(static_cast<std::size_t>(n), -1);
    if (cfg.future_window >= n - 1) {
        CarryVars bcarry = zero_carry<T>(tape, cfg, fd);
        for (std::int64_t s = n - 1; s >= 0; --s) {
            const CellCoreOut core = cell_core(tape, f_b_bwd[static_cast<std::size_t>(s)], bcarry, pv, cfg, "bwd.");
            f_bwd[static_cast<std::size_t>(s)] = core.f_latent;
            bcarry = core.carry;
        }
    } else {
        for (std::int64_t t = 0; t < n; ++t) {
            CarryVars bcarry = zero_carry<T>(tape, cfg, fd);
            const std::int64_t start = std::min<std::int64_t>(n - 1, t + cfg.future_window);
            for (std::int64_t s = start; s >= t; --s) {
                const CellCoreOut core =
                    cell_core(tape, f_b_bwd[static_cast<std::size_t>(s)], bcarry, pv, cfg, "bwd.");
                bcarry = core.carry;
                if (s == t) {
                    f_bwd[static_cast<std::size_t>(t)] = core.f_latent;
                }
            }
        }
    }

    for (std::int64_t t = 0; t < n; ++t) {
        const Var fused =
            tape.concat_channels(f_fwd[static_cast<std::size_t>(t)], f_bwd[static_cast<std::size_t>(t)]);
        latents[static_cast<std::size_t>(t)] =
            recon_tail(tape, fused, cfg.global_skip ? frame_vars[static_cast<std::size_t>(t)] : -1, pv, cfg,
                       "fused_tail.");
    }
    return latents;
}

template <typename T>
DumpResult<T> debug_dump(const FrameSequence<T>& seq, const ParameterStore<T>& params, const ModelConfig& cfg,
                         std::int64_t frame_index, const std::string& out_dir) {
    cfg.validate();
    seq.validate();
    require(frame_index >= 0 && frame_index < seq.size(),
            "debug_dump: frame index " + std::to_string(frame_index) + " out of range");
    cfg.validate_frame(seq.frames.front().dims());

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + out_dir + ": " + ec.message());
    }

    CarryTensors<T> carry = zero_carry_tensors<T>(cfg, seq.frames.front().dims());
    DumpResult<T> result;
    for (std::int64_t t = 0; t <= frame_index; ++t) {
        Tape<T> tape;
        const ParamVars<T> pv = load_params(tape, params);
        const Var b = tape.leaf(seq.frames[static_cast<std::size_t>(t)]);
        const Tensor4<T> h_in = carry.h;
        const Var f_b = extract_features(tape, b, pv, cfg);
        const CellCoreOut core = cell_core(tape, f_b, CarryVars{tape.leaf(carry.h), tape.leaf(carry.f_prev)},
                                           pv, cfg);
        if (t == frame_index) {
            result.f_b = tape.value(f_b);
            result.h_in = h_in;
            result.h_updated = tape.value(core.h_updated);
            result.h_tilde = tape.value(core.h_tilde);
            result.bundle = export_bundle(tape, core.attn);
            break;
        }
        carry.h = tape.value(core.carry.h);
        carry.f_prev = tape.value(core.carry.f_prev);
    }

    const std::string stem = out_dir + "/" + seq.id(frame_index) + "_";
    auto emit = [&](const std::string& name, const Tensor4<T>& t) {
        const std::string path = stem + name + ".pt4";
        write_pt4_file(path, t);
        result.files.push_back(path);
    };
    emit("f_b", result.f_b);
    emit("h", result.h_in);
    emit("h_n", result.h_updated);
    emit("h_tilde", result.h_tilde);
    if (result.bundle.active) {
        emit("s_nl", result.bundle.s_nl);
        emit("s_sel", result.bundle.s_sel);
    }
    return result;
}

#define PAHS_INSTANTIATE_SEQ(T)                                                                                  \
    template struct FrameSequence<T>;                                                                            \
    template std::vector<Tensor4<T>> run_unidirectional<T>(const FrameSequence<T>&, const ParameterStore<T>&,    \
                                                           const ModelConfig&);                                  \
    template std::vector<Tensor4<T>> run_bidirectional<T>(const FrameSequence<T>&, const ParameterStore<T>&,     \
                                                          const ModelConfig&);                                   \
    template std::vector<Tensor4<T>> run_sequence<T>(const FrameSequence<T>&, const ParameterStore<T>&,          \
                                                     const ModelConfig&);                                        \
    template std::vector<Var> run_sequence_taped<T>(Tape<T>&, const std::vector<Var>&, const ParamVars<T>&,      \
                                                    const ModelConfig&);                                         \
    template DumpResult<T> debug_dump<T>(const FrameSequence<T>&, const ParameterStore<T>&, const ModelConfig&,  \
                                         std::int64_t, const std::string&);

PAHS_INSTANTIATE_SEQ(float)
PAHS_INSTANTIATE_SEQ(double)
#undef PAHS_INSTANTIATE_SEQ

} // namespace pahs
