#ifndef PAHS_MODEL_HPP
#define PAHS_MODEL_HPP

#include <string>
#include <utility>
#include <vector>

#include "pahs/model_config.hpp"
#include "pahs/params.hpp"
#include "pahs/tape.hpp"

namespace pahs {

// Parameters registered as tape leaves, addressable by store name.
template <typename T>
struct ParamVars {
    const ParameterStore<T>* store = nullptr;
    std::vector<Var> vars;
    Var at(const std::string& name) const { return vars[store->index_of(name)]; }
};

template <typename T>
ParamVars<T> load_params(Tape<T>& tape, const ParameterStore<T>& store);

// (hidden state, previous latent feature) threaded between time steps.
struct CarryVars {
    Var h = -1;
    Var f_prev = -1;
};

// Intermediate attention products, kept for inspection and tests.
struct AttentionVars {
    bool active = false;
    Var q = -1;
    Var k = -1;
    Var v = -1;
    Var scores = -1;
    Var s_nl = -1;
    Var s_sel = -1; // -1 when the filtering module is off (plain non-local attention)
    Var att = -1;
};

template <typename T>
struct AttentionBundle {
    bool active = false;
    Tensor4<T> q, k, v, s_nl, s_sel, att;
};

template <typename T>
AttentionBundle<T> export_bundle(const Tape<T>& tape, const AttentionVars& av);

struct CellCoreOut {
    Var f_b = -1;      // blurry frame feature (as passed in)
    Var h_updated = -1;
    Var h_tilde = -1;
    Var f_latent = -1;
    CarryVars carry;
    AttentionVars attn;
};

struct CellOut {
    Var latent_image = -1;
    Var f_latent = -1;
    CarryVars carry;
    AttentionVars attn;
};

// (N,3,H,W) -> (N,c,H/4,W/4): stem conv, then two stride-2 convs each
// followed by five ResBlocks.
template <typename T>
Var extract_features(Tape<T>& tape, Var b, const ParamVars<T>& pv, const ModelConfig& cfg,
                     const std::string& prefix = "");

// Shared ping-pong block: concat(feature, state) -> conv -> ResBlock -> conv
// down to c/3 channels, plus a residual add of the state.
template <typename T>
Var pp_block(Tape<T>& tape, Var feature, Var state, const ParamVars<T>& pv, const std::string& prefix = "");

// n alternating updates; both calls per step read the same "pp." weights.
template <typename T>
Var pprnn_update(Tape<T>& tape, CarryVars carry, Var f_b, int n, const ParamVars<T>& pv, const ModelConfig& cfg,
                 const std::string& prefix = "");

template <typename T>
std::pair<Var, AttentionVars> snla(Tape<T>& tape, Var f_b, Var h_n, const ParamVars<T>& pv, const ModelConfig& cfg,
                                   const std::string& prefix = "");

// concat(h_tilde, f_B) -> fusion conv -> 3 ResBlocks; the output is the
// latent feature reused by the next step.
template <typename T>
Var recon_head(Tape<T>& tape, Var f_b, Var h_tilde, const ParamVars<T>& pv, const std::string& prefix = "");

// Upsampling tail; pass b_img >= 0 to add the global input skip.
// tail_prefix selects "recon_tail." or the doubled-input "fused_tail.".
template <typename T>
Var recon_tail(Tape<T>& tape, Var latent, Var b_img, const ParamVars<T>& pv, const ModelConfig& cfg,
               const std::string& tail_prefix);

template <typename T>
Var extract_hidden(Tape<T>& tape, Var f_l, const ParamVars<T>& pv, const std::string& prefix = "");

// Everything between the frame feature and the next carry.
template <typename T>
CellCoreOut cell_core(Tape<T>& tape, Var f_b, CarryVars carry, const ParamVars<T>& pv, const ModelConfig& cfg,
                      const std::string& prefix = "");

// Full unidirectional step: features -> recurrence -> attention ->
// reconstruction (with tail) -> next carry.
template <typename T>
CellOut cell_step(Tape<T>& tape, Var b, CarryVars carry, const ParamVars<T>& pv, const ModelConfig& cfg);

template <typename T>
CarryVars zero_carry(Tape<T>& tape, const ModelConfig& cfg, const Dims4& frame_dims);

} // namespace pahs

#endif
