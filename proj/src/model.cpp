#include "pahs/model.hpp"

namespace pahs {

template <typename T>
ParamVars<T> load_params(Tape<T>& tape, const ParameterStore<T>& store) {
    ParamVars<T> pv;
    pv.store = &store;
    pv.vars.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        pv.vars.push_back(tape.leaf(store.value(i)));
    }
    return pv;
}

template <typename T>
AttentionBundle<T> export_bundle(const Tape<T>& tape, const AttentionVars& av) {
    AttentionBundle<T> b;
    b.active = av.active;
    if (!av.active) {
        return b;
    }
    b.q = tape.value(av.q);
    b.k = tape.value(av.k);
    b.v = tape.value(av.v);
    b.s_nl = tape.value(av.s_nl);
    b.att = tape.value(av.att);
    if (av.s_sel >= 0) {
        b.s_sel = tape.value(av.s_sel);
    } else {
        // plain non-local attention: the selection score is pinned to 1
        const Dims4 d = b.s_nl.dims();
        b.s_sel = Tensor4<T>::full(Dims4{d.b, d.c, d.h, 1}, T(1));
    }
    return b;
}

namespace {

template <typename T>
Var conv_layer(Tape<T>& tape, Var x, const ParamVars<T>& pv, const std::string& name, const ConvSpec& spec) {
    return tape.conv2d(x, pv.at(name + ".w"), pv.at(name + ".b"), spec);
}

template <typename T>
Var tconv_layer(Tape<T>& tape, Var x, const ParamVars<T>& pv, const std::string& name, const ConvSpec& spec) {
    return tape.conv2d_transpose(x, pv.at(name + ".w"), pv.at(name + ".b"), spec);
}

template <typename T>
Var res_layer(Tape<T>& tape, Var x, const ParamVars<T>& pv, const std::string& name) {
    return res_block(tape, x, pv.at(name + ".c1.w"), pv.at(name + ".c1.b"), pv.at(name + ".c2.w"),
                     pv.at(name + ".c2.b"));
}

} // namespace

template <typename T>
Var extract_features(Tape<T>& tape, Var b, const ParamVars<T>& pv, const ModelConfig& cfg,
                     const std::string& prefix) {
    const int c = cfg.c;
    Var x = conv_layer(tape, b, pv, prefix + "extractor.stem", conv3_spec(3, c));
    x = conv_layer(tape, x, pv, prefix + "extractor.down1", conv3_spec(c, c, 2));
    for (int i = 1; i <= 5; ++i) {
        x = res_layer(tape, x, pv, prefix + "extractor.rb1_" + std::to_string(i));
    }
    x = conv_layer(tape, x, pv, prefix + "extractor.down2", conv3_spec(c, c, 2));
    for (int i = 1; i <= 5; ++i) {
        x = res_layer(tape, x, pv, prefix + "extractor.rb2_" + std::to_string(i));
    }
    return x;
}

template <typename T>
Var pp_block(Tape<T>& tape, Var feature, Var state, const ParamVars<T>& pv, const std::string& prefix) {
    const std::int64_t c = tape.value(feature).dims().c;
    const std::int64_t hc = tape.value(state).dims().c;
    Var x = tape.concat_channels(feature, state);
    x = conv_layer(tape, x, pv, prefix + "pp.in", conv3_spec(static_cast<int>(c + hc), static_cast<int>(hc)));
    x = res_layer(tape, x, pv, prefix + "pp.rb");
    x = conv_layer(tape, x, pv, prefix + "pp.out", conv3_spec(static_cast<int>(hc), static_cast<int>(hc)));
    return tape.add(state, x);
}

template <typename T>
Var pprnn_update(Tape<T>& tape, CarryVars carry, Var f_b, int n, const ParamVars<T>& pv, const ModelConfig& cfg,
                 const std::string& prefix) {
    require(n >= 0, "pprnn_update: recurrence count must be >= 0");
    Var h = carry.h;
    for (int i = 0; i < n; ++i) {
        if (cfg.update_order == UpdateOrder::BlurFirst) {
            const Var g = pp_block(tape, f_b, h, pv, prefix);
            h = pp_block(tape, carry.f_prev, g, pv, prefix);
        } else {
            const Var g = pp_block(tape, carry.f_prev, h, pv, prefix);
            h = pp_block(tape, f_b, g, pv, prefix);
        }
    }
    return h;
}

template <typename T>
std::pair<Var, AttentionVars> snla(Tape<T>& tape, Var f_b, Var h_n, const ParamVars<T>& pv, const ModelConfig& cfg,
                                   const std::string& prefix) {
    AttentionVars av;
    if (cfg.attention == AttentionKind::None) {
        return {h_n, av};
    }
    const int hc = cfg.hidden_channels();
    const int s = cfg.attn_stride;
    const Dims4 hd = tape.value(h_n).dims();
    if (hd.h % s != 0 || hd.w % s != 0) {
        throw ShapeError("snla: feature grid " + hd.str() + " is not divisible by the token stride " +
                         std::to_string(s));
    }

    const Var q_src = cfg.attention_source == AttentionSource::Cross ? f_b : h_n;
    const int q_in = cfg.attention_source == AttentionSource::Cross ? cfg.c : hc;
    const Var q_grid = conv_layer(tape, q_src, pv, prefix + "snla.q", attn_conv_spec(q_in, cfg.attention_dim(), s));
    const Var k_grid = conv_layer(tape, h_n, pv, prefix + "snla.k", attn_conv_spec(hc, cfg.attention_dim(), s));
    const Var v_grid = conv_layer(tape, h_n, pv, prefix + "snla.v", attn_conv_spec(hc, hc, s));

    const Dims4 qd = tape.value(q_grid).dims();
    av.active = true;
    av.q = tape.tokens_from_grid(q_grid);
    av.k = tape.tokens_from_grid(k_grid);
    av.v = tape.tokens_from_grid(v_grid);
    av.scores = tape.matmul(av.q, av.k, /*transpose_b=*/true);
    av.s_nl = tape.softmax_rows(av.scores);

    Var scaled = av.s_nl;
    if (cfg.attention == AttentionKind::SelectiveNonLocal) {
        const Var pooled = tape.avg_pool_rows(av.scores);
        av.s_sel = tape.sigmoid(tape.fully_connected(pooled, pv.at(prefix + "snla.fc.w"), pv.at(prefix + "snla.fc.b")));
        scaled = tape.scale_rows(av.s_nl, av.s_sel);
    }

    const Var att_tokens = tape.matmul(scaled, av.v);
    const Var att_grid = tape.grid_from_tokens(att_tokens, hc, qd.h, qd.w);
    av.att = tconv_layer(tape, att_grid, pv, prefix + "snla.d", attn_tconv_spec(hc, hc, s));
    return {tape.add(h_n, av.att), av};
}

template <typename T>
Var recon_head(Tape<T>& tape, Var f_b, Var h_tilde, const ParamVars<T>& pv, const std::string& prefix) {
    const std::int64_t c = tape.value(f_b).dims().c;
    const std::int64_t hc = tape.value(h_tilde).dims().c;
    Var x = tape.concat_channels(h_tilde, f_b);
    x = conv_layer(tape, x, pv, prefix + "recon_head.fuse",
                   conv3_spec(static_cast<int>(hc + c), static_cast<int>(c)));
    for (int i = 1; i <= 3; ++i) {
        x = res_layer(tape, x, pv, prefix + "recon_head.rb" + std::to_string(i));
    }
    return x;
}

template <typename T>
Var recon_tail(Tape<T>& tape, Var latent, Var b_img, const ParamVars<T>& pv, const ModelConfig& cfg,
               const std::string& tail_prefix) {
    const int c = cfg.c;
    const int in_ch = static_cast<int>(tape.value(latent).dims().c);
    Var x = tconv_layer(tape, latent, pv, tail_prefix + "up1", tconv3_spec(in_ch, c));
    x = res_layer(tape, x, pv, tail_prefix + "rb1_1");
    x = res_layer(tape, x, pv, tail_prefix + "rb1_2");
    x = tconv_layer(tape, x, pv, tail_prefix + "up2", tconv3_spec(c, c));
    x = res_layer(tape, x, pv, tail_prefix + "rb2_1");
    x = res_layer(tape, x, pv, tail_prefix + "rb2_2");
    x = conv_layer(tape, x, pv, tail_prefix + "out", conv3_spec(c, 3));
    if (b_img >= 0) {
        x = tape.add(b_img, x);
    }
    return x;
}

template <typename T>
Var extract_hidden(Tape<T>& tape, Var f_l, const ParamVars<T>& pv, const std::string& prefix) {
    const int c = static_cast<int>(tape.value(f_l).dims().c);
    const int hc = c / 3;
    Var x = conv_layer(tape, f_l, pv, prefix + "hidden.in", conv3_spec(c, hc));
    x = res_layer(tape, x, pv, prefix + "hidden.rb");
    x = conv_layer(tape, x, pv, prefix + "hidden.out", conv3_spec(hc, hc));
    return x;
}

template <typename T>
CellCoreOut cell_core(Tape<T>& tape, Var f_b, CarryVars carry, const ParamVars<T>& pv, const ModelConfig& cfg,
                      const std::string& prefix) {
    CellCoreOut out;
    out.f_b = f_b;
    out.h_updated = pprnn_update(tape, carry, f_b, cfg.n_pp, pv, cfg, prefix);
    auto [h_tilde, attn] = snla(tape, f_b, out.h_updated, pv, cfg, prefix);
    out.h_tilde = h_tilde;
    out.attn = attn;
    out.f_latent = recon_head(tape, f_b, h_tilde, pv, prefix);
    out.carry.h = extract_hidden(tape, out.f_latent, pv, prefix);
    out.carry.f_prev = out.f_latent;
    return out;
}

template <typename T>
CellOut cell_step(Tape<T>& tape, Var b, CarryVars carry, const ParamVars<T>& pv, const ModelConfig& cfg) {
    cfg.validate();
    cfg.validate_frame(tape.value(b).dims());
    const Var f_b = extract_features(tape, b, pv, cfg);
    const CellCoreOut core = cell_core(tape, f_b, carry, pv, cfg);
    CellOut out;
    out.latent_image = recon_tail(tape, core.f_latent, cfg.global_skip ? b : -1, pv, cfg, "recon_tail.");
    out.f_latent = core.f_latent;
    out.carry = core.carry;
    out.attn = core.attn;
    return out;
}

template <typename T>
CarryVars zero_carry(Tape<T>& tape, const ModelConfig& cfg, const Dims4& frame_dims) {
    CarryVars carry;
    carry.h = tape.leaf(Tensor4<T>{Dims4{frame_dims.b, cfg.hidden_channels(), frame_dims.h / 4, frame_dims.w / 4}});
    carry.f_prev = tape.leaf(Tensor4<T>{Dims4{frame_dims.b, cfg.c, frame_dims.h / 4, frame_dims.w / 4}});
    return carry;
}

#define PAHS_INSTANTIATE_MODEL(T)                                                                                \
    template ParamVars<T> load_params<T>(Tape<T>&, const ParameterStore<T>&);                                    \
    template AttentionBundle<T> export_bundle<T>(const Tape<T>&, const AttentionVars&);                          \
    template Var extract_features<T>(Tape<T>&, Var, const ParamVars<T>&, const ModelConfig&, const std::string&); \
    template Var pp_block<T>(Tape<T>&, Var, Var, const ParamVars<T>&, const std::string&);                       \
    template Var pprnn_update<T>(Tape<T>&, CarryVars, Var, int, const ParamVars<T>&, const ModelConfig&,         \
                                 const std::string&);                                                            \
    template std::pair<Var, AttentionVars> snla<T>(Tape<T>&, Var, Var, const ParamVars<T>&, const ModelConfig&,  \
                                                   const std::string&);                                          \
    template Var recon_head<T>(Tape<T>&, Var, Var, const ParamVars<T>&, const std::string&);                     \
    template Var recon_tail<T>(Tape<T>&, Var, Var, const ParamVars<T>&, const ModelConfig&, const std::string&); \
    template Var extract_hidden<T>(Tape<T>&, Var, const ParamVars<T>&, const std::string&);                      \
    template CellCoreOut cell_core<T>(Tape<T>&, Var, CarryVars, const ParamVars<T>&, const ModelConfig&,         \
                                      const std::string&);                                                       \
    template CellOut cell_step<T>(Tape<T>&, Var, CarryVars, const ParamVars<T>&, const ModelConfig&);            \
    template CarryVars zero_carry<T>(Tape<T>&, const ModelConfig&, const Dims4&);

PAHS_INSTANTIATE_MODEL(float)
PAHS_INSTANTIATE_MODEL(double)
#undef PAHS_INSTANTIATE_MODEL

} // namespace pahs
