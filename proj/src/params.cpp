#include "pahs/params.hpp"

#include <cmath>

#include "pahs/rng.hpp"

namespace pahs {

std::string to_string(UpdateOrder v) { return v == UpdateOrder::BlurFirst ? "blur_first" : "latent_first"; }
std::string to_string(AttentionKind v) {
    switch (v) {
    case AttentionKind::None:
        return "none";
    case AttentionKind::NonLocal:
        return "nla";
    default:
        return "snla";
    }
}
std::string to_string(AttentionSource v) { return v == AttentionSource::Cross ? "cross" : "self"; }

UpdateOrder update_order_from_string(const std::string& s) {
    if (s == "blur_first") {
        return UpdateOrder::BlurFirst;
    }
    if (s == "latent_first") {
        return UpdateOrder::LatentFirst;
    }
    throw ContractError("unknown update order: " + s);
}

AttentionKind attention_kind_from_string(const std::string& s) {
    if (s == "none") {
        return AttentionKind::None;
    }
    if (s == "nla") {
        return AttentionKind::NonLocal;
    }
    if (s == "snla") {
        return AttentionKind::SelectiveNonLocal;
    }
    throw ContractError("unknown attention kind: " + s);
}

AttentionSource attention_source_from_string(const std::string& s) {
    if (s == "cross") {
        return AttentionSource::Cross;
    }
    if (s == "self") {
        return AttentionSource::SelfState;
    }
    throw ContractError("unknown attention source: " + s);
}

void ModelConfig::validate() const {
    require(c >= 3, "config: c must be at least 3");
    require(c % 3 == 0, "config: c must be divisible by 3, got " + std::to_string(c));
    require(n_pp >= 0, "config: n_pp must be >= 0");
    require(attn_stride >= 1, "config: attn_stride must be >= 1");
    require(attn_dim >= 0, "config: attn_dim must be >= 0");
    require(future_window >= 0, "config: future_window must be >= 0");
}

void ModelConfig::validate_frame(const Dims4& dims) const {
    if (dims.c != 3) {
        throw ShapeError("frame: channel count must be 3, got " + std::to_string(dims.c));
    }
    const int m = spatial_multiple();
    if (dims.h <= 0 || dims.h % m != 0) {
        throw ShapeError("frame: height " + std::to_string(dims.h) + " must be a positive multiple of " +
                         std::to_string(m));
    }
    if (dims.w <= 0 || dims.w % m != 0) {
        throw ShapeError("frame: width " + std::to_string(dims.w) + " must be a positive multiple of " +
                         std::to_string(m));
    }
}

ModelConfig preset_config(const std::string& name) {
    ModelConfig cfg;
    if (name == "pahs") {
        cfg.c = 192;
        return cfg;
    }
    if (name == "pahs-s") {
        cfg.c = 93;
        return cfg;
    }
    throw ContractError("unknown preset: " + name + " (expected pahs or pahs-s)");
}

template <typename T>
void ParameterStore<T>::add(const std::string& name, Tensor4<T> value) {
    require(index_.count(name) == 0, "parameter already exists: " + name);
    index_[name] = values_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
}

template <typename T>
Tensor4<T>& ParameterStore<T>::at(const std::string& name) {
    return values_[index_of(name)];
}

template <typename T>
const Tensor4<T>& ParameterStore<T>::at(const std::string& name) const {
    return values_[const_cast<ParameterStore*>(this)->index_of(name)];
}

template <typename T>
std::size_t ParameterStore<T>::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw ContractError("unknown parameter: " + name);
    }
    return it->second;
}

template <typename T>
std::int64_t ParameterStore<T>::element_count() const {
    std::int64_t n = 0;
    for (const auto& v : values_) {
        n += v.count();
    }
    return n;
}

template <typename T>
void ParameterStore<T>::zero_group(const std::string& prefix) {
    bool found = false;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].rfind(prefix, 0) == 0) {
            values_[i].fill(T(0));
            found = true;
        }
    }
    require(found, "zero_group: no parameters match prefix " + prefix);
}

template <typename T>
std::vector<std::string> ParameterStore<T>::group_names(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& n : names_) {
        if (n.rfind(prefix, 0) == 0) {
            out.push_back(n);
        }
    }
    return out;
}

ConvSpec conv3_spec(int in_ch, int out_ch, int stride) {
    ConvSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = 3;
    s.stride = stride;
    s.padding = 1;
    return s;
}

ConvSpec tconv3_spec(int in_ch, int out_ch) {
    ConvSpec s = conv3_spec(in_ch, out_ch, 2);
    s.transposed = true;
    return s;
}

ConvSpec attn_conv_spec(int in_ch, int out_ch, int stride) {
    ConvSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = stride;
    s.stride = stride;
    s.padding = 0;
    return s;
}

ConvSpec attn_tconv_spec(int in_ch, int out_ch, int stride) {
    ConvSpec s = attn_conv_spec(in_ch, out_ch, stride);
    s.transposed = true;
    return s;
}

namespace {

void push_conv(std::vector<NamedLayer>& out, const std::string& name, const ConvSpec& spec) {
    out.push_back(NamedLayer{name, spec, false, 0, 0});
}

void push_res_block(std::vector<NamedLayer>& out, const std::string& name, int ch) {
    push_conv(out, name + ".c1", conv3_spec(ch, ch));
    push_conv(out, name + ".c2", conv3_spec(ch, ch));
}

// One full cell (everything the recurrence needs; the reconstructor tail is
// listed separately because the bidirectional output path replaces it with
// the fused tail).
void push_cell(std::vector<NamedLayer>& out, const std::string& p, const ModelConfig& cfg) {
    const int c = cfg.c;
    const int hc = cfg.hidden_channels();

    push_conv(out, p + "extractor.stem", conv3_spec(3, c));
    push_conv(out, p + "extractor.down1", conv3_spec(c, c, 2));
    for (int i = 1; i <= 5; ++i) {
        push_res_block(out, p + "extractor.rb1_" + std::to_string(i), c);
    }
    push_conv(out, p + "extractor.down2", conv3_spec(c, c, 2));
    for (int i = 1; i <= 5; ++i) {
        push_res_block(out, p + "extractor.rb2_" + std::to_string(i), c);
    }

    push_conv(out, p + "pp.in", conv3_spec(c + hc, hc));
    push_res_block(out, p + "pp.rb", hc);
    push_conv(out, p + "pp.out", conv3_spec(hc, hc));

    const int q_in = cfg.attention_source == AttentionSource::Cross ? c : hc;
    push_conv(out, p + "snla.q", attn_conv_spec(q_in, cfg.attention_dim(), cfg.attn_stride));
    push_conv(out, p + "snla.k", attn_conv_spec(hc, cfg.attention_dim(), cfg.attn_stride));
    push_conv(out, p + "snla.v", attn_conv_spec(hc, hc, cfg.attn_stride));
    out.push_back(NamedLayer{p + "snla.fc", ConvSpec{}, true, 1, 1});
    push_conv(out, p + "snla.d", attn_tconv_spec(hc, hc, cfg.attn_stride));

    push_conv(out, p + "recon_head.fuse", conv3_spec(hc + c, c));
    for (int i = 1; i <= 3; ++i) {
        push_res_block(out, p + "recon_head.rb" + std::to_string(i), c);
    }

    push_conv(out, p + "hidden.in", conv3_spec(c, hc));
    push_res_block(out, p + "hidden.rb", hc);
    push_conv(out, p + "hidden.out", conv3_spec(hc, hc));
}

void push_tail(std::vector<NamedLayer>& out, const std::string& p, int in_ch, const ModelConfig& cfg) {
    const int c = cfg.c;
    push_conv(out, p + "up1", tconv3_spec(in_ch, c));
    push_res_block(out, p + "rb1_1", c);
    push_res_block(out, p + "rb1_2", c);
    push_conv(out, p + "up2", tconv3_spec(c, c));
    push_res_block(out, p + "rb2_1", c);
    push_res_block(out, p + "rb2_2", c);
    push_conv(out, p + "out", conv3_spec(c, 3));
}

} // namespace

std::vector<NamedLayer> model_layers(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<NamedLayer> out;
    push_cell(out, "", cfg);
    push_tail(out, "recon_tail.", cfg.c, cfg);
    if (cfg.bidirectional) {
        push_cell(out, "bwd.", cfg);
        push_tail(out, "fused_tail.", 2 * cfg.c, cfg);
    }
    return out;
}

template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& cfg) {
    Rng rng(cfg.seed);
    ParameterStore<T> store;
    for (const NamedLayer& layer : model_layers(cfg)) {
        Dims4 wd;
        Dims4 bd;
        std::int64_t fan_in;
        if (layer.is_fc) {
            wd = Dims4{1, 1, layer.fc_out, layer.fc_in};
            bd = Dims4{1, 1, 1, layer.fc_out};
            fan_in = layer.fc_in;
        } else {
            wd = layer.spec.weight_dims();
            bd = layer.spec.bias_dims();
            fan_in = static_cast<std::int64_t>(layer.spec.in_channels) * layer.spec.kernel * layer.spec.kernel;
        }
        Tensor4<T> w{wd};
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < w.count(); ++i) {
            w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        store.add(layer.name + ".w", std::move(w));
        store.add(layer.name + ".b", Tensor4<T>{bd});
    }
    return store;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template ParameterStore<float> init_parameters<float>(const ModelConfig&);
template ParameterStore<double> init_parameters<double>(const ModelConfig&);

} // namespace pahs
