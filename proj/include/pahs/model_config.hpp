#ifndef PAHS_MODEL_CONFIG_HPP
#define PAHS_MODEL_CONFIG_HPP

#include <cstdint>
#include <string>

#include "pahs/tensor.hpp"

namespace pahs {

enum class UpdateOrder { BlurFirst, LatentFirst };
enum class AttentionKind { None, NonLocal, SelectiveNonLocal };
enum class AttentionSource { Cross, SelfState };

std::string to_string(UpdateOrder v);
std::string to_string(AttentionKind v);
std::string to_string(AttentionSource v);
UpdateOrder update_order_from_string(const std::string& s);
AttentionKind attention_kind_from_string(const std::string& s);
AttentionSource attention_source_from_string(const std::string& s);

struct ModelConfig {
    int c = 192;             // feature channels; hidden state uses c/3
    int n_pp = 4;            // ping-pong recurrence count
    int attn_stride = 4;     // token downsampling stride inside the attention
    int attn_dim = 0;        // q/k embedding channels, 0 means c/3
    int future_window = 19;  // frames visible to the backward pass
    bool bidirectional = true;
    bool global_skip = true; // add the blurry input to the reconstructor output
    UpdateOrder update_order = UpdateOrder::BlurFirst;
    AttentionKind attention = AttentionKind::SelectiveNonLocal;
    AttentionSource attention_source = AttentionSource::Cross;
    std::uint64_t seed = 0;

    int hidden_channels() const { return c / 3; }
    int attention_dim() const { return attn_dim > 0 ? attn_dim : c / 3; }
    int spatial_multiple() const { return 4 * attn_stride; }

    void validate() const;
    // Frame tensors must be (N, 3, H, W) with H and W divisible by
    // 4 * attn_stride so the token grid tiles exactly.
    void validate_frame(const Dims4& dims) const;
};

// Stock configurations: "pahs" (c=192) and "pahs-s" (c=93; the small preset
// rounds 92 up to the next multiple of 3 so the hidden state keeps c/3
// channels).
ModelConfig preset_config(const std::string& name);

} // namespace pahs

#endif
