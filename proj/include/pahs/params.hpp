#ifndef PAHS_PARAMS_HPP
#define PAHS_PARAMS_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pahs/kernels.hpp"
#include "pahs/model_config.hpp"
#include "pahs/tensor.hpp"

namespace pahs {

// Named, ordered collection of learnable arrays. Order is fixed at build time
// and is the serialization order.
template <typename T>
class ParameterStore {
public:
    void add(const std::string& name, Tensor4<T> value);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor4<T>& at(const std::string& name);
    const Tensor4<T>& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    std::size_t size() const { return values_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    Tensor4<T>& value(std::size_t i) { return values_[i]; }
    const Tensor4<T>& value(std::size_t i) const { return values_[i]; }

    std::int64_t element_count() const;
    // Zeroes every tensor in the group `prefix` (weights and biases).
    void zero_group(const std::string& prefix);
    std::vector<std::string> group_names(const std::string& prefix) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor4<T>> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Layer geometry shared by init, forward, and checkpoint validation.
ConvSpec conv3_spec(int in_ch, int out_ch, int stride = 1);
ConvSpec tconv3_spec(int in_ch, int out_ch);
ConvSpec attn_conv_spec(int in_ch, int out_ch, int stride);
ConvSpec attn_tconv_spec(int in_ch, int out_ch, int stride);

// Every (name, spec) pair of the model in serialization order. FC layers are
// described with kernel 0 and weight (1,1,Fout,Fin).
struct NamedLayer {
    std::string name;
    ConvSpec spec;
    bool is_fc = false;
    int fc_in = 0;
    int fc_out = 0;
};
std::vector<NamedLayer> model_layers(const ModelConfig& config);

// Deterministic init from config.seed: weights uniform in +-sqrt(1/fan_in),
// biases zero.
template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& config);

} // namespace pahs

#endif
