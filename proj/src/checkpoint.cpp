#include "pahs/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "pahs/pt4.hpp"

namespace pahs {

namespace {

constexpr const char* kHeader = "PAHS-CKPT v1";

} // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& store, const ModelConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open for write: " + path);
    }
    os << kHeader << "\n";
    os << "c " << cfg.c << "\n";
    os << "n_pp " << cfg.n_pp << "\n";
    os << "attn_stride " << cfg.attn_stride << "\n";
    os << "attn_dim " << cfg.attn_dim << "\n";
    os << "future_window " << cfg.future_window << "\n";
    os << "bidirectional " << (cfg.bidirectional ? 1 : 0) << "\n";
    os << "global_skip " << (cfg.global_skip ? 1 : 0) << "\n";
    os << "update_order " << to_string(cfg.update_order) << "\n";
    os << "attention " << to_string(cfg.attention) << "\n";
    os << "attention_source " << to_string(cfg.attention_source) << "\n";
    os << "seed " << cfg.seed << "\n";
    os << "tensors " << store.size() << "\n";
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Dims4 d = store.value(i).dims();
        os << store.names()[i] << " " << d.b << " " << d.c << " " << d.h << " " << d.w << "\n";
    }
    os << "end\n";
    for (std::size_t i = 0; i < store.size(); ++i) {
        write_pt4(os, store.value(i));
    }
    if (!os) {
        throw IoError("checkpoint write failed: " + path);
    }
}

template <typename T>
std::pair<ParameterStore<T>, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open: " + path);
    }
    std::string line;
    if (!std::getline(is, line) || line != kHeader) {
        throw IoError("not a checkpoint file: " + path);
    }

    ModelConfig cfg;
    std::size_t tensor_count = 0;
    for (;;) {
        if (!std::getline(is, line)) {
            throw IoError("truncated checkpoint manifest: " + path);
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "tensors") {
            ls >> tensor_count;
            break;
        }
        std::string value;
        ls >> value;
        if (key == "c") {
            cfg.c = std::stoi(value);
        } else if (key == "n_pp") {
            cfg.n_pp = std::stoi(value);
        } else if (key == "attn_stride") {
            cfg.attn_stride = std::stoi(value);
        } else if (key == "attn_dim") {
            cfg.attn_dim = std::stoi(value);
        } else if (key == "future_window") {
            cfg.future_window = std::stoi(value);
        } else if (key == "bidirectional") {
            cfg.bidirectional = value == "1";
        } else if (key == "global_skip") {
            cfg.global_skip = value == "1";
        } else if (key == "update_order") {
            cfg.update_order = update_order_from_string(value);
        } else if (key == "attention") {
            cfg.attention = attention_kind_from_string(value);
        } else if (key == "attention_source") {
            cfg.attention_source = attention_source_from_string(value);
        } else if (key == "seed") {
            cfg.seed = std::stoull(value);
        } else {
            throw IoError("unknown checkpoint key '" + key + "' in " + path);
        }
    }
    cfg.validate();

    std::vector<std::string> names(tensor_count);
    std::vector<Dims4> dims(tensor_count);
    for (std::size_t i = 0; i < tensor_count; ++i) {
        if (!std::getline(is, line)) {
            throw IoError("truncated checkpoint manifest: " + path);
        }
        std::istringstream ls(line);
        ls >> names[i] >> dims[i].b >> dims[i].c >> dims[i].h >> dims[i].w;
        if (!ls) {
            throw IoError("bad manifest line in " + path + ": " + line);
        }
    }
    if (!std::getline(is, line) || line != "end") {
        throw IoError("missing manifest terminator in " + path);
    }

    // The manifest must describe exactly the layer set the config implies.
    const auto layers = model_layers(cfg);
    require(tensor_count == 2 * layers.size(),
            "checkpoint does not match config: expected " + std::to_string(2 * layers.size()) + " tensors, found " +
                std::to_string(tensor_count));

    ParameterStore<T> store;
    for (std::size_t i = 0; i < tensor_count; ++i) {
        Tensor4<T> t = read_pt4<T>(is, path + ":" + names[i], /*strict_dtype=*/true);
        require_dims_equal(t.dims(), dims[i], "checkpoint tensor " + names[i]);
        store.add(names[i], std::move(t));
    }
    for (const auto& layer : layers) {
        const Dims4 wd = layer.is_fc ? Dims4{1, 1, layer.fc_out, layer.fc_in} : layer.spec.weight_dims();
        require(store.has(layer.name + ".w"), "checkpoint does not match config: missing " + layer.name + ".w");
        require_dims_equal(store.at(layer.name + ".w").dims(), wd, "checkpoint tensor " + layer.name + ".w");
    }
    return {std::move(store), cfg};
}

template void save_checkpoint<float>(const std::string&, const ParameterStore<float>&, const ModelConfig&);
template void save_checkpoint<double>(const std::string&, const ParameterStore<double>&, const ModelConfig&);
template std::pair<ParameterStore<float>, ModelConfig> load_checkpoint<float>(const std::string&);
template std::pair<ParameterStore<double>, ModelConfig> load_checkpoint<double>(const std::string&);

} // namespace pahs
