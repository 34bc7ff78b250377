#ifndef PAHS_CHECKPOINT_HPP
#define PAHS_CHECKPOINT_HPP

#include <string>
#include <utility>

#include "pahs/params.hpp"

namespace pahs {

// Checkpoint file: a text manifest (model config, then one line of name and
// dims per tensor in store order, terminated by "end"), followed by the
// concatenated PT4 blobs in the same order. Save/load round-trips bit-exactly.
template <typename T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& store, const ModelConfig& cfg);

template <typename T>
std::pair<ParameterStore<T>, ModelConfig> load_checkpoint(const std::string& path);

} // namespace pahs

#endif
