#ifndef PAHS_FRAMES_HPP
#define PAHS_FRAMES_HPP

#include <string>

#include "pahs/sequence.hpp"

namespace pahs {

// Binary P6, 8-bit, values mapped to [0, 1]. Shape (1, 3, H, W).
Tensor4<float> read_ppm(const std::string& path);
// Clamps to [0, 1] and quantizes; this is the only place values are clamped.
void write_ppm(const std::string& path, const Tensor4<float>& img);

// Loads every *.ppm / *.pt4 in the directory, sorted by filename.
// Throws ContractError("no frames found...") on an empty directory.
FrameSequence<float> load_frame_dir(const std::string& dir);

// Writes one frame per latent, mirroring the input ids and extensions.
void save_frames(const std::string& out_dir, const FrameSequence<float>& like,
                 const std::vector<Tensor4<float>>& latents);

} // namespace pahs

#endif
