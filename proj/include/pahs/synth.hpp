#ifndef PAHS_SYNTH_HPP
#define PAHS_SYNTH_HPP

#include <cstdint>

#include "pahs/sequence.hpp"

namespace pahs {

// Moving textured shapes over a textured background; the blurry frame is the
// arithmetic mean of `substeps` renders spanning one frame interval.
struct SynthSpec {
    int canvas = 64;
    int shapes = 5;
    double max_disp = 3.0; // per-frame displacement bound, pixels
    int substeps = 8;
    int frames = 8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthPair {
    FrameSequence<float> blur;
    FrameSequence<float> sharp;
};

SynthPair generate_synthetic(const SynthSpec& spec);

// One substep render at continuous scene time t + offset(substep); substep -1
// gives the exposure-center (sharp) render. Regenerating substeps and
// averaging reproduces the blur frame bit-for-bit.
Tensor4<float> synth_substep_frame(const SynthSpec& spec, int frame, int substep);

} // namespace pahs

#endif
