#ifndef PAHS_TRAIN_HPP
#define PAHS_TRAIN_HPP

#include <string>
#include <vector>

#include "pahs/params.hpp"
#include "pahs/synth.hpp"

namespace pahs {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t halve_every = 0; // steps between halvings of the rate; 0 keeps it constant
};

double lr_at(const AdamConfig& cfg, std::int64_t step);

template <typename T>
struct AdamState {
    std::vector<Tensor4<T>> m;
    std::vector<Tensor4<T>> v;
    std::int64_t step = 0;

    static AdamState init(const ParameterStore<T>& store);
};

// Standard bias-corrected update; grads are aligned with store order.
template <typename T>
void adam_step(ParameterStore<T>& params, const std::vector<Tensor4<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg);

struct TrainOptions {
    std::int64_t iterations = 500;
    int patch = 64;
    AdamConfig adam;
    std::uint64_t seed = 0;
    std::string loss_csv; // written as `iter,loss,lr` when non-empty
};

struct TrainResult {
    std::vector<double> losses; // one entry per iteration
    std::vector<double> lrs;
};

// Sequence-level training: per iteration one (blur, sharp) pair is cropped to
// an aligned random patch, run through the recurrent model, and the mean L1
// over the restored frames is stepped with Adam.
template <typename T>
TrainResult train(ParameterStore<T>& params, const ModelConfig& cfg, const std::vector<SynthPair>& data,
                  const TrainOptions& opts);

} // namespace pahs

#endif
