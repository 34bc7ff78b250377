#include "pahs/train.hpp"

#include <cmath>
#include <fstream>

#include "pahs/rng.hpp"
#include "pahs/sequence.hpp"

namespace pahs {

double lr_at(const AdamConfig& cfg, std::int64_t step) {
    if (cfg.halve_every <= 0) {
        return cfg.lr;
    }
    return cfg.lr * std::pow(0.5, static_cast<double>(step / cfg.halve_every));
}

template <typename T>
AdamState<T> AdamState<T>::init(const ParameterStore<T>& store) {
    AdamState st;
    st.m.reserve(store.size());
    st.v.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        st.m.emplace_back(store.value(i).dims());
        st.v.emplace_back(store.value(i).dims());
    }
    return st;
}

template <typename T>
void adam_step(ParameterStore<T>& params, const std::vector<Tensor4<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
    require(grads.size() == params.size(), "adam_step: gradient count does not match parameter count");
    state.step += 1;
    const double lr = lr_at(cfg, state.step - 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor4<T>& p = params.value(i);
        require_dims_equal(grads[i].dims(), p.dims(), "adam_step: grad " + params.names()[i]);
        Tensor4<T>& m = state.m[i];
        Tensor4<T>& v = state.v[i];
        for (std::int64_t k = 0; k < p.count(); ++k) {
            const double g = static_cast<double>(grads[i].data()[k]);
            const double mk = cfg.beta1 * static_cast<double>(m.data()[k]) + (1.0 - cfg.beta1) * g;
            const double vk = cfg.beta2 * static_cast<double>(v.data()[k]) + (1.0 - cfg.beta2) * g * g;
            m.data()[k] = static_cast<T>(mk);
            v.data()[k] = static_cast<T>(vk);
            const double mhat = mk / bc1;
            const double vhat = vk / bc2;
            p.data()[k] = static_cast<T>(static_cast<double>(p.data()[k]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

namespace {

template <typename T>
Tensor4<T> crop(const Tensor4<T>& t, std::int64_t oy, std::int64_t ox, std::int64_t size) {
    const Dims4 d = t.dims();
    Tensor4<T> out{Dims4{d.b, d.c, size, size}};
    for (std::int64_t n = 0; n < d.b; ++n) {
        for (std::int64_t c = 0; c < d.c; ++c) {
            for (std::int64_t y = 0; y < size; ++y) {
                const T* src = t.data() + ((n * d.c + c) * d.h + oy + y) * d.w + ox;
                T* dst = out.data() + ((n * d.c + c) * size + y) * size;
                std::copy(src, src + size, dst);
            }
        }
    }
    return out;
}

} // namespace

template <typename T>
TrainResult train(ParameterStore<T>& params, const ModelConfig& cfg, const std::vector<SynthPair>& data,
                  const TrainOptions& opts) {
    cfg.validate();
    require(!data.empty(), "train: empty dataset");
    require(opts.iterations >= 1, "train: iterations must be >= 1");
    const int mult = cfg.spatial_multiple();
    require(opts.patch >= mult && opts.patch % mult == 0,
            "train: patch size must be a positive multiple of " + std::to_string(mult));
    for (const SynthPair& pair : data) {
        pair.blur.validate();
        pair.sharp.validate();
        require(pair.blur.size() == pair.sharp.size(), "train: blur/sharp frame counts differ");
        const Dims4 d = pair.blur.frames.front().dims();
        require(d.h >= opts.patch && d.w >= opts.patch, "train: patch size exceeds frame size");
    }

    Rng rng(opts.seed);
    AdamState<T> state = AdamState<T>::init(params);
    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(opts.iterations));

    for (std::int64_t iter = 0; iter < opts.iterations; ++iter) {
        const SynthPair& pair = data[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(data.size())))];
        const Dims4 fd = pair.blur.frames.front().dims();
        const std::int64_t oy = mult * rng.index((fd.h - opts.patch) / mult + 1);
        const std::int64_t ox = mult * rng.index((fd.w - opts.patch) / mult + 1);

        Tape<T> tape;
        const ParamVars<T> pv = load_params(tape, params);
        std::vector<Var> blur_vars;
        std::vector<Var> sharp_vars;
        for (std::int64_t t = 0; t < pair.blur.size(); ++t) {
            blur_vars.push_back(tape.leaf(crop(pair.blur.frames[static_cast<std::size_t>(t)], oy, ox, opts.patch)));
            sharp_vars.push_back(tape.leaf(crop(pair.sharp.frames[static_cast<std::size_t>(t)], oy, ox, opts.patch)));
        }
        const std::vector<Var> latents = run_sequence_taped(tape, blur_vars, pv, cfg);

        Var total = -1;
        for (std::size_t t = 0; t < latents.size(); ++t) {
            const Var term = tape.l1_loss(latents[t], sharp_vars[t]);
            total = total < 0 ? term : tape.add(total, term);
        }
        const Var loss = tape.scale(total, static_cast<T>(1.0 / static_cast<double>(latents.size())));

        const std::vector<Tensor4<T>> grads_by_var = tape.backward(loss);
        std::vector<Tensor4<T>> grads;
        grads.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            grads.push_back(grads_by_var[static_cast<std::size_t>(pv.vars[i])]);
        }

        result.lrs.push_back(lr_at(opts.adam, state.step));
        adam_step(params, grads, state, opts.adam);
        result.losses.push_back(static_cast<double>(tape.value(loss).data()[0]));
    }

    if (!opts.loss_csv.empty()) {
        std::ofstream os(opts.loss_csv);
        if (!os) {
            throw IoError("cannot open for write: " + opts.loss_csv);
        }
        os << "iter,loss,lr\n";
        for (std::size_t i = 0; i < result.losses.size(); ++i) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i + 1, result.losses[i], result.lrs[i]);
            os << buf;
        }
        if (!os) {
            throw IoError("loss log write failed: " + opts.loss_csv);
        }
    }
    return result;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParameterStore<float>&, const std::vector<Tensor4<float>>&, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(ParameterStore<double>&, const std::vector<Tensor4<double>>&, AdamState<double>&,
                                const AdamConfig&);
template TrainResult train<float>(ParameterStore<float>&, const ModelConfig&, const std::vector<SynthPair>&,
                                  const TrainOptions&);

} // namespace pahs
