#include "pahs/tape.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace pahs {

namespace {

template <typename T>
void accumulate_into(Tensor4<T>& dst, const Tensor4<T>& delta) {
    const std::int64_t n = dst.count();
    T* d = dst.data();
    const T* s = delta.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) {
        d[i] += s[i];
    }
}

} // namespace

template <typename T>
Var Tape<T>::check(Var v, const char* who) const {
    if (v < 0 || v >= static_cast<Var>(nodes_.size())) {
        throw ContractError(std::string(who) + ": var " + std::to_string(v) + " is not on this tape");
    }
    return v;
}

template <typename T>
Var Tape<T>::push(Node n, Tensor4<T> value) {
    nodes_.push_back(std::move(n));
    values_.push_back(std::move(value));
    return static_cast<Var>(nodes_.size() - 1);
}

template <typename T>
const Tensor4<T>& Tape<T>::value(Var v) const {
    check(v, "value");
    return values_[static_cast<std::size_t>(v)];
}

template <typename T>
Var Tape<T>::leaf(Tensor4<T> v) {
    return push(Node{}, std::move(v));
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var w, Var b, const ConvSpec& spec) {
    check(x, "conv2d");
    check(w, "conv2d");
    const Tensor4<T>* bias = b >= 0 ? &values_[static_cast<std::size_t>(check(b, "conv2d"))] : nullptr;
    Tensor4<T> y = pahs::conv2d(value(x), value(w), bias, spec);
    Node n;
    n.op = Op::Conv;
    n.in[0] = x;
    n.in[1] = w;
    n.in[2] = b;
    n.spec = spec;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::conv2d_transpose(Var x, Var w, Var b, const ConvSpec& spec) {
    check(x, "conv2d_transpose");
    check(w, "conv2d_transpose");
    if (!(2 * spec.padding < spec.kernel && spec.kernel <= 2 * spec.padding + spec.stride)) {
        throw ContractError("conv2d_transpose: spec " + spec.str() +
                            " does not satisfy 2*pad < kernel <= 2*pad + stride");
    }
    const Tensor4<T>* bias = b >= 0 ? &values_[static_cast<std::size_t>(check(b, "conv2d_transpose"))] : nullptr;
    Tensor4<T> y = pahs::conv2d_transpose(value(x), value(w), bias, spec);
    Node n;
    n.op = Op::ConvT;
    n.in[0] = x;
    n.in[1] = w;
    n.in[2] = b;
    n.spec = spec;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::relu(Var x) {
    Tensor4<T> y = pahs::relu(value(x));
    Node n;
    n.op = Op::Relu;
    n.in[0] = x;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::sigmoid(Var x) {
    Tensor4<T> y = pahs::sigmoid(value(x));
    Node n;
    n.op = Op::Sigmoid;
    n.in[0] = x;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
    Tensor4<T> y = pahs::add(value(a), value(b));
    Node n;
    n.op = Op::Add;
    n.in[0] = a;
    n.in[1] = b;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
    Tensor4<T> y = pahs::mul(value(a), value(b));
    Node n;
    n.op = Op::Mul;
    n.in[0] = a;
    n.in[1] = b;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
    Tensor4<T> y = pahs::scale(value(a), factor);
    Node n;
    n.op = Op::Scale;
    n.in[0] = a;
    n.factor = factor;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::concat_channels(Var a, Var b) {
    Tensor4<T> y = pahs::concat_channels(value(a), value(b));
    Node n;
    n.op = Op::Concat;
    n.in[0] = a;
    n.in[1] = b;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b, bool transpose_b) {
    Tensor4<T> y = pahs::matmul(value(a), value(b), transpose_b);
    Node n;
    n.op = Op::Matmul;
    n.in[0] = a;
    n.in[1] = b;
    n.flag = transpose_b;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::softmax_rows(Var m) {
    Tensor4<T> y = pahs::softmax_rows(value(m));
    Node n;
    n.op = Op::Softmax;
    n.in[0] = m;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::avg_pool_rows(Var m) {
    Tensor4<T> y = pahs::avg_pool_rows(value(m));
    Node n;
    n.op = Op::AvgPool;
    n.in[0] = m;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::fully_connected(Var x, Var w, Var b) {
    const Tensor4<T>* bias = b >= 0 ? &values_[static_cast<std::size_t>(check(b, "fully_connected"))] : nullptr;
    Tensor4<T> y = pahs::fully_connected(value(x), value(w), bias);
    Node n;
    n.op = Op::Fc;
    n.in[0] = x;
    n.in[1] = w;
    n.in[2] = b;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::scale_rows(Var a, Var s) {
    Tensor4<T> y = pahs::scale_rows(value(a), value(s));
    Node n;
    n.op = Op::ScaleRows;
    n.in[0] = a;
    n.in[1] = s;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::tokens_from_grid(Var x) {
    Tensor4<T> y = pahs::tokens_from_grid(value(x));
    Node n;
    n.op = Op::ToTokens;
    n.in[0] = x;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::grid_from_tokens(Var t, std::int64_t channels, std::int64_t gh, std::int64_t gw) {
    Tensor4<T> y = pahs::grid_from_tokens(value(t), channels, gh, gw);
    Node n;
    n.op = Op::ToGrid;
    n.in[0] = t;
    n.aux[0] = channels;
    n.aux[1] = gh;
    n.aux[2] = gw;
    return push(std::move(n), std::move(y));
}

template <typename T>
Var Tape<T>::l1_loss(Var a, Var b) {
    const double v = pahs::l1_value(value(a), value(b));
    Node n;
    n.op = Op::L1;
    n.in[0] = a;
    n.in[1] = b;
    return push(std::move(n), Tensor4<T>::scalar(static_cast<T>(v)));
}

template <typename T>
Var Tape<T>::sum_all(Var x) {
    const double v = pahs::sum_all_value(value(x));
    Node n;
    n.op = Op::SumAll;
    n.in[0] = x;
    return push(std::move(n), Tensor4<T>::scalar(static_cast<T>(v)));
}

template <typename T>
Var Tape<T>::weighted_sum(Var x, Tensor4<T> weights) {
    const double v = pahs::weighted_sum_value(value(x), weights);
    Node n;
    n.op = Op::WeightedSum;
    n.in[0] = x;
    n.constant = std::move(weights);
    return push(std::move(n), Tensor4<T>::scalar(static_cast<T>(v)));
}

template <typename T>
std::uint64_t Tape<T>::kink_signature() const {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    auto mix = [&h](std::uint64_t bit) {
        h ^= bit + 0x9e;
        h *= 1099511628211ull;
    };
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::Relu) {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            for (std::int64_t k = 0; k < x.count(); ++k) {
                mix(x.data()[k] > T(0) ? 1 : 0);
            }
        } else if (n.op == Op::L1) {
            const Tensor4<T>& a = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& b = values_[static_cast<std::size_t>(n.in[1])];
            for (std::int64_t k = 0; k < a.count(); ++k) {
                const T d = a.data()[k] - b.data()[k];
                mix(d > T(0) ? 2 : d < T(0) ? 1 : 0);
            }
        }
    }
    return h;
}

template <typename T>
std::vector<Tensor4<T>> Tape<T>::backward(Var loss) const {
    check(loss, "backward");
    if (!(values_[static_cast<std::size_t>(loss)].dims() == Dims4{1, 1, 1, 1})) {
        throw ContractError("backward: loss must be scalar, got " +
                            values_[static_cast<std::size_t>(loss)].dims().str());
    }

    std::vector<Tensor4<T>> grads(nodes_.size());
    std::vector<char> reached(nodes_.size(), 0);
    // First contribution moves in; later ones accumulate in place.
    auto sink = [&](Var v, Tensor4<T>&& delta) {
        if (!reached[static_cast<std::size_t>(v)]) {
            grads[static_cast<std::size_t>(v)] = std::move(delta);
            reached[static_cast<std::size_t>(v)] = 1;
        } else {
            accumulate_into(grads[static_cast<std::size_t>(v)], delta);
        }
    };
    auto grad_of = [&](Var v) -> Tensor4<T>& {
        auto& g = grads[static_cast<std::size_t>(v)];
        if (!reached[static_cast<std::size_t>(v)]) {
            g = Tensor4<T>::zeros(values_[static_cast<std::size_t>(v)].dims());
            reached[static_cast<std::size_t>(v)] = 1;
        }
        return g;
    };

    grad_of(loss).data()[0] = T(1);

    static double op_time[32] = {};
    static long op_count[32] = {};
    const bool prof = std::getenv("PAHS_PROF") != nullptr;
    for (Var i = loss; i >= 0; --i) {
        if (!reached[static_cast<std::size_t>(i)]) {
            continue;
        }
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        auto t_op0 = std::chrono::steady_clock::now();
        struct OnExit { decltype(t_op0) t0; const Node* n; bool on;
          ~OnExit(){ if(on){ op_time[(int)n->op] += std::chrono::duration<double>(std::chrono::steady_clock::now()-t0).count(); op_count[(int)n->op]++; } } } onexit{t_op0, &n, prof};
        const Tensor4<T>& dy = grads[static_cast<std::size_t>(i)];
        const Tensor4<T>& out = values_[static_cast<std::size_t>(i)];
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Conv: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& w = values_[static_cast<std::size_t>(n.in[1])];
            sink(n.in[0], conv2d_grad_input(dy, w, n.spec, x.dims()));
            sink(n.in[1], conv2d_grad_weight(dy, x, n.spec));
            if (n.in[2] >= 0) {
                sink(n.in[2], grad_bias(dy));
            }
            break;
        }
        case Op::ConvT: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& w = values_[static_cast<std::size_t>(n.in[1])];
            sink(n.in[0], conv2d_transpose_grad_input(dy, w, n.spec, x.dims()));
            sink(n.in[1], conv2d_transpose_grad_weight(dy, x, n.spec));
            if (n.in[2] >= 0) {
                sink(n.in[2], grad_bias(dy));
            }
            break;
        }
        case Op::Relu: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            Tensor4<T> dx = Tensor4<T>::uninit(x.dims());
            const std::int64_t cnt = x.count();
#pragma omp parallel for schedule(static) if (cnt > 16384)
            for (std::int64_t k = 0; k < cnt; ++k) {
                dx.data()[k] = x.data()[k] > T(0) ? dy.data()[k] : T(0);
            }
            sink(n.in[0], std::move(dx));
            break;
        }
        case Op::Sigmoid: {
            Tensor4<T> dx = Tensor4<T>::uninit(out.dims());
            const std::int64_t cnt = out.count();
#pragma omp parallel for schedule(static) if (cnt > 16384)
            for (std::int64_t k = 0; k < cnt; ++k) {
                const double s = static_cast<double>(out.data()[k]);
                dx.data()[k] = static_cast<T>(s * (1.0 - s) * static_cast<double>(dy.data()[k]));
            }
            sink(n.in[0], std::move(dx));
            break;
        }
        case Op::Add:
            // grads[i] is dead once this node is processed; move it into the
            // second input and copy only for the first.
            sink(n.in[0], Tensor4<T>(dy));
            sink(n.in[1], std::move(grads[static_cast<std::size_t>(i)]));
            break;
        case Op::Mul: {
            const Tensor4<T>& a = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& b = values_[static_cast<std::size_t>(n.in[1])];
            sink(n.in[0], pahs::mul(dy, b));
            sink(n.in[1], pahs::mul(dy, a));
            break;
        }
        case Op::Scale:
            sink(n.in[0], pahs::scale(dy, n.factor));
            break;
        case Op::Concat: {
            const Dims4 ad = values_[static_cast<std::size_t>(n.in[0])].dims();
            const Dims4 bd = values_[static_cast<std::size_t>(n.in[1])].dims();
            Tensor4<T> da = Tensor4<T>::uninit(ad);
            Tensor4<T> db = Tensor4<T>::uninit(bd);
            const std::int64_t plane = ad.h * ad.w;
            for (std::int64_t nn = 0; nn < ad.b; ++nn) {
                const T* src = dy.data() + nn * (ad.c + bd.c) * plane;
                std::copy(src, src + ad.c * plane, da.data() + nn * ad.c * plane);
                std::copy(src + ad.c * plane, src + (ad.c + bd.c) * plane, db.data() + nn * bd.c * plane);
            }
            sink(n.in[0], std::move(da));
            sink(n.in[1], std::move(db));
            break;
        }
        case Op::Matmul: {
            const Tensor4<T>& a = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& b = values_[static_cast<std::size_t>(n.in[1])];
            sink(n.in[0], matmul_grad_a(dy, b, n.flag));
            sink(n.in[1], matmul_grad_b(dy, a, n.flag));
            break;
        }
        case Op::Softmax:
            sink(n.in[0], softmax_rows_grad(out, dy));
            break;
        case Op::AvgPool: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            const Dims4 xd = x.dims();
            Tensor4<T> dx = Tensor4<T>::uninit(xd);
            const double inv = 1.0 / static_cast<double>(xd.w);
            const std::int64_t rows = xd.b * xd.c * xd.h;
            for (std::int64_t r = 0; r < rows; ++r) {
                const T g = static_cast<T>(static_cast<double>(dy.data()[r]) * inv);
                T* dr = dx.data() + r * xd.w;
                for (std::int64_t j = 0; j < xd.w; ++j) {
                    dr[j] = g;
                }
            }
            sink(n.in[0], std::move(dx));
            break;
        }
        case Op::Fc: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& w = values_[static_cast<std::size_t>(n.in[1])];
            const Dims4 xd = x.dims();
            const std::int64_t rows = xd.b * xd.c * xd.h;
            const std::int64_t fin = xd.w, fout = w.dims().h;
            Tensor4<T> dx = Tensor4<T>::uninit(xd);
            Tensor4<T> dw{w.dims()};
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* gr = dy.data() + r * fout;
                const T* xr = x.data() + r * fin;
                T* dxr = dx.data() + r * fin;
                for (std::int64_t fi = 0; fi < fin; ++fi) {
                    double acc = 0.0;
                    for (std::int64_t fo = 0; fo < fout; ++fo) {
                        acc += static_cast<double>(gr[fo]) * static_cast<double>(w.data()[fo * fin + fi]);
                    }
                    dxr[fi] = static_cast<T>(acc);
                }
                for (std::int64_t fo = 0; fo < fout; ++fo) {
                    for (std::int64_t fi = 0; fi < fin; ++fi) {
                        dw.data()[fo * fin + fi] += static_cast<T>(static_cast<double>(gr[fo]) * static_cast<double>(xr[fi]));
                    }
                }
            }
            sink(n.in[0], std::move(dx));
            sink(n.in[1], std::move(dw));
            if (n.in[2] >= 0) {
                Tensor4<T> db{Dims4{1, 1, 1, fout}};
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t fo = 0; fo < fout; ++fo) {
                        db.data()[fo] += dy.data()[r * fout + fo];
                    }
                }
                sink(n.in[2], std::move(db));
            }
            break;
        }
        case Op::ScaleRows: {
            const Tensor4<T>& a = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& s = values_[static_cast<std::size_t>(n.in[1])];
            sink(n.in[0], pahs::scale_rows(dy, s));
            sink(n.in[1], sum_last_axis(pahs::mul(dy, a)));
            break;
        }
        case Op::ToTokens: {
            const Dims4 xd = values_[static_cast<std::size_t>(n.in[0])].dims();
            sink(n.in[0], pahs::grid_from_tokens(dy, xd.c, xd.h, xd.w));
            break;
        }
        case Op::ToGrid:
            sink(n.in[0], pahs::tokens_from_grid(dy));
            break;
        case Op::L1: {
            const Tensor4<T>& a = values_[static_cast<std::size_t>(n.in[0])];
            const Tensor4<T>& b = values_[static_cast<std::size_t>(n.in[1])];
            const double g = static_cast<double>(dy.data()[0]) / static_cast<double>(a.count());
            Tensor4<T> da = Tensor4<T>::uninit(a.dims());
            Tensor4<T> db = Tensor4<T>::uninit(b.dims());
            for (std::int64_t k = 0; k < a.count(); ++k) {
                const double d = static_cast<double>(a.data()[k]) - static_cast<double>(b.data()[k]);
                const double sg = d > 0.0 ? g : d < 0.0 ? -g : 0.0;
                da.data()[k] = static_cast<T>(sg);
                db.data()[k] = static_cast<T>(-sg);
            }
            sink(n.in[0], std::move(da));
            sink(n.in[1], std::move(db));
            break;
        }
        case Op::SumAll: {
            const Tensor4<T>& x = values_[static_cast<std::size_t>(n.in[0])];
            sink(n.in[0], Tensor4<T>::full(x.dims(), dy.data()[0]));
            break;
        }
        case Op::WeightedSum:
            sink(n.in[0], pahs::scale(n.constant, dy.data()[0]));
            break;
        }
        if (n.op != Op::Leaf) {
            // interior gradients are dead once their node is processed
            grads[static_cast<std::size_t>(i)] = Tensor4<T>{};
        }
    }

    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!reached[i] && nodes_[i].op == Op::Leaf) {
            grads[i] = Tensor4<T>::zeros(values_[i].dims());
        }
    }
    if (prof) {
        const char* names[] = {"Leaf","Conv","ConvT","Relu","Sigmoid","Add","Mul","Scale","Concat","Matmul","Softmax","AvgPool","Fc","ScaleRows","ToTokens","ToGrid","L1","SumAll","WeightedSum"};
        for (int k = 0; k < 19; ++k) if (op_count[k]) std::fprintf(stderr, "bwd %-12s %8.3fs n=%ld\n", names[k], op_time[k], op_count[k]);
    }
    return grads;
}

template <typename T>
Var res_block(Tape<T>& tape, Var x, Var w1, Var b1, Var w2, Var b2) {
    const std::int64_t ch = tape.value(x).dims().c;
    ConvSpec spec;
    spec.in_channels = static_cast<int>(ch);
    spec.out_channels = static_cast<int>(ch);
    const Var inner = tape.conv2d(tape.relu(tape.conv2d(x, w1, b1, spec)), w2, b2, spec);
    return tape.add(x, inner);
}

template class Tape<float>;
template class Tape<double>;
template Var res_block<float>(Tape<float>&, Var, Var, Var, Var, Var);
template Var res_block<double>(Tape<double>&, Var, Var, Var, Var, Var);

} // namespace pahs
