#ifndef PAHS_TAPE_HPP
#define PAHS_TAPE_HPP

#include <cstdint>
#include <vector>

#include "pahs/kernels.hpp"
#include "pahs/tensor.hpp"

namespace pahs {

using Var = std::int32_t;

// Reverse-mode tape. Operations execute eagerly and append one node each, so
// the record order is already topological; backward() walks it once in
// reverse. One forward/backward pass owns one tape.
template <typename T>
class Tape {
public:
    Var leaf(Tensor4<T> v);

    Var conv2d(Var x, Var w, Var b, const ConvSpec& spec);
    Var conv2d_transpose(Var x, Var w, Var b, const ConvSpec& spec);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, T factor);
    Var concat_channels(Var a, Var b);
    Var matmul(Var a, Var b, bool transpose_b = false);
    Var softmax_rows(Var m);
    Var avg_pool_rows(Var m);
    Var fully_connected(Var x, Var w, Var b);
    Var scale_rows(Var a, Var s);
    Var tokens_from_grid(Var x);
    Var grid_from_tokens(Var t, std::int64_t channels, std::int64_t gh, std::int64_t gw);
    Var l1_loss(Var a, Var b);
    Var sum_all(Var x);
    // Scalar loss sum(x * weights) with a constant cotangent; test utility.
    Var weighted_sum(Var x, Tensor4<T> weights);

    const Tensor4<T>& value(Var v) const;
    std::int64_t node_count() const { return static_cast<std::int64_t>(nodes_.size()); }

    // Hash of every relu / |.| branch decision on the tape. Finite-difference
    // checks compare the signatures of the +h and -h evaluations and skip
    // samples that straddle a kink, where central differences are not a valid
    // derivative oracle.
    std::uint64_t kink_signature() const;

    // Gradients indexed by Var. Every leaf gets a tensor (exact zeros when
    // the loss does not depend on it); interior entries are released as the
    // reverse sweep passes them.
    std::vector<Tensor4<T>> backward(Var loss) const;

private:
    enum class Op : std::uint8_t {
        Leaf,
        Conv,
        ConvT,
        Relu,
        Sigmoid,
        Add,
        Mul,
        Scale,
        Concat,
        Matmul,
        Softmax,
        AvgPool,
        Fc,
        ScaleRows,
        ToTokens,
        ToGrid,
        L1,
        SumAll,
        WeightedSum,
    };

    struct Node {
        Op op = Op::Leaf;
        Var in[3] = {-1, -1, -1};
        ConvSpec spec{};
        bool flag = false;
        std::int64_t aux[3] = {0, 0, 0};
        T factor = T(0);
        Tensor4<T> constant;
    };

    Var push(Node n, Tensor4<T> value);
    Var check(Var v, const char* who) const;

    std::vector<Node> nodes_;
    std::vector<Tensor4<T>> values_;
};

// x + conv2(relu(conv1(x))), all 3x3 stride 1 pad 1 at the block width.
template <typename T>
Var res_block(Tape<T>& tape, Var x, Var w1, Var b1, Var w2, Var b2);

} // namespace pahs

#endif
