#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "pahs/rng.hpp"
#include "pahs/tape.hpp"

using namespace pahs;

namespace {

Tensor4d random_tensor(Dims4 d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor4d t{d};
    for (std::int64_t i = 0; i < t.count(); ++i) {
        t.data()[i] = rng.uniform(lo, hi);
    }
    return t;
}

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

double eval_loss(const std::vector<Tensor4d>& leaves, const Builder& build) {
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const auto& t : leaves) {
        vars.push_back(tape.leaf(t));
    }
    return tape.value(build(tape, vars)).data()[0];
}

// Central-difference check of every element of every leaf, 64-bit.
double max_fd_rel_err(std::vector<Tensor4d> leaves, const Builder& build, double h = 1e-5) {
    Tape<double> tape;
    std::vector<Var> vars;
    for (const auto& t : leaves) {
        vars.push_back(tape.leaf(t));
    }
    const Var loss = build(tape, vars);
    const auto grads = tape.backward(loss);

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (std::int64_t i = 0; i < leaves[li].count(); ++i) {
            const double keep = leaves[li].data()[i];
            leaves[li].data()[i] = keep + h;
            const double up = eval_loss(leaves, build);
            leaves[li].data()[i] = keep - h;
            const double dn = eval_loss(leaves, build);
            leaves[li].data()[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double bp = grads[static_cast<std::size_t>(vars[li])].data()[i];
            const double err = std::abs(fd - bp);
            const double rel = err / std::max({std::abs(fd), std::abs(bp), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

Tensor4d cotangent(Dims4 d, Rng& rng) { return random_tensor(d, rng, -1.0, 1.0); }

} // namespace

TEST_CASE("sum of squares has gradient 2x") {
    Rng rng(1);
    const Tensor4d x = random_tensor(Dims4{1, 2, 3, 4}, rng);
    Tape<double> tape;
    const Var xv = tape.leaf(x);
    const Var loss = tape.sum_all(tape.mul(xv, xv));
    const auto grads = tape.backward(loss);
    for (std::int64_t i = 0; i < x.count(); ++i) {
        CHECK(grads[static_cast<std::size_t>(xv)].data()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("finite differences: conv2d input, weight, bias") {
    Rng rng(2);
    ConvSpec spec;
    spec.in_channels = 2;
    spec.out_channels = 3;
    for (int seed = 0; seed < 5; ++seed) {
        const Tensor4d x = random_tensor(Dims4{1, 2, 5, 5}, rng);
        const Tensor4d w = random_tensor(spec.weight_dims(), rng);
        const Tensor4d b = random_tensor(spec.bias_dims(), rng);
        const Tensor4d r = cotangent(Dims4{1, 3, 5, 5}, rng);
        const double err = max_fd_rel_err({x, w, b}, [&](Tape<double>& t, const std::vector<Var>& v) {
            return t.weighted_sum(t.conv2d(v[0], v[1], v[2], spec), r);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("finite differences: strided conv and transposed conv") {
    Rng rng(3);
    ConvSpec down;
    down.in_channels = 2;
    down.out_channels = 2;
    down.stride = 2;
    ConvSpec up;
    up.in_channels = 2;
    up.out_channels = 3;
    up.stride = 2;
    up.transposed = true;
    for (int seed = 0; seed < 5; ++seed) {
        const Tensor4d x = random_tensor(Dims4{1, 2, 6, 6}, rng);
        const Tensor4d wd = random_tensor(down.weight_dims(), rng);
        const Tensor4d wu = random_tensor(up.weight_dims(), rng);
        const Tensor4d bu = random_tensor(up.bias_dims(), rng);
        const Tensor4d r = cotangent(Dims4{1, 3, 6, 6}, rng);
        const double err = max_fd_rel_err({x, wd, wu, bu}, [&](Tape<double>& t, const std::vector<Var>& v) {
            const Var mid = t.conv2d(v[0], v[1], -1, down);
            return t.weighted_sum(t.conv2d_transpose(mid, v[2], v[3], up), r);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("finite differences: pointwise and matrix ops") {
    Rng rng(4);
    for (int seed = 0; seed < 5; ++seed) {
        // relu needs inputs away from the kink
        Tensor4d x = random_tensor(Dims4{1, 1, 4, 6}, rng);
        for (std::int64_t i = 0; i < x.count(); ++i) {
            if (std::abs(x.data()[i]) < 1e-2) {
                x.data()[i] += 0.05;
            }
        }
        const Tensor4d r = cotangent(x.dims(), rng);
        CHECK(max_fd_rel_err({x}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.relu(v[0]), r);
              }) < 1e-4);
        CHECK(max_fd_rel_err({x}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.sigmoid(v[0]), r);
              }) < 1e-4);
        CHECK(max_fd_rel_err({x}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.softmax_rows(v[0]), r);
              }) < 1e-4);
        const Tensor4d rp = cotangent(Dims4{1, 1, 4, 1}, rng);
        CHECK(max_fd_rel_err({x}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.avg_pool_rows(v[0]), rp);
              }) < 1e-4);

        const Tensor4d a = random_tensor(Dims4{1, 2, 3, 4}, rng);
        const Tensor4d b = random_tensor(Dims4{1, 2, 4, 5}, rng);
        const Tensor4d bt = random_tensor(Dims4{1, 2, 5, 4}, rng);
        const Tensor4d rm = cotangent(Dims4{1, 2, 3, 5}, rng);
        CHECK(max_fd_rel_err({a, b}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.matmul(v[0], v[1]), rm);
              }) < 1e-4);
        CHECK(max_fd_rel_err({a, bt}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.matmul(v[0], v[1], true), rm);
              }) < 1e-4);

        const Tensor4d s = random_tensor(Dims4{1, 2, 3, 1}, rng);
        const Tensor4d a2 = random_tensor(Dims4{1, 2, 3, 4}, rng);
        const Tensor4d rs = cotangent(a2.dims(), rng);
        CHECK(max_fd_rel_err({a2, s}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.scale_rows(v[0], v[1]), rs);
              }) < 1e-4);

        const Tensor4d fx = random_tensor(Dims4{1, 1, 5, 3}, rng);
        const Tensor4d fw = random_tensor(Dims4{1, 1, 2, 3}, rng);
        const Tensor4d fb = random_tensor(Dims4{1, 1, 1, 2}, rng);
        const Tensor4d rf = cotangent(Dims4{1, 1, 5, 2}, rng);
        CHECK(max_fd_rel_err({fx, fw, fb}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.fully_connected(v[0], v[1], v[2]), rf);
              }) < 1e-4);
    }
}

TEST_CASE("finite differences: concat, tokens, l1") {
    Rng rng(5);
    for (int seed = 0; seed < 5; ++seed) {
        const Tensor4d a = random_tensor(Dims4{2, 2, 3, 3}, rng);
        const Tensor4d b = random_tensor(Dims4{2, 3, 3, 3}, rng);
        const Tensor4d rc = cotangent(Dims4{2, 5, 3, 3}, rng);
        CHECK(max_fd_rel_err({a, b}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.concat_channels(v[0], v[1]), rc);
              }) < 1e-4);

        const Tensor4d g = random_tensor(Dims4{2, 3, 2, 2}, rng);
        const Tensor4d rt = cotangent(Dims4{2, 1, 4, 3}, rng);
        CHECK(max_fd_rel_err({g}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.weighted_sum(t.tokens_from_grid(v[0]), rt);
              }) < 1e-4);

        // keep |a - b| away from the absolute-value kink
        Tensor4d u = random_tensor(Dims4{1, 2, 3, 3}, rng);
        Tensor4d v2 = random_tensor(Dims4{1, 2, 3, 3}, rng);
        for (std::int64_t i = 0; i < u.count(); ++i) {
            if (std::abs(u.data()[i] - v2.data()[i]) < 1e-2) {
                u.data()[i] += 0.05;
            }
        }
        CHECK(max_fd_rel_err({u, v2}, [&](Tape<double>& t, const std::vector<Var>& v) {
                  return t.l1_loss(v[0], v[1]);
              }) < 1e-4);
    }
}

TEST_CASE("res_block with zero inner weights is the identity") {
    Rng rng(6);
    const Tensor4d x = random_tensor(Dims4{1, 4, 6, 6}, rng);
    Tape<double> tape;
    const Var xv = tape.leaf(x);
    const Var w1 = tape.leaf(Tensor4d{Dims4{4, 4, 3, 3}});
    const Var b1 = tape.leaf(Tensor4d{Dims4{1, 4, 1, 1}});
    const Var w2 = tape.leaf(Tensor4d{Dims4{4, 4, 3, 3}});
    const Var b2 = tape.leaf(Tensor4d{Dims4{1, 4, 1, 1}});
    const Var y = res_block(tape, xv, w1, b1, w2, b2);
    CHECK(tape.value(y).same_bits(x));
}

TEST_CASE("res_block matches explicit kernel composition and passes fd") {
    Rng rng(7);
    const Tensor4d x = random_tensor(Dims4{1, 3, 5, 5}, rng);
    const Tensor4d w1 = random_tensor(Dims4{3, 3, 3, 3}, rng);
    const Tensor4d b1 = random_tensor(Dims4{1, 3, 1, 1}, rng);
    const Tensor4d w2 = random_tensor(Dims4{3, 3, 3, 3}, rng);
    const Tensor4d b2 = random_tensor(Dims4{1, 3, 1, 1}, rng);

    ConvSpec spec;
    spec.in_channels = 3;
    spec.out_channels = 3;
    const Tensor4d want = add(x, conv2d(relu(conv2d(x, w1, &b1, spec)), w2, &b2, spec));

    Tape<double> tape;
    const Var y = res_block(tape, tape.leaf(x), tape.leaf(w1), tape.leaf(b1), tape.leaf(w2), tape.leaf(b2));
    CHECK(tape.value(y).same_bits(want));

    const Tensor4d r = cotangent(x.dims(), rng);
    CHECK(max_fd_rel_err({x, w1, b1, w2, b2}, [&](Tape<double>& t, const std::vector<Var>& v) {
              return t.weighted_sum(res_block(t, v[0], v[1], v[2], v[3], v[4]), r);
          }) < 1e-4);
}

TEST_CASE("softmax backward: constant per-row upstream gradient vanishes") {
    Rng rng(8);
    const Tensor4d x = random_tensor(Dims4{1, 1, 3, 6}, rng, -3.0, 3.0);
    Tape<double> tape;
    const Var xv = tape.leaf(x);
    const Var sm = tape.softmax_rows(xv);
    Tensor4d r{Dims4{1, 1, 3, 6}};
    const double row_consts[3] = {2.0, -0.5, 1.25};
    for (std::int64_t row = 0; row < 3; ++row) {
        for (std::int64_t j = 0; j < 6; ++j) {
            r.at(0, 0, row, j) = row_consts[row];
        }
    }
    const Var loss = tape.weighted_sum(sm, r);
    const auto grads = tape.backward(loss);
    const auto& dx = grads[static_cast<std::size_t>(xv)];
    for (std::int64_t row = 0; row < 3; ++row) {
        double row_sum = 0.0;
        for (std::int64_t j = 0; j < 6; ++j) {
            CHECK(std::abs(dx.at(0, 0, row, j)) < 1e-12);
            row_sum += dx.at(0, 0, row, j);
        }
        CHECK(std::abs(row_sum) < 1e-12);
    }
}

TEST_CASE("unused inputs get exactly zero gradient") {
    Rng rng(9);
    Tape<double> tape;
    const Var used = tape.leaf(random_tensor(Dims4{1, 1, 2, 2}, rng));
    const Var unused = tape.leaf(random_tensor(Dims4{1, 3, 4, 4}, rng));
    const Var loss = tape.sum_all(tape.mul(used, used));
    const auto grads = tape.backward(loss);
    CHECK(grads[static_cast<std::size_t>(unused)].dims() == Dims4{1, 3, 4, 4});
    CHECK(grads[static_cast<std::size_t>(unused)].max_abs() == 0.0);
}

TEST_CASE("non-scalar loss is rejected") {
    Rng rng(10);
    Tape<double> tape;
    const Var x = tape.leaf(random_tensor(Dims4{1, 1, 2, 2}, rng));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
    Rng rng(11);
    const Tensor4d x = random_tensor(Dims4{1, 1, 2, 3}, rng);
    Tape<double> tape;
    const Var xv = tape.leaf(x);
    const Var y = tape.add(xv, xv);
    const Var loss = tape.sum_all(y);
    const auto grads = tape.backward(loss);
    for (std::int64_t i = 0; i < x.count(); ++i) {
        CHECK(grads[static_cast<std::size_t>(xv)].data()[i] == 2.0);
    }
}
