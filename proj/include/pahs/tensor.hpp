#ifndef PAHS_TENSOR_HPP
#define PAHS_TENSOR_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pahs/errors.hpp"

namespace pahs {

// std::allocator that default-initializes on resize (no zero fill). Tensor4
// zeroes explicitly where zeroing is part of the contract.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = DefaultInitAllocator<U>;
    };
    template <typename U, typename... Args>
    void construct(U* ptr, Args&&... args) {
        if constexpr (sizeof...(Args) == 0) {
            ::new (static_cast<void*>(ptr)) U;
        } else {
            ::new (static_cast<void*>(ptr)) U(std::forward<Args>(args)...);
        }
    }
};

struct Dims4 {
    std::int64_t b = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t count() const { return b * c * h * w; }
    bool operator==(const Dims4& o) const = default;
    std::string str() const;
};

// Rank-4 array in (batch, channel, height, width) order, row-major, contiguous.
template <typename T>
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Dims4 d) : dims_(d) {
        data_.resize(static_cast<std::size_t>(check_dims(d)));
        fill(T(0));
    }
    Tensor4(Dims4 d, std::vector<T> values);

    static Tensor4 zeros(Dims4 d) { return Tensor4(d); }
    static Tensor4 full(Dims4 d, T v);
    static Tensor4 scalar(T v);
    // Storage is left uninitialized; callers must write every element.
    static Tensor4 uninit(Dims4 d) {
        Tensor4 t;
        t.dims_ = d;
        t.data_.resize(static_cast<std::size_t>(check_dims(d)));
        return t;
    }

    const Dims4& dims() const { return dims_; }
    std::int64_t count() const { return dims_.count(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return ((n * dims_.c + c) * dims_.h + y) * dims_.w + x;
    }
    T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[static_cast<std::size_t>(index(n, c, y, x))];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[static_cast<std::size_t>(index(n, c, y, x))];
    }

    void fill(T v);
    bool all_finite() const;
    double max_abs() const;
    bool same_bits(const Tensor4& o) const;

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out{dims_};
        for (std::int64_t i = 0; i < count(); ++i) {
            out.data()[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        }
        return out;
    }

private:
    static std::int64_t check_dims(const Dims4& d);

    Dims4 dims_{};
    std::vector<T, DefaultInitAllocator<T>> data_;
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

void require(bool cond, const std::string& msg);

// Throws ShapeError naming the first mismatching axis.
void require_dims_equal(const Dims4& got, const Dims4& want, const std::string& what);

} // namespace pahs

#endif
