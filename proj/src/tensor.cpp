#include "pahs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace pahs {

std::string Dims4::str() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
}

void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw ContractError(msg);
    }
}

void require_dims_equal(const Dims4& got, const Dims4& want, const std::string& what) {
    if (got == want) {
        return;
    }
    const char* axis = got.b != want.b   ? "batch"
                       : got.c != want.c ? "channel"
                       : got.h != want.h ? "height"
                                         : "width";
    throw ShapeError(what + ": " + std::string(axis) + " mismatch, got " + got.str() + " want " + want.str());
}

template <typename T>
std::int64_t Tensor4<T>::check_dims(const Dims4& d) {
    if (d.b < 0 || d.c < 0 || d.h < 0 || d.w < 0) {
        throw ShapeError("tensor dims must be non-negative, got " + d.str());
    }
    return d.count();
}

template <typename T>
Tensor4<T>::Tensor4(Dims4 d, std::vector<T> values) : dims_(d) {
    if (static_cast<std::int64_t>(values.size()) != check_dims(d)) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match dims " + d.str());
    }
    data_.assign(values.begin(), values.end());
}

template <typename T>
Tensor4<T> Tensor4<T>::full(Dims4 d, T v) {
    Tensor4 out{d};
    out.fill(v);
    return out;
}

template <typename T>
Tensor4<T> Tensor4<T>::scalar(T v) {
    Tensor4 out{Dims4{1, 1, 1, 1}};
    out.data()[0] = v;
    return out;
}

template <typename T>
void Tensor4<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor4<T>::all_finite() const {
    for (const T v : data_) {
        if (!std::isfinite(static_cast<double>(v))) {
            return false;
        }
    }
    return true;
}

template <typename T>
double Tensor4<T>::max_abs() const {
    double m = 0.0;
    for (const T v : data_) {
        m = std::max(m, std::abs(static_cast<double>(v)));
    }
    return m;
}

template <typename T>
bool Tensor4<T>::same_bits(const Tensor4& o) const {
    if (!(dims_ == o.dims_)) {
        return false;
    }
    if (data_.empty()) {
        return true;
    }
    return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0;
}

template class Tensor4<float>;
template class Tensor4<double>;

} // namespace pahs
