#ifndef PAHS_PT4_HPP
#define PAHS_PT4_HPP

#include <iosfwd>
#include <string>

#include "pahs/tensor.hpp"

namespace pahs {

// "PT4" tensor file: magic `PAHS`, version u8 = 1, dtype u8 (0 = f32,
// 1 = f64), four u32 little-endian dims (b, c, h, w), then raw little-endian
// values in row-major (b, c, h, w) order.

template <typename T>
void write_pt4(std::ostream& os, const Tensor4<T>& t);

template <typename T>
void write_pt4_file(const std::string& path, const Tensor4<T>& t);

// Reads a PT4 of either dtype, converting to T when needed. `strict_dtype`
// rejects files whose stored dtype differs from T.
template <typename T>
Tensor4<T> read_pt4(std::istream& is, const std::string& what, bool strict_dtype = false);

template <typename T>
Tensor4<T> read_pt4_file(const std::string& path, bool strict_dtype = false);

} // namespace pahs

#endif
