#include "pahs/pt4.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace pahs {

static_assert(std::endian::native == std::endian::little, "PT4 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'A', 'H', 'S'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, float> ? 0 : 1;
}

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

} // namespace

template <typename T>
void write_pt4(std::ostream& os, const Tensor4<T>& t) {
    os.write(kMagic, 4);
    const std::uint8_t ver = kVersion;
    const std::uint8_t dt = dtype_code<T>();
    os.write(reinterpret_cast<const char*>(&ver), 1);
    os.write(reinterpret_cast<const char*>(&dt), 1);
    const Dims4& d = t.dims();
    for (const std::int64_t v : {d.b, d.c, d.h, d.w}) {
        if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
            throw IoError("PT4 dim out of u32 range: " + d.str());
        }
        write_u32(os, static_cast<std::uint32_t>(v));
    }
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.count() * sizeof(T)));
    if (!os) {
        throw IoError("PT4 write failed");
    }
}

template <typename T>
void write_pt4_file(const std::string& path, const Tensor4<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open for write: " + path);
    }
    write_pt4(os, t);
}

template <typename T>
Tensor4<T> read_pt4(std::istream& is, const std::string& what, bool strict_dtype) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a PT4 file (bad magic): " + what);
    }
    std::uint8_t ver = 0;
    std::uint8_t dt = 0;
    is.read(reinterpret_cast<char*>(&ver), 1);
    is.read(reinterpret_cast<char*>(&dt), 1);
    if (!is || ver != kVersion) {
        throw IoError("unsupported PT4 version in " + what);
    }
    if (dt > 1) {
        throw IoError("unknown PT4 dtype in " + what);
    }
    Dims4 d;
    d.b = read_u32(is);
    d.c = read_u32(is);
    d.h = read_u32(is);
    d.w = read_u32(is);
    if (!is) {
        throw IoError("truncated PT4 header in " + what);
    }
    if (strict_dtype && dt != dtype_code<T>()) {
        throw IoError("PT4 dtype mismatch in " + what);
    }

    auto read_body = [&](auto tag) {
        using U = decltype(tag);
        Tensor4<U> t{d};
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.count() * sizeof(U)));
        if (!is) {
            throw IoError("truncated PT4 body in " + what);
        }
        return t;
    };

    if (dt == dtype_code<T>()) {
        return read_body(T{});
    }
    if (dt == 0) {
        return read_body(float{}).template cast<T>();
    }
    return read_body(double{}).template cast<T>();
}

template <typename T>
Tensor4<T> read_pt4_file(const std::string& path, bool strict_dtype) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open: " + path);
    }
    return read_pt4<T>(is, path, strict_dtype);
}

template void write_pt4<float>(std::ostream&, const Tensor4<float>&);
template void write_pt4<double>(std::ostream&, const Tensor4<double>&);
template void write_pt4_file<float>(const std::string&, const Tensor4<float>&);
template void write_pt4_file<double>(const std::string&, const Tensor4<double>&);
template Tensor4<float> read_pt4<float>(std::istream&, const std::string&, bool);
template Tensor4<double> read_pt4<double>(std::istream&, const std::string&, bool);
template Tensor4<float> read_pt4_file<float>(const std::string&, bool);
template Tensor4<double> read_pt4_file<double>(const std::string&, bool);

} // namespace pahs
