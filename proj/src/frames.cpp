#include "pahs/frames.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "pahs/pt4.hpp"

namespace fs = std::filesystem;

namespace pahs {

Tensor4<float> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open: " + path);
    }
    std::string magic;
    is >> magic;
    if (magic != "P6") {
        throw IoError("not a binary P6 ppm: " + path);
    }
    auto next_int = [&]() {
        // skip whitespace and '#' comment lines
        for (;;) {
            const int ch = is.peek();
            if (ch == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(ch)) {
                is.get();
            } else {
                break;
            }
        }
        std::int64_t v = 0;
        is >> v;
        return v;
    };
    const std::int64_t w = next_int();
    const std::int64_t h = next_int();
    const std::int64_t maxval = next_int();
    if (!is || w <= 0 || h <= 0 || maxval != 255) {
        throw IoError("unsupported ppm header in " + path);
    }
    is.get(); // single whitespace before the raster
    std::vector<unsigned char> raw(static_cast<std::size_t>(3 * w * h));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) {
        throw IoError("truncated ppm raster in " + path);
    }
    Tensor4<float> img{Dims4{1, 3, h, w}};
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                img.at(0, c, y, x) = static_cast<float>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
            }
        }
    }
    return img;
}

void write_ppm(const std::string& path, const Tensor4<float>& img) {
    const Dims4 d = img.dims();
    if (d.b != 1 || d.c != 3) {
        throw ShapeError("write_ppm: expected (1,3,H,W), got " + d.str());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open for write: " + path);
    }
    os << "P6\n" << d.w << " " << d.h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(3 * d.h * d.w));
    for (std::int64_t y = 0; y < d.h; ++y) {
        for (std::int64_t x = 0; x < d.w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(0, c, y, x), 0.0f, 1.0f);
                raw[static_cast<std::size_t>((y * d.w + x) * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) {
        throw IoError("ppm write failed: " + path);
    }
}

FrameSequence<float> load_frame_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const std::string ext = entry.path().extension().string();
        if (ext == ".ppm" || ext == ".pt4") {
            files.push_back(entry.path());
        }
    }
    require(!files.empty(), "no frames found in " + dir);
    std::sort(files.begin(), files.end());

    FrameSequence<float> seq;
    for (const auto& f : files) {
        const std::string ext = f.extension().string();
        seq.frames.push_back(ext == ".ppm" ? read_ppm(f.string()) : read_pt4_file<float>(f.string()));
        seq.ids.push_back(f.stem().string());
        seq.exts.push_back(ext);
    }
    seq.validate();
    return seq;
}

void save_frames(const std::string& out_dir, const FrameSequence<float>& like,
                 const std::vector<Tensor4<float>>& latents) {
    require(static_cast<std::int64_t>(latents.size()) == like.size(),
            "save_frames: latent count does not match frame count");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + out_dir + ": " + ec.message());
    }
    for (std::size_t i = 0; i < latents.size(); ++i) {
        const std::string ext = i < like.exts.size() ? like.exts[i] : ".ppm";
        const std::string path = out_dir + "/" + like.id(static_cast<std::int64_t>(i)) + ext;
        if (ext == ".ppm") {
            write_ppm(path, latents[i]);
        } else {
            write_pt4_file(path, latents[i]);
        }
    }
}

} // namespace pahs
