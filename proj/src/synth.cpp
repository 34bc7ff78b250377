#include "pahs/synth.hpp"

#include <cmath>
#include <vector>

#include "pahs/rng.hpp"

namespace pahs {

void SynthSpec::validate() const {
    require(canvas >= 8, "synth: canvas too small");
    require(shapes >= 0, "synth: negative shape count");
    require(max_disp >= 0.0, "synth: negative displacement");
    require(substeps >= 1, "synth: substeps must be >= 1");
    require(frames >= 1, "synth: frames must be >= 1");
}

namespace {

struct Shape {
    bool disc = false;
    double cx = 0, cy = 0;   // initial center
    double vx = 0, vy = 0;   // per-frame velocity
    double hx = 0, hy = 0;   // half extents (radius for discs)
    double base[3] = {0, 0, 0};
    double amp = 0;
    double fx = 0, fy = 0, phase = 0;
};

struct Scene {
    double bg_base[3] = {0, 0, 0};
    double bg_amp = 0;
    double bg_fx = 0, bg_fy = 0, bg_phase = 0;
    std::vector<Shape> shapes;
};

// Reflect p into [lo, hi] (continuous triangle-wave fold).
double fold(double p, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) {
        return lo;
    }
    double q = std::fmod(p - lo, 2.0 * span);
    if (q < 0.0) {
        q += 2.0 * span;
    }
    return lo + (q <= span ? q : 2.0 * span - q);
}

Scene build_scene(const SynthSpec& spec) {
    Rng rng(spec.seed);
    Scene sc;
    for (int ch = 0; ch < 3; ++ch) {
        sc.bg_base[ch] = rng.uniform(0.25, 0.75);
    }
    sc.bg_amp = rng.uniform(0.05, 0.15);
    sc.bg_fx = rng.uniform(0.05, 0.25);
    sc.bg_fy = rng.uniform(0.05, 0.25);
    sc.bg_phase = rng.uniform(0.0, 6.283185307179586);

    const double s = spec.canvas;
    for (int i = 0; i < spec.shapes; ++i) {
        Shape sh;
        sh.disc = rng.uniform() < 0.5;
        sh.cx = rng.uniform(0.15 * s, 0.85 * s);
        sh.cy = rng.uniform(0.15 * s, 0.85 * s);
        sh.vx = rng.uniform(-spec.max_disp, spec.max_disp);
        sh.vy = rng.uniform(-spec.max_disp, spec.max_disp);
        sh.hx = rng.uniform(s / 12.0, s / 5.0);
        sh.hy = sh.disc ? sh.hx : rng.uniform(s / 12.0, s / 5.0);
        for (int ch = 0; ch < 3; ++ch) {
            sh.base[ch] = rng.uniform(0.2, 0.8);
        }
        sh.amp = rng.uniform(0.05, 0.2);
        sh.fx = rng.uniform(0.3, 1.2);
        sh.fy = rng.uniform(0.3, 1.2);
        sh.phase = rng.uniform(0.0, 6.283185307179586);
        sc.shapes.push_back(sh);
    }
    return sc;
}

// Paint the scene at continuous time tau into a per-channel double buffer.
void render(const Scene& sc, const SynthSpec& spec, double tau, std::vector<double>& buf) {
    const std::int64_t s = spec.canvas;
    buf.assign(static_cast<std::size_t>(3 * s * s), 0.0);
    for (std::int64_t y = 0; y < s; ++y) {
        for (std::int64_t x = 0; x < s; ++x) {
            const double tex = std::sin(sc.bg_fx * x + sc.bg_fy * y + sc.bg_phase);
            for (int ch = 0; ch < 3; ++ch) {
                buf[static_cast<std::size_t>((ch * s + y) * s + x)] = sc.bg_base[ch] + sc.bg_amp * tex;
            }
        }
    }
    const double margin = spec.canvas / 10.0;
    for (const Shape& sh : sc.shapes) {
        const double cx = fold(sh.cx + sh.vx * tau, margin, spec.canvas - margin);
        const double cy = fold(sh.cy + sh.vy * tau, margin, spec.canvas - margin);
        const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cx - sh.hx)));
        const std::int64_t x1 = std::min<std::int64_t>(s - 1, static_cast<std::int64_t>(std::ceil(cx + sh.hx)));
        const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cy - sh.hy)));
        const std::int64_t y1 = std::min<std::int64_t>(s - 1, static_cast<std::int64_t>(std::ceil(cy + sh.hy)));
        for (std::int64_t y = y0; y <= y1; ++y) {
            for (std::int64_t x = x0; x <= x1; ++x) {
                const double dx = (x - cx) / sh.hx;
                const double dy = (y - cy) / sh.hy;
                const bool inside = sh.disc ? (dx * dx + dy * dy <= 1.0) : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
                if (!inside) {
                    continue;
                }
                const double tex = std::sin(sh.fx * (x - cx) + sh.fy * (y - cy) + sh.phase);
                for (int ch = 0; ch < 3; ++ch) {
                    buf[static_cast<std::size_t>((ch * s + y) * s + x)] = sh.base[ch] + sh.amp * tex;
                }
            }
        }
    }
}

double substep_offset(const SynthSpec& spec, int substep) {
    return (substep - (spec.substeps - 1) / 2.0) / static_cast<double>(spec.substeps);
}

Tensor4<float> buf_to_frame(const std::vector<double>& buf, int canvas) {
    Tensor4<float> t{Dims4{1, 3, canvas, canvas}};
    for (std::int64_t i = 0; i < t.count(); ++i) {
        t.data()[i] = static_cast<float>(buf[static_cast<std::size_t>(i)]);
    }
    return t;
}

} // namespace

Tensor4<float> synth_substep_frame(const SynthSpec& spec, int frame, int substep) {
    spec.validate();
    const Scene sc = build_scene(spec);
    std::vector<double> buf;
    const double tau = substep < 0 ? frame : frame + substep_offset(spec, substep);
    render(sc, spec, tau, buf);
    return buf_to_frame(buf, spec.canvas);
}

SynthPair generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    const Scene sc = build_scene(spec);

    SynthPair out;
    std::vector<double> buf;
    std::vector<double> acc;
    for (int t = 0; t < spec.frames; ++t) {
        render(sc, spec, t, buf);
        out.sharp.frames.push_back(buf_to_frame(buf, spec.canvas));

        acc.assign(buf.size(), 0.0);
        for (int s = 0; s < spec.substeps; ++s) {
            render(sc, spec, t + substep_offset(spec, s), buf);
            for (std::size_t i = 0; i < buf.size(); ++i) {
                // mean of substeps, matching synth_substep_frame's float
                // narrowing so the identity is testable bit-for-bit
                acc[i] += static_cast<double>(static_cast<float>(buf[i]));
            }
        }
        Tensor4<float> blur{Dims4{1, 3, spec.canvas, spec.canvas}};
        for (std::int64_t i = 0; i < blur.count(); ++i) {
            blur.data()[i] = static_cast<float>(acc[static_cast<std::size_t>(i)] / spec.substeps);
        }
        out.blur.frames.push_back(std::move(blur));

        char id[16];
        std::snprintf(id, sizeof id, "%06d", t);
        out.blur.ids.push_back(id);
        out.sharp.ids.push_back(id);
        out.blur.exts.push_back(".ppm");
        out.sharp.exts.push_back(".ppm");
    }
    return out;
}

} // namespace pahs
