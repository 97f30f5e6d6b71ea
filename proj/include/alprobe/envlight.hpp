#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "alprobe/core.hpp"

namespace alp {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
// Inverse of softplus; radiance below 1e-6 maps to the parameter of 1e-6.
double softplus_inverse(double y);

struct EnvUv {
    double u = 0.0;
    double v = 0.0;
};

// Equirectangular convention: v = 0 is the zenith (+y), u = 0.5 looks down -z.
EnvUv dir_to_uv(const UnitVec3 &d);
UnitVec3 uv_to_dir(double u, double v);

// Generic form used by the differentiable renderer.
template <class T>
void dir_to_uv(const Vec3T<T> &d, T &u, T &v) {
    u = atan2(d.x, -d.z) * (0.5 / kPi) + 0.5;
    v = acos(clamp_value(d.y, -1.0, 1.0)) * (1.0 / kPi);
}

// The four texels a bilinear lookup touches and their weights.
struct EnvFootprint {
    std::array<uint32_t, 4> texel{};
    std::array<double, 4> weight{};
};

// HDR radiance on a W x H latitude/longitude grid (W = 2H). Texels are stored
// as unconstrained parameters theta with radiance softplus(theta).
class EnvMap {
public:
    EnvMap() = default;
    // Throws InvalidResolution unless width == 2 * height and height >= 1.
    EnvMap(int width, int height);

    static EnvMap constant(int width, int height, const Rgb &radiance);
    static EnvMap from_image(const HdrImage &img);
    HdrImage to_image() const;

    int width() const { return width_; }
    int height() const { return height_; }
    size_t texel_count() const { return static_cast<size_t>(width_) * height_; }

    Rgb radiance(int x, int y) const { return radiance_[static_cast<size_t>(y) * width_ + x]; }
    Rgb radiance(size_t texel) const { return radiance_[texel]; }
    void set_radiance(int x, int y, const Rgb &c);

    // 3 parameters per texel, row-major, channel-interleaved.
    const std::vector<double> &params() const { return params_; }
    void set_params(const std::vector<double> &params);
    // d radiance / d theta for parameter index i.
    double param_slope(size_t i) const { return slope_[i]; }

    // Texel (i, j) has its center at ((i + 0.5) / W, (j + 0.5) / H). u wraps,
    // v clamps.
    EnvFootprint footprint(double u, double v) const;
    Rgb lookup(const UnitVec3 &d) const;

    // Bilinear lookup differentiable in the direction; the footprint of the
    // value is reported for parameter gradients.
    template <class T>
    Vec3T<T> lookup(const Vec3T<T> &d, EnvFootprint *fp = nullptr) const;

    // Direction at the center of a texel and the solid angle it covers.
    UnitVec3 texel_direction(size_t texel) const;
    double texel_solid_angle(int row) const;

private:
    void decode(size_t texel);

    int width_ = 0;
    int height_ = 0;
    std::vector<double> params_;
    std::vector<Rgb> radiance_;
    std::vector<double> slope_;
};

inline Rgb sample_env(const EnvMap &e, const UnitVec3 &d) { return e.lookup(d); }

// Mean over n_pairs of |L(w) - L(w')|_1 with w uniform on the sphere and w'
// obtained by rotating w about a random tangent axis by an N(0, sigma) angle.
// When grad is non-null it receives d loss / d params (same layout as params).
double smoothness_loss(const EnvMap &e, int n_pairs, double sigma, uint64_t seed,
                       std::vector<double> *grad = nullptr);

template <class T>
Vec3T<T> EnvMap::lookup(const Vec3T<T> &d, EnvFootprint *fp) const {
    T u, v;
    dir_to_uv(d, u, v);
    T x = u * static_cast<double>(width_) - 0.5;
    T y = v * static_cast<double>(height_) - 0.5;
    double xf = std::floor(value(x));
    double yf = std::floor(value(y));
    T fx = x - xf;
    T fy = y - yf;
    int i0 = static_cast<int>(xf);
    int j0 = static_cast<int>(yf);
    int i1 = i0 + 1;
    int j1 = j0 + 1;
    i0 = ((i0 % width_) + width_) % width_;
    i1 = ((i1 % width_) + width_) % width_;
    j0 = std::clamp(j0, 0, height_ - 1);
    j1 = std::clamp(j1, 0, height_ - 1);
    const Rgb &c00 = radiance_[static_cast<size_t>(j0) * width_ + i0];
    const Rgb &c10 = radiance_[static_cast<size_t>(j0) * width_ + i1];
    const Rgb &c01 = radiance_[static_cast<size_t>(j1) * width_ + i0];
    const Rgb &c11 = radiance_[static_cast<size_t>(j1) * width_ + i1];
    T w00 = (1.0 - fx) * (1.0 - fy);
    T w10 = fx * (1.0 - fy);
    T w01 = (1.0 - fx) * fy;
    T w11 = fx * fy;
    if (fp) {
        fp->texel = {static_cast<uint32_t>(j0 * width_ + i0), static_cast<uint32_t>(j0 * width_ + i1),
                     static_cast<uint32_t>(j1 * width_ + i0), static_cast<uint32_t>(j1 * width_ + i1)};
        fp->weight = {value(w00), value(w10), value(w01), value(w11)};
    }
    Vec3T<T> r;
    for (int c = 0; c < 3; c++) r[c] = w00 * c00[c] + w10 * c10[c] + w01 * c01[c] + w11 * c11[c];
    return r;
}

} // namespace alp
