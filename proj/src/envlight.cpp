#include "alprobe/envlight.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace alp {

double softplus_inverse(double y) {
    y = std::max(y, 1e-6);
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

EnvUv dir_to_uv(const UnitVec3 &d) {
    double u, v;
    dir_to_uv(d.vec(), u, v);
    if (u >= 1.0) u -= 1.0;
    return {u, v};
}

UnitVec3 uv_to_dir(double u, double v) {
    double phi = (u - 0.5) * 2.0 * kPi;
    double theta = v * kPi;
    double st = std::sin(theta);
    return UnitVec3::normalize({st * std::sin(phi), std::cos(theta), -st * std::cos(phi)});
}

EnvMap::EnvMap(int width, int height) : width_(width), height_(height) {
    if (height < 1 || width != 2 * height)
        throw Error(ErrorCode::InvalidResolution, "environment map must be 2H x H with H >= 1, got " +
                                                      std::to_string(width) + "x" + std::to_string(height));
    params_.assign(3 * texel_count(), softplus_inverse(1e-6));
    radiance_.assign(texel_count(), Rgb{});
    slope_.assign(params_.size(), 0.0);
    for (size_t t = 0; t < texel_count(); t++) decode(t);
}

EnvMap EnvMap::constant(int width, int height, const Rgb &radiance) {
    EnvMap e(width, height);
    for (int y = 0; y < height; y++)
        for (int x = 0; x < width; x++) e.set_radiance(x, y, radiance);
    return e;
}

EnvMap EnvMap::from_image(const HdrImage &img) {
    EnvMap e(img.width(), img.height());
    for (int y = 0; y < img.height(); y++)
        for (int x = 0; x < img.width(); x++) e.set_radiance(x, y, img.at(x, y));
    return e;
}

HdrImage EnvMap::to_image() const {
    HdrImage img(width_, height_);
    for (int y = 0; y < height_; y++)
        for (int x = 0; x < width_; x++) img.set(x, y, radiance(x, y));
    return img;
}

void EnvMap::set_radiance(int x, int y, const Rgb &c) {
    size_t t = static_cast<size_t>(y) * width_ + x;
    for (int k = 0; k < 3; k++) params_[3 * t + k] = softplus_inverse(c[k]);
    decode(t);
}

void EnvMap::set_params(const std::vector<double> &params) {
    if (params.size() != params_.size()) throw Error(ErrorCode::DimensionMismatch, "environment parameter count mismatch");
    params_ = params;
    for (size_t t = 0; t < texel_count(); t++) decode(t);
}

void EnvMap::decode(size_t t) {
    radiance_[t] = {softplus(params_[3 * t]), softplus(params_[3 * t + 1]), softplus(params_[3 * t + 2])};
    for (int k = 0; k < 3; k++) slope_[3 * t + k] = sigmoid(params_[3 * t + k]);
}

EnvFootprint EnvMap::footprint(double u, double v) const {
    EnvFootprint fp;
    Vec3 d = uv_to_dir(u, v);
    lookup(d, &fp);
    return fp;
}

Rgb EnvMap::lookup(const UnitVec3 &d) const { return lookup(d.vec(), nullptr); }

UnitVec3 EnvMap::texel_direction(size_t texel) const {
    int x = static_cast<int>(texel % width_);
    int y = static_cast<int>(texel / width_);
    return uv_to_dir((x + 0.5) / width_, (y + 0.5) / height_);
}

double EnvMap::texel_solid_angle(int row) const {
    double t0 = kPi * row / height_;
    double t1 = kPi * (row + 1) / height_;
    return (2.0 * kPi / width_) * (std::cos(t0) - std::cos(t1));
}

double smoothness_loss(const EnvMap &e, int n_pairs, double sigma, uint64_t seed, std::vector<double> *grad) {
    if (n_pairs < 1) throw Error(ErrorCode::InvalidArgument, "smoothness_loss needs n_pairs >= 1");
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothness_loss needs sigma > 0");
    if (grad) grad->assign(e.params().size(), 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, sigma);
    double total = 0.0;
    const double inv_n = 1.0 / n_pairs;
    for (int k = 0; k < n_pairs; k++) {
        double z = 1.0 - 2.0 * uni(rng);
        double phi = 2.0 * kPi * uni(rng);
        double psi = 2.0 * kPi * uni(rng);
        double angle = gauss(rng);
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 w{s * std::cos(phi), z, s * std::sin(phi)};
        Vec3 a = std::abs(w.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 t1 = normalize(cross(w, a));
        Vec3 t2 = cross(w, t1);
        Vec3 axis = t1 * std::cos(psi) + t2 * std::sin(psi);
        Vec3 w2 = rotate(Quaternion::from_axis_angle(axis, angle), w);
        EnvFootprint f1, f2;
        Rgb l1 = e.lookup(w, &f1);
        Rgb l2 = e.lookup(w2, &f2);
        for (int c = 0; c < 3; c++) {
            double diff = l1[c] - l2[c];
            total += std::abs(diff);
            if (!grad || diff == 0.0) continue;
            double sgn = (diff > 0.0 ? 1.0 : -1.0) * inv_n;
            for (int q = 0; q < 4; q++) {
                size_t p1 = 3 * f1.texel[q] + c;
                size_t p2 = 3 * f2.texel[q] + c;
                (*grad)[p1] += sgn * f1.weight[q] * e.param_slope(p1);
                (*grad)[p2] -= sgn * f2.weight[q] * e.param_slope(p2);
            }
        }
    }
    return total * inv_n;
}

} // namespace alp
