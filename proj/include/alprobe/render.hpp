#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "alprobe/brdf.hpp"
#include "alprobe/bvh.hpp"
#include "alprobe/envlight.hpp"
#include "alprobe/mesh.hpp"

namespace alp {

// Multi-channel texture over the uv square, bilinear with clamped edges.
// Texel (i, j) has its center at ((i + 0.5) / W, (j + 0.5) / H).
struct Texture {
    int width = 1;
    int height = 1;
    int channels = 1;
    std::vector<double> data; // row-major, channel-interleaved

    static Texture constant(int width, int height, const std::vector<double> &value);
    size_t texel_count() const { return static_cast<size_t>(width) * height; }
    double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double &at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }

    // Bilinear weights; texel indices are texel numbers (not data offsets).
    template <class T>
    void bilinear(const T &u, const T &v, std::array<uint32_t, 4> &texel, std::array<T, 4> &weight) const;
    double sample(double u, double v, int c) const;
};

// The pre-acquired light probe: geometry plus spatially-varying metallic
// material and the soft-visibility texture.
struct AlpModel {
    std::shared_ptr<const TriMesh> mesh;
    std::shared_ptr<const MeshAccel> accel;
    Texture albedo;     // 3 channels in [0, 1]
    Texture roughness;  // 1 channel in [kMinRoughness, 1]
    Texture visibility; // 1 channel in [0, 1]
    Quaternion q_ref;   // front-facing canonical orientation

    // Validates mesh and textures and builds the acceleration structure.
    static AlpModel make(TriMesh mesh, Texture albedo, Texture roughness, Texture visibility,
                         Quaternion q_ref = Quaternion::identity());
    // Spatially constant material on res x res textures.
    static AlpModel uniform(TriMesh mesh, const Rgb &albedo, double roughness, double visibility = 1.0,
                            int res = 1);
    void validate() const;
};

struct SilhouetteEdge {
    uint32_t v0 = 0;
    uint32_t v1 = 0;
};

struct GPixel {
    bool hit = false;
    uint32_t triangle = 0;
    double b1 = 0.0;
    double b2 = 0.0;
    Vec3 position;
    UnitVec3 normal;
    Uv uv;
    double coverage = 0.0;
    int32_t edge = -1; // nearest silhouette edge when inside the soft band
};

// Deferred-shading buffer. Keeps the pose and camera it was built with so
// that shading can re-derive geometry for differentiation.
struct GBuffer {
    int width = 0;
    int height = 0;
    PoseScale pose;
    PinholeCamera camera;
    double aa_width = 1.5;
    std::vector<GPixel> pixels;
    std::vector<SilhouetteEdge> silhouette;

    const GPixel &at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    MaskImage mask() const;
};

struct RenderOutput {
    HdrImage image;
    MaskImage mask;
    std::vector<int> sample_count; // per pixel; spp where shaded, 0 elsewhere
};

struct RenderSettings {
    int spp = 64;
    uint64_t seed = 0;
    double aa_width = 1.5;
    int threads = 0; // 0: all hardware threads (capped by ALPROBE_THREADS)
};

// Primary visibility by ray casting through pixel centers. Hit pixels within
// aa_width of a projected silhouette edge get coverage distance / aa_width.
GBuffer rasterize(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, double aa_width,
                  int threads = 0);
GBuffer rasterize(const TriMesh &mesh, const PoseScale &pose, const PinholeCamera &cam, double aa_width,
                  int threads = 0);

// Monte Carlo image-based lighting with VNDF sampling, modulated by the
// visibility texture and the coverage. Pixel streams are keyed by
// (seed, pixel index).
RenderOutput shade(const GBuffer &g, const AlpModel &model, const EnvMap &env, int spp, uint64_t seed,
                   int threads = 0);

RenderOutput render(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, const EnvMap &env,
                    const RenderSettings &settings);

struct GradientRequest {
    bool env = false;
    bool pose = false;
    bool material = false;
};

// Gradients of sum(adjoint_image * image + adjoint_mask * mask). Rotation
// gradients are with respect to a world-frame rotation vector applied on the
// left (q <- exp(delta) q); scale gradients are with respect to log(scale).
struct Gradients {
    std::vector<double> env; // same layout as EnvMap::params
    Vec3 translation;
    Vec3 rotation;
    double log_scale = 0.0;
    std::vector<double> albedo;     // same layout as the texture data
    std::vector<double> roughness;
    std::vector<double> visibility;
};

// Runs the forward estimator and its derivative with the same sample
// sequence. `forward`, when given, receives the rendered output, which is
// bit-identical to render() with the same settings.
Gradients render_with_gradients(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam,
                                const EnvMap &env, const RenderSettings &settings, const HdrImage &adjoint_image,
                                const MaskImage &adjoint_mask, const GradientRequest &request,
                                RenderOutput *forward = nullptr);

template <class T>
void Texture::bilinear(const T &u, const T &v, std::array<uint32_t, 4> &texel, std::array<T, 4> &weight) const {
    T x = clamp_value(u, 0.0, 1.0) * static_cast<double>(width) - 0.5;
    T y = clamp_value(v, 0.0, 1.0) * static_cast<double>(height) - 0.5;
    double xf = std::floor(value(x));
    double yf = std::floor(value(y));
    T fx = x - xf;
    T fy = y - yf;
    int i0 = std::clamp(static_cast<int>(xf), 0, width - 1);
    int i1 = std::clamp(static_cast<int>(xf) + 1, 0, width - 1);
    int j0 = std::clamp(static_cast<int>(yf), 0, height - 1);
    int j1 = std::clamp(static_cast<int>(yf) + 1, 0, height - 1);
    texel = {static_cast<uint32_t>(j0 * width + i0), static_cast<uint32_t>(j0 * width + i1),
             static_cast<uint32_t>(j1 * width + i0), static_cast<uint32_t>(j1 * width + i1)};
    weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
}

} // namespace alp
