#pragma once

#include <optional>
#include <string>
#include <vector>

#include "alprobe/render.hpp"

namespace alp {

struct LossTerms {
    double total = 0.0;
    double rgb = 0.0;
    double mask = 0.0;
    double pose_reg = 0.0;
    double light_reg = 0.0;
};

// Mean |log(1 + render) - log(1 + ref)| over the RGB channels of pixels where
// either mask is nonzero. grad (optional) receives d loss / d render.
double rgb_loss(const HdrImage &render, const MaskImage &render_mask, const HdrImage &ref, const MaskImage &ref_mask,
                HdrImage *grad = nullptr);
inline double rgb_loss(const RenderOutput &render, const HdrImage &ref, const MaskImage &ref_mask) {
    return rgb_loss(render.image, render.mask, ref, ref_mask);
}

// Euclidean distance from every pixel to the nearest site (exact, separable).
std::vector<double> distance_transform(const std::vector<uint8_t> &sites, int width, int height);
// Pixels with coverage >= 0.5 that have a 4-neighbour below 0.5.
std::vector<uint8_t> mask_boundary(const MaskImage &m);
// Symmetric mean nearest-boundary distance over the image diagonal; nullopt
// when either boundary is empty.
std::optional<double> chamfer_distance(const MaskImage &a, const MaskImage &b);

// Mean |render - ref| plus the Chamfer term when both boundaries exist.
// grad (optional, raw values, not clamped) receives d loss / d render mask;
// the Chamfer part, piecewise constant in the mask, is replaced by the
// gradient of a clamped signed-distance surrogate.
double mask_loss(const MaskImage &render, const MaskImage &ref, MaskImage *grad = nullptr);

// |B(render) - B(ref)|^2 / diag^2 + |q - q_ref|^2 with q_ref sign-aligned to q.
// Throws EmptyMask for an empty reference; the barycenter term is skipped
// when the rendered mask is empty. grad_mask and grad_rotation (world-frame
// rotation-vector tangent) are optional.
double pose_reg(const MaskImage &render, const MaskImage &ref, const Quaternion &q, const Quaternion &q_ref,
                MaskImage *grad_mask = nullptr, Vec3 *grad_rotation = nullptr);

// Pose-regularizer weight multiplier: 1 at step 0, linear to 0 at t_decay.
double pose_decay(int step, int t_decay);
double total_loss(const LossTerms &t, double lambda_pose, double lambda_light, double decay);

// Adam over a flat parameter vector.
class Adam {
public:
    Adam() = default;
    explicit Adam(size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Returns the update to add to the parameters.
    std::vector<double> delta(const std::vector<double> &grad, double lr);
    void step(std::vector<double> &x, const std::vector<double> &grad, double lr);

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct FitConfig {
    double lambda_pose = 1.0;
    double lambda_light = 0.05;
    double decay_fraction = 0.6; // T_decay as a fraction of steps
    int steps = 400;
    int spp = 64;
    int final_spp = 1024;
    double lr_env = 5e-2;
    double lr_translation = 5e-3;
    double lr_rotation = 5e-3;
    double lr_log_scale = 5e-3;
    double lr_final_fraction = 0.1; // cosine learning-rate decay target
    std::vector<Quaternion> starts;  // empty: q_ref turned about world up by 0, 90, 180, 270 degrees
    int n_pairs = 4096;
    double sigma = 3.0 * kPi / 180.0;
    uint64_t seed = 0;
    int env_width = 64;
    int env_height = 32;
    double aa_width = 1.5;
    bool freeze_pose = false;
    std::optional<PoseScale> initial_pose; // replaces the mask-based initializer
    int threads = 0;

    void validate() const;
    int decay_steps() const;
    std::vector<Quaternion> resolved_starts(const Quaternion &q_ref) const;
};

struct StartResult {
    Quaternion start;
    bool ok = false;
    std::string error;
    PoseScale pose;
    EnvMap env;
    double psnr = 0.0;
    std::vector<LossTerms> trace;
};

struct FitResult {
    PoseScale pose;
    EnvMap env;
    std::vector<double> start_psnr; // -infinity for aborted starts
    std::vector<LossTerms> trace;   // of the selected start
    int selected = 0;
    std::vector<StartResult> starts;
};

// Initial placement: back-projects the mask barycenter at the depth whose
// rendered mask area matches the reference.
PoseScale initialize_pose(const MaskImage &ref_mask, const AlpModel &model, const PinholeCamera &cam,
                          const Quaternion &rotation, double aa_width = 1.5, int threads = 0);

FitResult estimate_lighting(const HdrImage &ref, const MaskImage &ref_mask, const AlpModel &model,
                            const PinholeCamera &cam, const FitConfig &cfg);

struct Capture {
    HdrImage image;
    MaskImage mask;
    PinholeCamera camera;
    EnvMap env; // known lighting for this view
};

struct ReconstructConfig {
    int texture_width = 16;
    int texture_height = 16;
    int steps = 300;
    int spp = 16;
    double lr_albedo = 2e-2;
    double lr_roughness = 2e-2;
    double lr_visibility = 1e-2;
    double lr_translation = 2e-3;
    double lr_rotation = 2e-3;
    double lr_log_scale = 2e-3;
    double lr_final_fraction = 0.1;
    PoseScale initial_pose;
    Rgb initial_albedo{0.5, 0.5, 0.5};
    double initial_roughness = 0.3;
    double initial_visibility = 1.0;
    // Starting textures; replace the constant initial values when set.
    std::optional<Texture> albedo, roughness, visibility;
    bool optimize_pose = true;
    bool optimize_textures = true;
    bool optimize_visibility = true;
    double aa_width = 1.5;
    uint64_t seed = 0;
    int threads = 0;

    void validate() const;
};

struct ReconstructResult {
    AlpModel model;
    PoseScale pose;
    std::vector<LossTerms> trace;
    std::vector<int> texel_views; // views observing each texel at the final pose
};

ReconstructResult reconstruct_alp(const std::vector<Capture> &captures, const TriMesh &mesh,
                                  const ReconstructConfig &cfg);

} // namespace alp
