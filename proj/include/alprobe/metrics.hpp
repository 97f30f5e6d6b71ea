#pragma once

#include <string>

#include "alprobe/render.hpp"

namespace alp {

enum class ProbeKind { Mirror, Shiny, Diffuse };

// Evaluation sphere finishes. Mirror and shiny use the metallic BRDF with
// white albedo; diffuse is Lambertian with albedo 0.8.
struct ProbeMaterial {
    ProbeKind kind = ProbeKind::Mirror;

    static ProbeMaterial mirror() { return {ProbeKind::Mirror}; }
    static ProbeMaterial shiny() { return {ProbeKind::Shiny}; }
    static ProbeMaterial diffuse() { return {ProbeKind::Diffuse}; }

    double roughness() const;
    double diffuse_albedo() const { return 0.8; }
    std::string name() const;
};

struct RelightOutput {
    HdrImage image;
    MaskImage mask;
};

// Unit sphere at the origin seen by `probe_camera(res)`.
PinholeCamera probe_camera(int res);
RelightOutput relight_sphere(const EnvMap &env, const ProbeMaterial &mat, int res, int spp, uint64_t seed,
                             int threads = 0);
RelightOutput relight_sphere(const EnvMap &env, const ProbeMaterial &mat, const PinholeCamera &cam, int spp,
                             uint64_t seed, int threads = 0);

// In-mask means over pixels with mask >= 0.5. All throw EmptyMask when no
// pixel qualifies and DimensionMismatch for mismatched sizes.
double angular_error(const HdrImage &a, const HdrImage &b, const MaskImage &mask);
// a is scaled onto the reference b with one joint factor. Throws
// DegenerateReference when a is zero in-mask.
double si_rmse(const HdrImage &a, const HdrImage &b, const MaskImage &mask);
double rmse(const HdrImage &a, const HdrImage &b, const MaskImage &mask);
// Capped at kPsnrCap for identical inputs.
inline constexpr double kPsnrCap = 99.0;
double psnr(const HdrImage &a, const HdrImage &b, const MaskImage &mask, double peak);

} // namespace alp
