#include "alprobe/metrics.hpp"

#include <cmath>

#include "alprobe/parallel.hpp"
#include "alprobe/rng.hpp"

namespace alp {

double ProbeMaterial::roughness() const {
    switch (kind) {
    case ProbeKind::Mirror: return kMinRoughness;
    case ProbeKind::Shiny: return 0.25;
    case ProbeKind::Diffuse: return 1.0;
    }
    return 1.0;
}

std::string ProbeMaterial::name() const {
    switch (kind) {
    case ProbeKind::Mirror: return "mirror";
    case ProbeKind::Shiny: return "shiny";
    case ProbeKind::Diffuse: return "diffuse";
    }
    return "unknown";
}

PinholeCamera probe_camera(int res) {
    // The sphere silhouette spans about 80% of the frame.
    const double distance = 4.0;
    double focal = 0.4 * res * std::sqrt(distance * distance - 1.0);
    return PinholeCamera::look_at({0.0, 0.0, distance}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, res, res, focal);
}

namespace {

const AlpModel &probe_sphere(double roughness) {
    static const AlpModel mirror = AlpModel::uniform(make_uv_sphere(96, 192, 1.0), {1, 1, 1}, kMinRoughness);
    static const AlpModel shiny = AlpModel::uniform(make_uv_sphere(96, 192, 1.0), {1, 1, 1}, 0.25);
    return roughness <= kMinRoughness ? mirror : shiny;
}

RelightOutput relight_lambertian(const EnvMap &env, double albedo, const PinholeCamera &cam, int spp,
                                 uint64_t seed, int threads) {
    const AlpModel &sphere = probe_sphere(kMinRoughness);
    GBuffer g = rasterize(sphere, PoseScale{}, cam, 0.0, threads);
    RelightOutput out{HdrImage(cam.width, cam.height), g.mask()};
    parallel_for(static_cast<size_t>(cam.height), resolve_thread_count(threads), [&](size_t row) {
        int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; x++) {
            size_t index = static_cast<size_t>(y) * cam.width + x;
            const GPixel &p = g.pixels[index];
            if (!p.hit) continue;
            // Cosine-weighted hemisphere sampling: estimator albedo * mean(L).
            Vec3 n = p.normal.vec();
            Vec3 a = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
            Vec3 t1 = normalize(cross(n, a));
            Vec3 t2 = cross(n, t1);
            CounterRng rng(seed, index);
            Rgb acc{0, 0, 0};
            for (int k = 0; k < spp; k++) {
                double r = std::sqrt(rng.next());
                double phi = 2.0 * kPi * rng.next();
                double z = std::sqrt(std::max(0.0, 1.0 - r * r));
                Vec3 w = t1 * (r * std::cos(phi)) + t2 * (r * std::sin(phi)) + n * z;
                acc += env.lookup(w);
            }
            out.image.set(x, y, acc * (albedo / spp));
        }
    });
    return out;
}

void check_dims(const HdrImage &a, const HdrImage &b, const MaskImage &m) {
    if (a.width() != b.width() || a.height() != b.height() || a.width() != m.width() || a.height() != m.height())
        throw Error(ErrorCode::DimensionMismatch, "metric inputs must share dimensions");
}

} // namespace

RelightOutput relight_sphere(const EnvMap &env, const ProbeMaterial &mat, const PinholeCamera &cam, int spp,
                             uint64_t seed, int threads) {
    if (spp < 1) throw Error(ErrorCode::InvalidArgument, "spp must be >= 1");
    if (mat.kind == ProbeKind::Diffuse) return relight_lambertian(env, mat.diffuse_albedo(), cam, spp, seed, threads);
    RenderSettings st;
    st.spp = spp;
    st.seed = seed;
    st.aa_width = 0.0;
    st.threads = threads;
    RenderOutput r = render(probe_sphere(mat.roughness()), PoseScale{}, cam, env, st);
    return {std::move(r.image), std::move(r.mask)};
}

RelightOutput relight_sphere(const EnvMap &env, const ProbeMaterial &mat, int res, int spp, uint64_t seed,
                             int threads) {
    return relight_sphere(env, mat, probe_camera(res), spp, seed, threads);
}

double angular_error(const HdrImage &a, const HdrImage &b, const MaskImage &mask) {
    check_dims(a, b, mask);
    double sum = 0.0;
    size_t in_mask = 0, used = 0;
    for (int y = 0; y < a.height(); y++)
        for (int x = 0; x < a.width(); x++) {
            if (mask.at(x, y) < 0.5) continue;
            in_mask++;
            Rgb pa = a.at(x, y), pb = b.at(x, y);
            double na = length(pa), nb = length(pb);
            if (na == 0.0 || nb == 0.0) continue;
            // atan2 form stays exact for parallel vectors where acos loses precision.
            sum += std::atan2(length(cross(pa, pb)), dot(pa, pb));
            used++;
        }
    if (in_mask == 0) throw Error(ErrorCode::EmptyMask, "angular_error: mask is empty");
    if (used == 0) return 0.0;
    return sum / used * 180.0 / kPi;
}

double si_rmse(const HdrImage &a, const HdrImage &b, const MaskImage &mask) {
    check_dims(a, b, mask);
    double aa = 0.0, ab = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height(); y++)
        for (int x = 0; x < a.width(); x++) {
            if (mask.at(x, y) < 0.5) continue;
            Rgb pa = a.at(x, y), pb = b.at(x, y);
            aa += dot(pa, pa);
            ab += dot(pa, pb);
            n += 3;
        }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "si_rmse: mask is empty");
    if (aa == 0.0) throw Error(ErrorCode::DegenerateReference, "si_rmse: scaled image is zero in-mask");
    double alpha = ab / aa;
    double se = 0.0;
    for (int y = 0; y < a.height(); y++)
        for (int x = 0; x < a.width(); x++) {
            if (mask.at(x, y) < 0.5) continue;
            Rgb d = a.at(x, y) * alpha - b.at(x, y);
            se += dot(d, d);
        }
    return std::sqrt(se / n);
}

namespace {

double mse(const HdrImage &a, const HdrImage &b, const MaskImage &mask) {
    check_dims(a, b, mask);
    double se = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height(); y++)
        for (int x = 0; x < a.width(); x++) {
            if (mask.at(x, y) < 0.5) continue;
            Rgb d = a.at(x, y) - b.at(x, y);
            se += dot(d, d);
            n += 3;
        }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "mask is empty");
    return se / n;
}

} // namespace

double rmse(const HdrImage &a, const HdrImage &b, const MaskImage &mask) { return std::sqrt(mse(a, b, mask)); }

double psnr(const HdrImage &a, const HdrImage &b, const MaskImage &mask, double peak) {
    if (!(peak > 0.0)) throw Error(ErrorCode::InvalidArgument, "psnr: peak must be positive");
    double m = mse(a, b, mask);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

} // namespace alp
