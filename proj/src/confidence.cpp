#include "alprobe/confidence.hpp"

#include <algorithm>
#include <cmath>

#include "alprobe/envlight.hpp"
#include "alprobe/parallel.hpp"
#include "alprobe/rng.hpp"

namespace alp {

ConfidenceMap ConfidenceMap::resized(int w, int h) const {
    ConfidenceMap out{w, h, std::vector<double>(static_cast<size_t>(w) * h, 0.0)};
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / w));
            int sy = std::min(height - 1, static_cast<int>((y + 0.5) * height / h));
            out.values[static_cast<size_t>(y) * w + x] = at(sx, sy);
        }
    return out;
}

ConfidenceMap confidence_map(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, int env_width,
                             int env_height, int spp, uint64_t seed, int threads) {
    if (env_height < 1 || env_width != 2 * env_height)
        throw Error(ErrorCode::InvalidResolution, "confidence map needs width = 2 * height");
    if (spp < 1) throw Error(ErrorCode::InvalidArgument, "spp must be >= 1");
    GBuffer g = rasterize(model, pose, cam, 0.0, threads);
    bool any = std::any_of(g.pixels.begin(), g.pixels.end(), [](const GPixel &p) { return p.hit; });
    if (!any) throw Error(ErrorCode::ObjectNotVisible, "object does not cover any pixel");

    // Per-row integer histograms summed in row order, so the result does not
    // depend on the thread count.
    const size_t bins = static_cast<size_t>(env_width) * env_height;
    std::vector<std::vector<uint32_t>> rows(cam.height);
    parallel_for(static_cast<size_t>(cam.height), resolve_thread_count(threads), [&](size_t row) {
        std::vector<uint32_t> hist;
        for (int x = 0; x < cam.width; x++) {
            size_t index = row * cam.width + x;
            const GPixel &p = g.pixels[index];
            if (!p.hit) continue;
            if (hist.empty()) hist.assign(bins, 0);
            Vec3 n = p.normal.vec();
            Vec3 wo = -cam.pixel_ray(x, static_cast<int>(row)).direction;
            if (dot(n, wo) <= 0.0) continue;
            double rough = std::max(kMinRoughness, model.roughness.sample(p.uv.u, p.uv.v, 0));
            CounterRng rng(seed, index);
            for (int k = 0; k < spp; k++) {
                double u1 = rng.next();
                double u2 = rng.next();
                auto s = brdf::sample_vndf(rough, n, wo, u1, u2);
                if (dot(n, s.wi) <= 0.0) continue;
                EnvUv uv = dir_to_uv(UnitVec3::normalize(s.wi));
                int bx = std::clamp(static_cast<int>(std::floor(uv.u * env_width)), 0, env_width - 1);
                int by = std::clamp(static_cast<int>(std::floor(uv.v * env_height)), 0, env_height - 1);
                hist[static_cast<size_t>(by) * env_width + bx]++;
            }
        }
        rows[row] = std::move(hist);
    });
    std::vector<uint64_t> total(bins, 0);
    for (const auto &h : rows)
        for (size_t i = 0; i < h.size(); i++) total[i] += h[i];
    ConfidenceMap out{env_width, env_height, std::vector<double>(bins, 0.0)};
    uint64_t peak = *std::max_element(total.begin(), total.end());
    if (peak == 0) return out;
    for (size_t i = 0; i < bins; i++) out.values[i] = static_cast<double>(total[i]) / static_cast<double>(peak);
    return out;
}

} // namespace alp
