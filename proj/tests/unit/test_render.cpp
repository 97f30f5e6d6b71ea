#include <doctest.h>

#include <random>

#include "alprobe/fit.hpp"
#include "alprobe/render.hpp"

using namespace alp;

namespace {

EnvMap random_env(int w, int h, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    EnvMap e(w, h);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) e.set_radiance(x, y, {u(rng), u(rng), u(rng)});
    return e;
}

double mean_abs_diff(const HdrImage &a, const HdrImage &b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data().size(); i++) s += std::abs(a.data()[i] - b.data()[i]);
    return s / a.data().size();
}

// A small scene with spatially varying material for gradient checks.
struct GradScene {
    AlpModel model;
    PinholeCamera cam;
    EnvMap env;
    PoseScale pose;
    RenderSettings settings;
    HdrImage adj;
    MaskImage adj_mask;

    GradScene() {
        std::mt19937 r0(5);
        std::uniform_real_distribution<double> u0(0.2, 0.9);
        Texture a = Texture::constant(4, 4, {1, 1, 1}), r = Texture::constant(4, 4, {0.5}),
                v = Texture::constant(4, 4, {1});
        for (auto &x : a.data) x = u0(r0);
        for (auto &x : r.data) x = u0(r0);
        for (auto &x : v.data) x = u0(r0);
        model = AlpModel::make(make_uv_sphere(24, 48, 0.6), a, r, v);
        cam = PinholeCamera::look_at({0, 0.8, 4}, {0, 0, 0}, {0, 1, 0}, 32, 32, 40);
        env = random_env(16, 8, 1);
        pose.rotation = Quaternion::from_axis_angle({0, 1, 0}, 3.0) * Quaternion::from_axis_angle({1, 0, 0}, 0.3);
        pose.translation = {0.05, -0.02, 0.1};
        pose.scale = 1.1;
        settings.spp = 8;
        settings.seed = 3;
        std::mt19937 rng(2);
        std::uniform_real_distribution<double> u(-0.9, 1.0);
        adj = HdrImage(32, 32);
        adj_mask = MaskImage(32, 32);
        for (auto &x : adj.data()) x = u(rng);
        for (auto &x : adj_mask.values()) x = u(rng);
    }

    double objective(const AlpModel &m, const PoseScale &p, const EnvMap &e) const {
        RenderOutput o = render(m, p, cam, e, settings);
        double s = 0.0;
        for (size_t i = 0; i < o.image.data().size(); i++) s += o.image.data()[i] * adj.data()[i];
        for (size_t i = 0; i < o.mask.values().size(); i++) s += o.mask.values()[i] * adj_mask.values()[i];
        return s;
    }
};

void check_fd(double analytic, double fd) {
    INFO("analytic " << analytic << " fd " << fd);
    CHECK(std::abs(analytic - fd) <= 1e-3 * std::max(std::abs(analytic), std::abs(fd)) + 1e-6);
}

} // namespace

TEST_CASE("sphere silhouette matches the analytic disc") {
    double r = 1.0, dist = 5.0, f = 120.0;
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(64, 128, r), {1, 1, 1}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, 96, 96, f);
    GBuffer g = rasterize(sphere, PoseScale{}, cam, 0.0);
    double area = 0.0;
    for (const GPixel &p : g.pixels) area += p.hit;
    double measured = std::sqrt(area / kPi);
    // The silhouette cone is tangent to the sphere.
    double expected = f * r / std::sqrt(dist * dist - r * r);
    CHECK(std::abs(measured - expected) < 1.0);
    PixelCoord b = mask_barycenter(g.mask());
    CHECK(std::abs(b.u - cam.cx) < 0.05);
    CHECK(std::abs(b.v - cam.cy) < 0.05);
}

TEST_CASE("gbuffer invariants") {
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(24, 48, 1.0), {1, 1, 1}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 48, 48, 60.0);
    GBuffer g = rasterize(sphere, PoseScale{}, cam, 1.5);
    for (const GPixel &p : g.pixels) {
        if (!p.hit) {
            CHECK(p.coverage == 0.0);
            continue;
        }
        CHECK(std::abs(length(p.normal.vec()) - 1.0) < 1e-6);
        CHECK(p.coverage > 0.0);
        CHECK(p.coverage <= 1.0);
    }
}

TEST_CASE("object behind the camera produces an empty buffer") {
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(12, 24, 1.0), {1, 1, 1}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 32, 32, 40.0);
    PoseScale behind;
    behind.translation = {0, 0, 10};
    GBuffer g = rasterize(sphere, behind, cam, 1.5);
    for (const GPixel &p : g.pixels) CHECK_FALSE(p.hit);
    RenderOutput o = render(sphere, behind, cam, EnvMap::constant(8, 4, {1, 1, 1}), RenderSettings{});
    CHECK(o.mask.sum() == 0.0);
}

TEST_CASE("one pixel of translation shifts the barycenter by one pixel") {
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(32, 64, 0.5), {1, 1, 1}, 0.3);
    double dist = 4.0, f = 80.0;
    PinholeCamera cam = PinholeCamera::look_at({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, 64, 64, f);
    PoseScale moved;
    moved.translation = {dist / f, 0, 0};
    PixelCoord a = mask_barycenter(rasterize(sphere, PoseScale{}, cam, 1.5).mask());
    PixelCoord b = mask_barycenter(rasterize(sphere, moved, cam, 1.5).mask());
    CHECK(b.u - a.u == doctest::Approx(1.0).epsilon(0.1));
    CHECK(std::abs(b.v - a.v) < 0.05);
}

TEST_CASE("constant environment energy bounds") {
    Rgb c{0.5, 1.0, 2.0};
    EnvMap env = EnvMap::constant(16, 8, c);
    PinholeCamera cam = PinholeCamera::look_at({0.5, 1, 4}, {0, 0, 0}, {0, 1, 0}, 48, 48, 70.0);
    std::vector<std::pair<TriMesh, double>> cases = {{make_uv_sphere(24, 48, 1.0), 0.2},
                                                     {make_cylinder(48, 0.6, 1.4), 0.2},
                                                     {make_uv_sphere(24, 48, 1.0), kMinRoughness}};
    for (auto &[mesh, rough] : cases) {
        AlpModel m = AlpModel::uniform(mesh, {1, 1, 1}, rough);
        RenderSettings s;
        s.spp = 64;
        RenderOutput o = render(m, PoseScale{}, cam, env, s);
        int full = 0;
        for (int y = 0; y < 48; y++)
            for (int x = 0; x < 48; x++) {
                if (o.mask.at(x, y) < 1.0) continue;
                full++;
                Rgb p = o.image.at(x, y);
                for (int k = 0; k < 3; k++) {
                    CHECK(p[k] <= c[k] * (1 + 1e-9));
                    if (rough == kMinRoughness) CHECK(p[k] >= 0.9 * c[k]);
                }
            }
        CHECK(full > 100);
    }
}

TEST_CASE("zero visibility renders black with an unchanged mask") {
    TriMesh mesh = make_uv_sphere(16, 32, 1.0);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 32, 32, 40.0);
    EnvMap env = random_env(16, 8, 3);
    RenderOutput lit = render(AlpModel::uniform(mesh, {1, 1, 1}, 0.3, 1.0), PoseScale{}, cam, env, RenderSettings{});
    RenderOutput dark = render(AlpModel::uniform(mesh, {1, 1, 1}, 0.3, 0.0), PoseScale{}, cam, env, RenderSettings{});
    CHECK(dark.mask.values() == lit.mask.values());
    for (double v : dark.image.data()) CHECK(v == 0.0);
}

TEST_CASE("image is exactly zero where coverage is zero") {
    AlpModel m = AlpModel::uniform(make_cylinder(32, 0.5, 1.0), {0.9, 0.8, 0.7}, 0.25);
    PinholeCamera cam = PinholeCamera::look_at({0, 1, 4}, {0, 0, 0}, {0, 1, 0}, 40, 40, 50.0);
    RenderOutput o = render(m, PoseScale{}, cam, random_env(16, 8, 4), RenderSettings{});
    for (int y = 0; y < 40; y++)
        for (int x = 0; x < 40; x++) {
            bool lit = o.image.at(x, y).x != 0.0 || o.image.at(x, y).y != 0.0 || o.image.at(x, y).z != 0.0;
            if (o.mask.at(x, y) == 0.0) {
                CHECK_FALSE(lit);
                CHECK(o.sample_count[y * 40 + x] == 0);
            } else {
                CHECK(lit);
            }
        }
}

TEST_CASE("Monte Carlo error falls as one over root spp") {
    AlpModel m = AlpModel::uniform(make_uv_sphere(24, 48, 1.0), {1, 1, 1}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 24, 24, 30.0);
    EnvMap env = random_env(32, 16, 5);
    RenderSettings s;
    s.spp = 4096;
    s.seed = 100;
    HdrImage ref = render(m, PoseScale{}, cam, env, s).image;
    s.spp = 16;
    s.seed = 1;
    double e16 = mean_abs_diff(render(m, PoseScale{}, cam, env, s).image, ref);
    s.spp = 64;
    double e64 = mean_abs_diff(render(m, PoseScale{}, cam, env, s).image, ref);
    CHECK(e16 / e64 > 1.6);
    CHECK(e16 / e64 < 2.5);
}

TEST_CASE("the estimator is unbiased") {
    AlpModel m = AlpModel::uniform(make_uv_sphere(16, 32, 1.0), {0.9, 0.7, 0.5}, 0.35);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 12, 12, 16.0);
    EnvMap env = random_env(16, 8, 6);
    RenderSettings s;
    s.spp = 4096;
    s.seed = 1000;
    HdrImage ref = render(m, PoseScale{}, cam, env, s).image;
    size_t n = ref.data().size();
    std::vector<double> sum(n, 0.0), sum2(n, 0.0);
    const int runs = 100;
    s.spp = 16;
    for (int r = 0; r < runs; r++) {
        s.seed = r;
        HdrImage img = render(m, PoseScale{}, cam, env, s).image;
        for (size_t i = 0; i < n; i++) {
            sum[i] += img.data()[i];
            sum2[i] += img.data()[i] * img.data()[i];
        }
    }
    int tested = 0, outside = 0;
    for (size_t i = 0; i < n; i++) {
        if (ref.data()[i] == 0.0) continue;
        double mean = sum[i] / runs;
        double var = std::max(0.0, sum2[i] / runs - mean * mean) * runs / (runs - 1);
        // Standard error of the mean of 100 x 16 spp plus that of the 4096-spp reference.
        double se = std::sqrt(var / runs + var * 16.0 / 4096.0);
        tested++;
        outside += std::abs(mean - ref.data()[i]) > 3.0 * se + 1e-12;
    }
    INFO(outside << " of " << tested << " channel values outside 3 sigma");
    CHECK(tested > 100);
    // 0.27% are expected outside 3 sigma for an unbiased estimator.
    CHECK(outside <= std::max(2, tested / 100));
}

TEST_CASE("render is deterministic across runs and thread counts") {
    AlpModel m = AlpModel::uniform(make_cylinder(32, 0.5, 1.0), {0.9, 0.8, 0.7}, 0.25);
    PinholeCamera cam = PinholeCamera::look_at({0, 1, 4}, {0, 0, 0}, {0, 1, 0}, 40, 40, 50.0);
    EnvMap env = random_env(16, 8, 7);
    RenderSettings s;
    s.spp = 8;
    s.seed = 42;
    s.threads = 1;
    RenderOutput a = render(m, PoseScale{}, cam, env, s);
    RenderOutput b = render(m, PoseScale{}, cam, env, s);
    s.threads = 4;
    RenderOutput c = render(m, PoseScale{}, cam, env, s);
    s.threads = 7;
    RenderOutput d = render(m, PoseScale{}, cam, env, s);
    CHECK(a.image.data() == b.image.data());
    CHECK(a.image.data() == c.image.data());
    CHECK(a.image.data() == d.image.data());
    CHECK(a.mask.values() == d.mask.values());
}

TEST_CASE("spinning a plain cylinder about its axis leaves the image unchanged") {
    AlpModel m = AlpModel::uniform(make_cylinder(256, 0.5, 1.0), {0.9, 0.8, 0.7}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 1, 4}, {0, 0, 0}, {0, 1, 0}, 32, 32, 40.0);
    EnvMap env = random_env(16, 8, 8);
    RenderSettings s;
    s.spp = 256;
    RenderOutput a = render(m, PoseScale{}, cam, env, s);
    PoseScale spun;
    spun.rotation = Quaternion::from_axis_angle({0, 1, 0}, 0.7);
    RenderOutput b = render(m, spun, cam, env, s);
    double mean = 0.0;
    for (double v : a.image.data()) mean += v;
    mean /= a.image.data().size();
    CHECK(mean_abs_diff(a.image, b.image) < 0.02 * mean);
}

TEST_CASE("render_with_gradients forward output is bit-identical to render") {
    GradScene sc;
    RenderOutput fwd;
    render_with_gradients(sc.model, sc.pose, sc.cam, sc.env, sc.settings, sc.adj, sc.adj_mask, {true, true, true},
                          &fwd);
    RenderOutput o = render(sc.model, sc.pose, sc.cam, sc.env, sc.settings);
    CHECK(o.image.data() == fwd.image.data());
    CHECK(o.mask.values() == fwd.mask.values());
}

TEST_CASE("gradients match central differences for every parameter group") {
    GradScene sc;
    Gradients g = render_with_gradients(sc.model, sc.pose, sc.cam, sc.env, sc.settings, sc.adj, sc.adj_mask,
                                        {true, true, true});
    double h = 1e-6;
    SUBCASE("translation") {
        for (int k = 0; k < 3; k++) {
            PoseScale a = sc.pose, b = sc.pose;
            a.translation[k] += h;
            b.translation[k] -= h;
            check_fd(g.translation[k], (sc.objective(sc.model, a, sc.env) - sc.objective(sc.model, b, sc.env)) / (2 * h));
        }
    }
    SUBCASE("rotation") {
        for (int k = 0; k < 3; k++) {
            Vec3 w{0, 0, 0};
            w[k] = h;
            PoseScale a = sc.pose, b = sc.pose;
            a.rotation = Quaternion::from_rotation_vector(w) * sc.pose.rotation;
            b.rotation = Quaternion::from_rotation_vector(-w) * sc.pose.rotation;
            check_fd(g.rotation[k], (sc.objective(sc.model, a, sc.env) - sc.objective(sc.model, b, sc.env)) / (2 * h));
        }
    }
    SUBCASE("log scale") {
        PoseScale a = sc.pose, b = sc.pose;
        a.scale *= std::exp(h);
        b.scale *= std::exp(-h);
        check_fd(g.log_scale, (sc.objective(sc.model, a, sc.env) - sc.objective(sc.model, b, sc.env)) / (2 * h));
    }
    SUBCASE("material textures") {
        for (int t : {5, 6, 9, 10}) {
            for (int c = 0; c < 3; c++) {
                AlpModel a = sc.model, b = sc.model;
                a.albedo.data[t * 3 + c] += h;
                b.albedo.data[t * 3 + c] -= h;
                check_fd(g.albedo[t * 3 + c], (sc.objective(a, sc.pose, sc.env) - sc.objective(b, sc.pose, sc.env)) / (2 * h));
            }
            AlpModel a = sc.model, b = sc.model;
            a.roughness.data[t] += h;
            b.roughness.data[t] -= h;
            check_fd(g.roughness[t], (sc.objective(a, sc.pose, sc.env) - sc.objective(b, sc.pose, sc.env)) / (2 * h));
            a = sc.model;
            b = sc.model;
            a.visibility.data[t] += h;
            b.visibility.data[t] -= h;
            check_fd(g.visibility[t], (sc.objective(a, sc.pose, sc.env) - sc.objective(b, sc.pose, sc.env)) / (2 * h));
        }
    }
    SUBCASE("environment texels") {
        int nonzero = 0;
        for (size_t p = 0; p < sc.env.params().size(); p += 7) {
            std::vector<double> pa = sc.env.params(), pb = pa;
            pa[p] += h;
            pb[p] -= h;
            EnvMap ea = sc.env, eb = sc.env;
            ea.set_params(pa);
            eb.set_params(pb);
            double fd = (sc.objective(sc.model, sc.pose, ea) - sc.objective(sc.model, sc.pose, eb)) / (2 * h);
            check_fd(g.env[p], fd);
            nonzero += g.env[p] != 0.0;
        }
        CHECK(nonzero > 10);
    }
}

TEST_CASE("texels the object never samples get zero gradient") {
    // A front-facing mirror plate only reflects a small cone behind the camera.
    AlpModel plate = AlpModel::uniform(make_plate(1.0, 1.0), {1, 1, 1}, kMinRoughness);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 16, 16, 40.0);
    EnvMap env = random_env(32, 16, 9);
    HdrImage adj(16, 16);
    for (auto &v : adj.data()) v = 1.0;
    Gradients g = render_with_gradients(plate, PoseScale{}, cam, env, RenderSettings{}, adj, MaskImage(16, 16),
                                        {true, false, false});
    int zero = 0;
    for (size_t t = 0; t < env.texel_count(); t++) {
        UnitVec3 d = env.texel_direction(t);
        if (d.z() > 0.0) continue; // hemisphere facing away from the plate normal
        for (int c = 0; c < 3; c++) {
            CHECK(g.env[3 * t + c] == 0.0);
            zero++;
        }
    }
    CHECK(zero > 0);
}

TEST_CASE("barycenter term pulls translation toward the reference") {
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(24, 48, 0.5), {1, 1, 1}, 0.3);
    PinholeCamera cam = PinholeCamera::look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, 48, 48, 60.0);
    EnvMap env = EnvMap::constant(8, 4, {1, 1, 1});
    MaskImage ref = rasterize(sphere, PoseScale{}, cam, 1.5).mask();
    for (Vec3 offset : {Vec3{0.3, 0, 0}, Vec3{0, -0.25, 0}, Vec3{-0.2, 0.2, 0}}) {
        PoseScale p;
        p.translation = offset;
        RenderSettings s;
        s.spp = 1;
        MaskImage m = render(sphere, p, cam, env, s).mask;
        MaskImage adj_mask;
        pose_reg(m, ref, p.rotation, p.rotation, &adj_mask);
        Gradients g = render_with_gradients(sphere, p, cam, env, s, HdrImage(48, 48), adj_mask, {false, true, false});
        // Descent direction opposes the image-space offset.
        CHECK(dot(g.translation, offset) > 0.0);
    }
}

TEST_CASE("one gradient step reduces the mask L1 of an offset sphere") {
    AlpModel sphere = AlpModel::uniform(make_uv_sphere(24, 48, 0.5), {1, 1, 1}, 0.3);
    double dist = 4.0, f = 60.0;
    PinholeCamera cam = PinholeCamera::look_at({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, 48, 48, f);
    EnvMap env = EnvMap::constant(8, 4, {1, 1, 1});
    RenderSettings s;
    s.spp = 1;
    MaskImage ref = render(sphere, PoseScale{}, cam, env, s).mask;
    PoseScale p;
    p.translation = {2.0 * dist / f, 0, 0};
    auto l1 = [&](const PoseScale &q, MaskImage *grad) {
        MaskImage m = render(sphere, q, cam, env, s).mask;
        double sum = 0.0;
        if (grad) *grad = MaskImage(48, 48);
        for (size_t i = 0; i < m.values().size(); i++) {
            double d = m.values()[i] - ref.values()[i];
            sum += std::abs(d);
            if (grad) grad->values()[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        }
        return sum;
    };
    MaskImage adj;
    double before = l1(p, &adj);
    Gradients g = render_with_gradients(sphere, p, cam, env, s, HdrImage(48, 48), adj, {false, true, false});
    // Step of 1e-2 px along the normalized descent direction, in world units at the object depth.
    Vec3 dir = g.translation / length(g.translation);
    PoseScale q = p;
    q.translation = p.translation - dir * (1e-2 * dist / f);
    CHECK(l1(q, nullptr) < before);
}
