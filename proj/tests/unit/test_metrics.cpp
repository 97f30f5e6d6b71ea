#include <doctest.h>

#include <random>

#include "alprobe/metrics.hpp"

using namespace alp;

namespace {

HdrImage random_image(int w, int h, uint64_t seed, double lo = 0.01, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    HdrImage img(w, h);
    for (auto &v : img.data()) v = u(rng);
    return img;
}

HdrImage scaled(const HdrImage &a, double k) {
    HdrImage out = a;
    for (auto &v : out.data()) v *= k;
    return out;
}

} // namespace

TEST_CASE("angular error examples") {
    HdrImage a = random_image(8, 8, 1);
    MaskImage m(8, 8, 1.0);
    CHECK(angular_error(a, a, m) == 0.0);
    CHECK(angular_error(scaled(a, 3.7), a, m) < 1e-6);

    HdrImage red(1, 1), green(1, 1);
    red.set(0, 0, {1, 0, 0});
    green.set(0, 0, {0, 1, 0});
    CHECK(angular_error(red, green, MaskImage(1, 1, 1.0)) == doctest::Approx(90.0).epsilon(1e-9));
}

TEST_CASE("angular error is symmetric and scale invariant per image") {
    HdrImage a = random_image(10, 6, 2), b = random_image(10, 6, 3);
    MaskImage m(10, 6, 1.0);
    double e = angular_error(a, b, m);
    CHECK(angular_error(b, a, m) == doctest::Approx(e).epsilon(1e-12));
    CHECK(std::abs(angular_error(scaled(a, 0.01), scaled(b, 250.0), m) - e) < 1e-6);
}

TEST_CASE("angular error skips zero pixels and honours the mask") {
    HdrImage a(2, 1), b(2, 1);
    a.set(0, 0, {1, 0, 0});
    b.set(0, 0, {0, 1, 0});
    a.set(1, 0, {0, 0, 0});
    b.set(1, 0, {1, 1, 1});
    CHECK(angular_error(a, b, MaskImage(2, 1, 1.0)) == doctest::Approx(90.0));
    MaskImage m(2, 1);
    m.set(1, 0, 1.0);
    CHECK_THROWS_AS(angular_error(a, b, MaskImage(2, 1)), Error);
    CHECK_THROWS_AS(angular_error(a, HdrImage(3, 1), MaskImage(2, 1, 1.0)), Error);
}

TEST_CASE("si_rmse examples") {
    HdrImage b = random_image(8, 8, 4);
    MaskImage m(8, 8, 1.0);
    CHECK(si_rmse(scaled(b, 1.0 / 7.0), b, m) < 1e-6);
    CHECK(si_rmse(b, b, m) < 1e-12);
    CHECK_THROWS_AS(si_rmse(HdrImage(8, 8), b, m), Error);
    try {
        si_rmse(HdrImage(8, 8), b, m);
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::DegenerateReference);
    }
}

TEST_CASE("si_rmse matches a brute-force scale sweep and never exceeds rmse") {
    for (uint64_t s = 0; s < 20; s++) {
        HdrImage a = random_image(6, 5, 10 + s), b = random_image(6, 5, 40 + s);
        MaskImage m(6, 5);
        std::mt19937_64 rng(s);
        for (auto &v : m.values()) v = (rng() % 3) ? 1.0 : 0.0;
        m.set(0, 0, 1.0);
        auto err = [&](double alpha) {
            double sum = 0.0;
            int n = 0;
            for (int y = 0; y < 5; y++)
                for (int x = 0; x < 6; x++) {
                    if (m.at(x, y) < 0.5) continue;
                    for (int c = 0; c < 3; c++) {
                        double d = alpha * a.at(x, y)[c] - b.at(x, y)[c];
                        sum += d * d;
                        n++;
                    }
                }
            return std::sqrt(sum / n);
        };
        // Golden-section search over alpha as an independent minimizer.
        double lo = 0.0, hi = 10.0, g = (std::sqrt(5.0) - 1) / 2;
        for (int it = 0; it < 200; it++) {
            double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
            if (err(c) < err(d)) hi = d;
            else lo = c;
        }
        double brute = err(0.5 * (lo + hi));
        CHECK(std::abs(si_rmse(a, b, m) - brute) < 1e-6);
        CHECK(si_rmse(a, b, m) <= rmse(a, b, m) + 1e-15);
    }
}

TEST_CASE("psnr examples") {
    HdrImage a = random_image(4, 4, 5);
    MaskImage m(4, 4, 1.0);
    CHECK(psnr(a, a, m, 1.0) == kPsnrCap);

    HdrImage zero(4, 4), ones(4, 4);
    for (auto &v : ones.data()) v = 2.0;
    CHECK(psnr(zero, ones, m, 2.0) == doctest::Approx(0.0).epsilon(1e-12));

    HdrImage b = a, c = a;
    for (auto &v : b.data()) v += 0.1;
    for (auto &v : c.data()) v += 0.1 / std::sqrt(2.0);
    CHECK(psnr(a, c, m, 1.0) - psnr(a, b, m, 1.0) == doctest::Approx(10 * std::log10(2.0)).epsilon(1e-6));
    CHECK_THROWS_AS(psnr(a, b, MaskImage(4, 4), 1.0), Error);
}

TEST_CASE("probe material presets") {
    CHECK(ProbeMaterial::mirror().roughness() == kMinRoughness);
    CHECK(ProbeMaterial::shiny().roughness() == 0.25);
    CHECK(ProbeMaterial::diffuse().diffuse_albedo() == 0.8);
    CHECK(ProbeMaterial::mirror().name() == "mirror");
    CHECK(ProbeMaterial::shiny().name() == "shiny");
    CHECK(ProbeMaterial::diffuse().name() == "diffuse");
}

TEST_CASE("diffuse sphere under constant light is albedo times radiance") {
    EnvMap env = EnvMap::constant(16, 8, {0.5, 1.0, 2.0});
    RelightOutput o = relight_sphere(env, ProbeMaterial::diffuse(), 32, 256, 1);
    int n = 0;
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            if (o.mask.at(x, y) < 1.0) continue;
            n++;
            Rgb c = o.image.at(x, y);
            CHECK(c.x == doctest::Approx(0.4).epsilon(0.03));
            CHECK(c.y == doctest::Approx(0.8).epsilon(0.03));
            CHECK(c.z == doctest::Approx(1.6).epsilon(0.03));
        }
    CHECK(n > 400);
}

TEST_CASE("mirror sphere shows one highlight for one bright texel") {
    EnvMap env = EnvMap::constant(32, 16, {0.01, 0.01, 0.01});
    // A texel behind the camera, reflected near the sphere center.
    env.set_radiance(16, 8, {50, 50, 50});
    env.set_radiance(0, 8, {50, 50, 50});
    RelightOutput o = relight_sphere(env, ProbeMaterial::mirror(), 64, 16, 2);
    std::vector<int> label(64 * 64, 0);
    int regions = 0;
    for (int start = 0; start < 64 * 64; start++) {
        if (label[start] || o.image.data()[3 * start] < 1.0) continue;
        regions++;
        std::vector<int> stack{start};
        label[start] = regions;
        while (!stack.empty()) {
            int p = stack.back();
            stack.pop_back();
            int x = p % 64, y = p / 64;
            for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                int xx = x + dx, yy = y + dy;
                if (xx < 0 || yy < 0 || xx >= 64 || yy >= 64) continue;
                int q = yy * 64 + xx;
                if (label[q] || o.image.data()[3 * q] < 1.0) continue;
                label[q] = regions;
                stack.push_back(q);
            }
        }
    }
    CHECK(regions == 1);
}

TEST_CASE("relit sphere against itself at another seed stays under half a degree") {
    // Smooth sky-like lighting: warm sun lobe over a blue-to-brown gradient.
    EnvMap env(32, 16);
    Vec3 sun = normalize(Vec3{0.4, 0.6, -0.7});
    for (int y = 0; y < 16; y++)
        for (int x = 0; x < 32; x++) {
            Vec3 d = uv_to_dir((x + 0.5) / 32, (y + 0.5) / 16).vec();
            double t = 0.5 * (d.y + 1.0), s = std::pow(std::max(0.0, dot(d, sun)), 8.0);
            env.set_radiance(x, y, Rgb{0.3 + 0.1 * t, 0.25 + 0.3 * t, 0.2 + 0.8 * t} + Rgb{4.0, 3.2, 2.0} * s);
        }
    for (ProbeMaterial mat : {ProbeMaterial::mirror(), ProbeMaterial::shiny(), ProbeMaterial::diffuse()}) {
        RelightOutput a = relight_sphere(env, mat, 32, 1024, 1), b = relight_sphere(env, mat, 32, 1024, 2);
        INFO(mat.name());
        CHECK(angular_error(a.image, b.image, a.mask) < 0.5);
    }
}

TEST_CASE("relight_sphere is deterministic per seed") {
    EnvMap env = EnvMap::constant(16, 8, {1, 0.5, 0.2});
    RelightOutput a = relight_sphere(env, ProbeMaterial::shiny(), 24, 8, 3, 1);
    RelightOutput b = relight_sphere(env, ProbeMaterial::shiny(), 24, 8, 3, 3);
    CHECK(a.image.data() == b.image.data());
}
