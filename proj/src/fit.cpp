#include "alprobe/fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "alprobe/metrics.hpp"
#include "alprobe/rng.hpp"

namespace alp {

namespace {

void check_same(int w0, int h0, int w1, int h1, const char *what) {
    if (w0 != w1 || h0 != h1)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": " + std::to_string(w0) + "x" +
                                                      std::to_string(h0) + " vs " + std::to_string(w1) + "x" +
                                                      std::to_string(h1));
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// 1D squared Euclidean distance transform of a sampled function.
void edt_1d(const double *f, int n, double *d, int *v, double *z) {
    int k = 0;
    v[0] = 0;
    z[0] = -1e300;
    z[1] = 1e300;
    auto meet = [&](int q, int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
    for (int q = 1; q < n; q++) {
        double s = meet(q, v[k]);
        while (s <= z[k]) {
            k--;
            s = meet(q, v[k]);
        }
        k++;
        v[k] = q;
        z[k] = s;
        z[k + 1] = 1e300;
    }
    k = 0;
    for (int q = 0; q < n; q++) {
        while (z[k + 1] < q) k++;
        double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

double lr_factor(int step, int steps, double final_fraction) {
    double t = steps > 1 ? double(step) / (steps - 1) : 1.0;
    return final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(kPi * t));
}

Vec3 to_vec(const std::vector<double> &v, size_t offset = 0) { return {v[offset], v[offset + 1], v[offset + 2]}; }

} // namespace

double rgb_loss(const HdrImage &render, const MaskImage &render_mask, const HdrImage &ref, const MaskImage &ref_mask,
                HdrImage *grad) {
    check_same(render.width(), render.height(), ref.width(), ref.height(), "rgb_loss images");
    check_same(render.width(), render.height(), render_mask.width(), render_mask.height(), "rgb_loss render mask");
    check_same(render.width(), render.height(), ref_mask.width(), ref_mask.height(), "rgb_loss reference mask");
    const auto &r = render.data();
    const auto &t = ref.data();
    const auto &rm = render_mask.values();
    const auto &tm = ref_mask.values();
    size_t count = 0;
    double sum = 0.0;
    for (size_t i = 0; i < rm.size(); i++) {
        if (rm[i] <= 0.0 && tm[i] <= 0.0) continue;
        count++;
        for (int c = 0; c < 3; c++) sum += std::abs(std::log1p(r[3 * i + c]) - std::log1p(t[3 * i + c]));
    }
    if (grad) *grad = HdrImage(render.width(), render.height());
    if (count == 0) return 0.0;
    const double n = 3.0 * count;
    if (grad) {
        auto &g = grad->data();
        for (size_t i = 0; i < rm.size(); i++) {
            if (rm[i] <= 0.0 && tm[i] <= 0.0) continue;
            for (int c = 0; c < 3; c++) {
                double d = std::log1p(r[3 * i + c]) - std::log1p(t[3 * i + c]);
                g[3 * i + c] = sign(d) / (n * (1.0 + r[3 * i + c]));
            }
        }
    }
    return sum / n;
}

std::vector<double> distance_transform(const std::vector<uint8_t> &sites, int width, int height) {
    const double inf = 1e20;
    const int n = std::max(width, height);
    std::vector<double> grid(sites.size());
    for (size_t i = 0; i < sites.size(); i++) grid[i] = sites[i] ? 0.0 : inf;
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int x = 0; x < width; x++) {
        for (int y = 0; y < height; y++) f[y] = grid[static_cast<size_t>(y) * width + x];
        edt_1d(f.data(), height, d.data(), v.data(), z.data());
        for (int y = 0; y < height; y++) grid[static_cast<size_t>(y) * width + x] = d[y];
    }
    for (int y = 0; y < height; y++) {
        double *row = grid.data() + static_cast<size_t>(y) * width;
        std::copy(row, row + width, f.begin());
        edt_1d(f.data(), width, d.data(), v.data(), z.data());
        std::copy(d.begin(), d.begin() + width, row);
    }
    for (double &g : grid) g = std::sqrt(g);
    return grid;
}

std::vector<uint8_t> mask_boundary(const MaskImage &m) {
    const int w = m.width(), h = m.height();
    std::vector<uint8_t> b(m.pixel_count(), 0);
    auto inside = [&](int x, int y) { return m.at(x, y) >= 0.5; };
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            if (!inside(x, y)) continue;
            bool edge = (x > 0 && !inside(x - 1, y)) || (x + 1 < w && !inside(x + 1, y)) ||
                        (y > 0 && !inside(x, y - 1)) || (y + 1 < h && !inside(x, y + 1));
            b[static_cast<size_t>(y) * w + x] = edge;
        }
    return b;
}

namespace {

struct ChamferParts {
    std::vector<uint8_t> boundary_a, boundary_b;
    std::vector<double> dt_a, dt_b;
    size_t count_a = 0, count_b = 0;
    double value = 0.0;
};

std::optional<ChamferParts> chamfer_parts(const MaskImage &a, const MaskImage &b) {
    check_same(a.width(), a.height(), b.width(), b.height(), "chamfer masks");
    ChamferParts p;
    p.boundary_a = mask_boundary(a);
    p.boundary_b = mask_boundary(b);
    for (uint8_t x : p.boundary_a) p.count_a += x;
    for (uint8_t x : p.boundary_b) p.count_b += x;
    if (p.count_a == 0 || p.count_b == 0) return std::nullopt;
    p.dt_a = distance_transform(p.boundary_a, a.width(), a.height());
    p.dt_b = distance_transform(p.boundary_b, b.width(), b.height());
    double sa = 0.0, sb = 0.0;
    for (size_t i = 0; i < p.boundary_a.size(); i++) {
        if (p.boundary_a[i]) sa += p.dt_b[i];
        if (p.boundary_b[i]) sb += p.dt_a[i];
    }
    p.value = 0.5 * (sa / p.count_a + sb / p.count_b) / image_diagonal(a.width(), a.height());
    return p;
}

} // namespace

std::optional<double> chamfer_distance(const MaskImage &a, const MaskImage &b) {
    auto p = chamfer_parts(a, b);
    if (!p) return std::nullopt;
    return p->value;
}

double mask_loss(const MaskImage &render, const MaskImage &ref, MaskImage *grad) {
    check_same(render.width(), render.height(), ref.width(), ref.height(), "mask_loss");
    const auto &r = render.values();
    const auto &t = ref.values();
    const double n = static_cast<double>(r.size());
    double l1 = 0.0;
    for (size_t i = 0; i < r.size(); i++) l1 += std::abs(r[i] - t[i]);
    l1 /= n;
    auto parts = chamfer_parts(render, ref);
    if (grad) {
        *grad = MaskImage(render.width(), render.height());
        auto &g = grad->values();
        for (size_t i = 0; i < r.size(); i++) g[i] = sign(r[i] - t[i]) / n;
        if (parts) {
            // Surrogate: coverage outside the reference is pushed down, inside
            // pulled up, saturating two pixels away from the boundary.
            const double w = 1.0 / (image_diagonal(render.width(), render.height()) * parts->count_a);
            for (size_t i = 0; i < r.size(); i++) {
                double sdf = t[i] >= 0.5 ? -parts->dt_b[i] : parts->dt_b[i];
                g[i] += w * std::clamp(sdf / 2.0, -1.0, 1.0);
            }
        }
    }
    return l1 + (parts ? parts->value : 0.0);
}

double pose_reg(const MaskImage &render, const MaskImage &ref, const Quaternion &q, const Quaternion &q_ref,
                MaskImage *grad_mask, Vec3 *grad_rotation) {
    check_same(render.width(), render.height(), ref.width(), ref.height(), "pose_reg");
    PixelCoord b_ref = mask_barycenter(ref);
    const double diag2 = std::pow(image_diagonal(ref.width(), ref.height()), 2);
    double value = 0.0;
    if (grad_mask) *grad_mask = MaskImage(render.width(), render.height());
    const double mass = render.sum();
    if (mass > 0.0) {
        PixelCoord b = mask_barycenter(render);
        double du = b.u - b_ref.u, dv = b.v - b_ref.v;
        value += (du * du + dv * dv) / diag2;
        if (grad_mask) {
            auto &g = grad_mask->values();
            for (int y = 0; y < render.height(); y++)
                for (int x = 0; x < render.width(); x++)
                    g[static_cast<size_t>(y) * render.width() + x] =
                        2.0 * (du * (x - b.u) + dv * (y - b.v)) / (mass * diag2);
        }
    }
    Quaternion r = align_sign(q_ref, q);
    Quaternion d{q.w - r.w, q.x - r.x, q.y - r.y, q.z - r.z};
    value += d.dot(d);
    if (grad_rotation) {
        for (int k = 0; k < 3; k++) {
            Quaternion e{0.0, k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0, k == 2 ? 1.0 : 0.0};
            Quaternion dq = e * q;
            (*grad_rotation)[k] = d.dot(dq); // 2 * d . (0.5 * e q)
        }
    }
    return value;
}

double pose_decay(int step, int t_decay) {
    if (t_decay <= 0) return 0.0;
    return std::max(0.0, 1.0 - double(step) / t_decay);
}

double total_loss(const LossTerms &t, double lambda_pose, double lambda_light, double decay) {
    return t.rgb + t.mask + lambda_pose * decay * t.pose_reg + lambda_light * t.light_reg;
}

Adam::Adam(size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

std::vector<double> Adam::delta(const std::vector<double> &grad, double lr) {
    if (grad.size() != m_.size()) throw Error(ErrorCode::DimensionMismatch, "Adam gradient size mismatch");
    t_++;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    std::vector<double> out(grad.size());
    for (size_t i = 0; i < grad.size(); i++) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        out[i] = -lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
    return out;
}

void Adam::step(std::vector<double> &x, const std::vector<double> &grad, double lr) {
    auto d = delta(grad, lr);
    for (size_t i = 0; i < x.size(); i++) x[i] += d[i];
}

void FitConfig::validate() const {
    if (!(lambda_pose >= 0.0)) throw ConfigError("lambda_pose", "must be >= 0");
    if (!(lambda_light >= 0.0)) throw ConfigError("lambda_light", "must be >= 0");
    if (!(decay_fraction >= 0.0 && decay_fraction <= 1.0)) throw ConfigError("decay_fraction", "must be in [0, 1]");
    if (steps < 1) throw ConfigError("steps", "must be >= 1");
    if (spp < 1) throw ConfigError("spp", "must be >= 1");
    if (final_spp < 1) throw ConfigError("final_spp", "must be >= 1");
    if (!(lr_env >= 0.0)) throw ConfigError("lr_env", "must be >= 0");
    if (!(lr_translation >= 0.0)) throw ConfigError("lr_translation", "must be >= 0");
    if (!(lr_rotation >= 0.0)) throw ConfigError("lr_rotation", "must be >= 0");
    if (!(lr_log_scale >= 0.0)) throw ConfigError("lr_log_scale", "must be >= 0");
    if (!(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0))
        throw ConfigError("lr_final_fraction", "must be in [0, 1]");
    if (n_pairs < 1) throw ConfigError("n_pairs", "must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
    if (env_height < 1 || env_width != 2 * env_height) throw ConfigError("env_width", "must equal 2 * env_height");
    if (!(aa_width >= 0.0)) throw ConfigError("aa_width", "must be >= 0");
    for (const auto &q : starts)
        if (!(q.norm() > 0.0)) throw ConfigError("starts", "orientation starts must be non-zero quaternions");
    if (initial_pose && !(initial_pose->scale > 0.0)) throw ConfigError("initial_pose.scale", "must be > 0");
}

int FitConfig::decay_steps() const { return static_cast<int>(std::lround(decay_fraction * steps)); }

std::vector<Quaternion> FitConfig::resolved_starts(const Quaternion &q_ref) const {
    if (!starts.empty()) {
        std::vector<Quaternion> s;
        for (const auto &q : starts) s.push_back(q.normalized());
        return s;
    }
    if (initial_pose) return {initial_pose->rotation.normalized()};
    std::vector<Quaternion> s;
    for (int k = 0; k < 4; k++)
        s.push_back((Quaternion::from_axis_angle({0.0, 1.0, 0.0}, k * kPi / 2.0) * q_ref).normalized());
    return s;
}

PoseScale initialize_pose(const MaskImage &ref_mask, const AlpModel &model, const PinholeCamera &cam,
                          const Quaternion &rotation, double aa_width, int threads) {
    const PixelCoord b_ref = mask_barycenter(ref_mask);
    const double area_ref = ref_mask.sum();
    const double radius = model.mesh->bounding_radius();
    double depth = cam.focal * radius * std::sqrt(kPi / area_ref);
    PixelCoord target = b_ref;
    PoseScale pose;
    pose.rotation = rotation.normalized();
    pose.scale = 1.0;
    pose.translation = unproject(cam, target.u, target.v, depth);
    for (int it = 0; it < 4; it++) {
        MaskImage m = rasterize(model, pose, cam, aa_width, threads).mask();
        double area = m.sum();
        if (area <= 0.0) break;
        PixelCoord b = mask_barycenter(m);
        depth *= std::sqrt(area / area_ref);
        target.u += b_ref.u - b.u;
        target.v += b_ref.v - b.v;
        pose.translation = unproject(cam, target.u, target.v, depth);
    }
    return pose;
}

namespace {

// Optimizes one orientation start. Throws NonFiniteLoss when the loss blows up.
void run_start(const HdrImage &ref, const MaskImage &ref_mask, const AlpModel &model, const PinholeCamera &cam,
               const FitConfig &cfg, const Rgb &mean_radiance, double peak, StartResult &out) {
    PoseScale pose;
    if (cfg.initial_pose) {
        pose = *cfg.initial_pose;
        pose.rotation = out.start;
    } else {
        pose = initialize_pose(ref_mask, model, cam, out.start, cfg.aa_width, cfg.threads);
    }
    EnvMap env = EnvMap::constant(cfg.env_width, cfg.env_height, mean_radiance);
    std::vector<double> params = env.params();
    Adam env_opt(params.size()), trans_opt(3), rot_opt(3), scale_opt(1);
    const Quaternion q_reg = out.start;
    const int t_decay = cfg.decay_steps();

    for (int step = 0; step < cfg.steps; step++) {
        RenderSettings rs{cfg.spp, derive_seed(cfg.seed, step), cfg.aa_width, cfg.threads};
        RenderOutput fwd = render(model, pose, cam, env, rs);
        LossTerms terms;
        HdrImage g_img;
        MaskImage g_mask, g_bary;
        Vec3 g_qreg;
        std::vector<double> g_light;
        terms.rgb = rgb_loss(fwd.image, fwd.mask, ref, ref_mask, &g_img);
        terms.mask = mask_loss(fwd.mask, ref_mask, &g_mask);
        terms.pose_reg = pose_reg(fwd.mask, ref_mask, pose.rotation, q_reg, &g_bary, &g_qreg);
        terms.light_reg = smoothness_loss(env, cfg.n_pairs, cfg.sigma, derive_seed(cfg.seed ^ 0x6c69676874ULL, step),
                                          &g_light);
        const double decay = pose_decay(step, t_decay);
        terms.total = total_loss(terms, cfg.lambda_pose, cfg.lambda_light, decay);
        if (!std::isfinite(terms.total))
            throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step));
        out.trace.push_back(terms);

        const double wp = cfg.lambda_pose * decay;
        MaskImage adj_mask = g_mask;
        for (size_t i = 0; i < adj_mask.values().size(); i++) adj_mask.values()[i] += wp * g_bary.values()[i];
        GradientRequest req{true, !cfg.freeze_pose, false};
        Gradients g = render_with_gradients(model, pose, cam, env, rs, g_img, adj_mask, req);
        for (size_t i = 0; i < g.env.size(); i++) g.env[i] += cfg.lambda_light * g_light[i];
        for (double x : g.env)
            if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteLoss, "non-finite lighting gradient");

        const double f = lr_factor(step, cfg.steps, cfg.lr_final_fraction);
        env_opt.step(params, g.env, cfg.lr_env * f);
        env.set_params(params);
        if (!cfg.freeze_pose) {
            Vec3 gr = g.rotation + g_qreg * wp;
            auto dt = trans_opt.delta({g.translation.x, g.translation.y, g.translation.z}, cfg.lr_translation * f);
            auto dr = rot_opt.delta({gr.x, gr.y, gr.z}, cfg.lr_rotation * f);
            auto ds = scale_opt.delta({g.log_scale}, cfg.lr_log_scale * f);
            if (!std::isfinite(dt[0] + dt[1] + dt[2] + dr[0] + dr[1] + dr[2] + ds[0]))
                throw Error(ErrorCode::NonFiniteLoss, "non-finite pose gradient");
            pose.translation += to_vec(dt);
            pose.rotation = (Quaternion::from_rotation_vector(to_vec(dr)) * pose.rotation).normalized();
            pose.scale *= std::exp(ds[0]);
        }
    }

    RenderSettings final_rs{cfg.final_spp, derive_seed(cfg.seed, 0x66696e616cULL), cfg.aa_width, cfg.threads};
    RenderOutput final_render = render(model, pose, cam, env, final_rs);
    out.psnr = psnr(final_render.image, ref, ref_mask, peak);
    out.pose = pose;
    out.env = std::move(env);
    out.ok = true;
}

} // namespace

FitResult estimate_lighting(const HdrImage &ref, const MaskImage &ref_mask, const AlpModel &model,
                            const PinholeCamera &cam, const FitConfig &cfg) {
    cfg.validate();
    cam.validate();
    check_same(ref.width(), ref.height(), cam.width, cam.height, "reference image vs camera");
    check_same(ref_mask.width(), ref_mask.height(), cam.width, cam.height, "reference mask vs camera");
    if (!(ref_mask.sum() > 0.0)) throw Error(ErrorCode::EmptyMask, "reference mask is empty");
    ref.validate();

    Rgb sum{0.0, 0.0, 0.0};
    double weight = 0.0, peak = 0.0;
    for (int y = 0; y < ref.height(); y++)
        for (int x = 0; x < ref.width(); x++) {
            double m = ref_mask.at(x, y);
            sum += ref.at(x, y) * m;
            weight += m;
            if (m >= 0.5) {
                Rgb c = ref.at(x, y);
                peak = std::max({peak, c.x, c.y, c.z});
            }
        }
    Rgb mean = sum / weight;
    if (!(peak > 0.0)) peak = 1.0;

    FitResult result;
    for (const Quaternion &q : cfg.resolved_starts(model.q_ref)) {
        StartResult s;
        s.start = q;
        try {
            run_start(ref, ref_mask, model, cam, cfg, mean, peak, s);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::NonFiniteLoss) throw;
            s.ok = false;
            s.error = e.what();
        }
        result.starts.push_back(std::move(s));
    }

    double top = -std::numeric_limits<double>::infinity();
    for (const auto &s : result.starts) {
        result.start_psnr.push_back(s.ok ? s.psnr : -std::numeric_limits<double>::infinity());
        if (s.ok) top = std::max(top, s.psnr);
    }
    // Starts within 1e-9 dB of the best tie; the tie is broken by the
    // canonical start quaternion so the choice ignores the list order.
    auto key = [](const Quaternion &q) {
        Quaternion c = q.normalized().canonical();
        return std::array<double, 4>{c.w, c.x, c.y, c.z};
    };
    int best = -1;
    for (size_t i = 0; i < result.starts.size(); i++) {
        const auto &s = result.starts[i];
        if (!s.ok || s.psnr < top - 1e-9) continue;
        if (best < 0 || key(s.start) < key(result.starts[best].start)) best = static_cast<int>(i);
    }
    if (best < 0) throw Error(ErrorCode::NonFiniteLoss, "every orientation start diverged");
    result.selected = best;
    result.pose = result.starts[best].pose;
    result.env = result.starts[best].env;
    result.trace = result.starts[best].trace;
    return result;
}

void ReconstructConfig::validate() const {
    if (texture_width < 1) throw ConfigError("texture_width", "must be >= 1");
    if (texture_height < 1) throw ConfigError("texture_height", "must be >= 1");
    if (steps < 1) throw ConfigError("steps", "must be >= 1");
    if (spp < 1) throw ConfigError("spp", "must be >= 1");
    if (!(initial_pose.scale > 0.0)) throw ConfigError("initial_pose.scale", "must be > 0");
    if (!(aa_width >= 0.0)) throw ConfigError("aa_width", "must be >= 0");
    for (double lr : {lr_albedo, lr_roughness, lr_visibility, lr_translation, lr_rotation, lr_log_scale})
        if (!(lr >= 0.0)) throw ConfigError("lr", "learning rates must be >= 0");
}

ReconstructResult reconstruct_alp(const std::vector<Capture> &captures, const TriMesh &mesh,
                                  const ReconstructConfig &cfg) {
    if (captures.size() < 3)
        throw Error(ErrorCode::TooFewViews, "need at least 3 views, got " + std::to_string(captures.size()));
    cfg.validate();
    for (const auto &c : captures) {
        c.camera.validate();
        check_same(c.image.width(), c.image.height(), c.camera.width, c.camera.height, "capture image vs camera");
        check_same(c.mask.width(), c.mask.height(), c.camera.width, c.camera.height, "capture mask vs camera");
        if (c.env.width() < 1) throw Error(ErrorCode::InvalidArgument, "capture is missing its environment map");
    }
    const int tw = cfg.texture_width, th = cfg.texture_height;
    Texture albedo = cfg.albedo ? *cfg.albedo
                                : Texture::constant(tw, th, {cfg.initial_albedo.x, cfg.initial_albedo.y, cfg.initial_albedo.z});
    Texture rough = cfg.roughness ? *cfg.roughness : Texture::constant(tw, th, {cfg.initial_roughness});
    Texture vis = cfg.visibility ? *cfg.visibility : Texture::constant(tw, th, {cfg.initial_visibility});
    AlpModel model = AlpModel::make(mesh, albedo, rough, vis);
    PoseScale pose = cfg.initial_pose;
    pose.rotation = pose.rotation.normalized();

    Adam a_opt(model.albedo.data.size()), r_opt(model.roughness.data.size()), v_opt(model.visibility.data.size());
    Adam trans_opt(3), rot_opt(3), scale_opt(1);
    const double inv_views = 1.0 / captures.size();
    ReconstructResult result;

    for (int step = 0; step < cfg.steps; step++) {
        LossTerms terms;
        Gradients acc;
        acc.albedo.assign(model.albedo.data.size(), 0.0);
        acc.roughness.assign(model.roughness.data.size(), 0.0);
        acc.visibility.assign(model.visibility.data.size(), 0.0);
        const uint64_t step_seed = derive_seed(cfg.seed, step);
        for (size_t v = 0; v < captures.size(); v++) {
            const Capture &c = captures[v];
            RenderSettings rs{cfg.spp, derive_seed(step_seed, v), cfg.aa_width, cfg.threads};
            RenderOutput fwd = render(model, pose, c.camera, c.env, rs);
            HdrImage g_img;
            MaskImage g_mask;
            double rgb = rgb_loss(fwd.image, fwd.mask, c.image, c.mask, &g_img);
            double msk = mask_loss(fwd.mask, c.mask, &g_mask);
            terms.rgb += rgb * inv_views;
            terms.mask += msk * inv_views;
            for (double &x : g_img.data()) x *= inv_views;
            for (double &x : g_mask.values()) x *= inv_views;
            GradientRequest req{false, cfg.optimize_pose, cfg.optimize_textures};
            Gradients g = render_with_gradients(model, pose, c.camera, c.env, rs, g_img, g_mask, req);
            acc.translation += g.translation;
            acc.rotation += g.rotation;
            acc.log_scale += g.log_scale;
            for (size_t i = 0; i < g.albedo.size(); i++) acc.albedo[i] += g.albedo[i];
            for (size_t i = 0; i < g.roughness.size(); i++) acc.roughness[i] += g.roughness[i];
            for (size_t i = 0; i < g.visibility.size(); i++) acc.visibility[i] += g.visibility[i];
        }
        terms.total = terms.rgb + terms.mask;
        if (!std::isfinite(terms.total))
            throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step));
        result.trace.push_back(terms);

        const double f = lr_factor(step, cfg.steps, cfg.lr_final_fraction);
        if (cfg.optimize_textures) {
            a_opt.step(model.albedo.data, acc.albedo, cfg.lr_albedo * f);
            r_opt.step(model.roughness.data, acc.roughness, cfg.lr_roughness * f);
            if (cfg.optimize_visibility) v_opt.step(model.visibility.data, acc.visibility, cfg.lr_visibility * f);
            // Projection onto the valid ranges.
            for (double &x : model.albedo.data) x = std::clamp(x, 0.0, 1.0);
            for (double &x : model.roughness.data) x = std::clamp(x, kMinRoughness, 1.0);
            for (double &x : model.visibility.data) x = std::clamp(x, 0.0, 1.0);
        }
        if (cfg.optimize_pose) {
            auto dt = trans_opt.delta({acc.translation.x, acc.translation.y, acc.translation.z}, cfg.lr_translation * f);
            auto dr = rot_opt.delta({acc.rotation.x, acc.rotation.y, acc.rotation.z}, cfg.lr_rotation * f);
            auto ds = scale_opt.delta({acc.log_scale}, cfg.lr_log_scale * f);
            if (!std::isfinite(dt[0] + dt[1] + dt[2] + dr[0] + dr[1] + dr[2] + ds[0]))
                throw Error(ErrorCode::NonFiniteLoss, "non-finite pose gradient");
            pose.translation += to_vec(dt);
            pose.rotation = (Quaternion::from_rotation_vector(to_vec(dr)) * pose.rotation).normalized();
            pose.scale *= std::exp(ds[0]);
        }
    }

    // A texel counts as observed in a view when the hit pixels put at least
    // one pixel's worth of bilinear weight on it.
    result.texel_views.assign(model.albedo.texel_count(), 0);
    for (const auto &c : captures) {
        GBuffer g = rasterize(model, pose, c.camera, cfg.aa_width, cfg.threads);
        std::vector<double> weight(model.albedo.texel_count(), 0.0);
        for (const auto &p : g.pixels) {
            if (!p.hit || p.coverage < 0.5) continue;
            std::array<uint32_t, 4> texel;
            std::array<double, 4> w;
            model.albedo.bilinear(p.uv.u, p.uv.v, texel, w);
            for (int q = 0; q < 4; q++) weight[texel[q]] += w[q];
        }
        for (size_t t = 0; t < weight.size(); t++) result.texel_views[t] += weight[t] >= 1.0;
    }
    result.model = std::move(model);
    result.pose = pose;
    return result;
}

} // namespace alp
