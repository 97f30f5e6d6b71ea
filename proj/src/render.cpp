#include "alprobe/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "alprobe/parallel.hpp"
#include "alprobe/rng.hpp"

namespace alp {

Texture Texture::constant(int width, int height, const std::vector<double> &value) {
    if (width < 1 || height < 1 || value.empty())
        throw Error(ErrorCode::InvalidResolution, "texture needs at least one texel and one channel");
    Texture t;
    t.width = width;
    t.height = height;
    t.channels = static_cast<int>(value.size());
    t.data.resize(t.texel_count() * t.channels);
    for (size_t i = 0; i < t.texel_count(); i++)
        for (int c = 0; c < t.channels; c++) t.data[i * t.channels + c] = value[c];
    return t;
}

double Texture::sample(double u, double v, int c) const {
    std::array<uint32_t, 4> texel;
    std::array<double, 4> w;
    bilinear(u, v, texel, w);
    double r = 0.0;
    for (int q = 0; q < 4; q++) r += w[q] * data[texel[q] * channels + c];
    return r;
}

namespace {

void check_texture(const Texture &t, const char *name, int channels, double lo, double hi) {
    std::string n(name);
    if (t.width < 1 || t.height < 1) throw Error(ErrorCode::InvalidResolution, n + " texture is empty");
    if (t.channels != channels || t.data.size() != t.texel_count() * channels)
        throw Error(ErrorCode::InvalidArgument, n + " texture must have " + std::to_string(channels) + " channel(s)");
    for (double x : t.data)
        if (!(x >= lo - 1e-12 && x <= hi + 1e-12))
            throw Error(ErrorCode::InvalidArgument, n + " texel " + std::to_string(x) + " outside [" +
                                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

} // namespace

void AlpModel::validate() const {
    if (!mesh || !accel) throw Error(ErrorCode::InvalidMesh, "model has no mesh");
    mesh->validate();
    check_texture(albedo, "albedo", 3, 0.0, 1.0);
    check_texture(roughness, "roughness", 1, kMinRoughness, 1.0);
    check_texture(visibility, "visibility", 1, 0.0, 1.0);
    if (std::abs(q_ref.norm() - 1.0) > 1e-6) throw Error(ErrorCode::InvalidArgument, "q_ref must be a unit quaternion");
}

AlpModel AlpModel::make(TriMesh mesh, Texture albedo, Texture roughness, Texture visibility, Quaternion q_ref) {
    mesh.validate();
    AlpModel m;
    auto shared = std::make_shared<const TriMesh>(std::move(mesh));
    m.accel = std::make_shared<const MeshAccel>(*shared);
    m.mesh = std::move(shared);
    m.albedo = std::move(albedo);
    m.roughness = std::move(roughness);
    m.visibility = std::move(visibility);
    m.q_ref = q_ref;
    m.validate();
    return m;
}

AlpModel AlpModel::uniform(TriMesh mesh, const Rgb &albedo, double roughness, double visibility, int res) {
    return make(std::move(mesh), Texture::constant(res, res, {albedo.x, albedo.y, albedo.z}),
                Texture::constant(res, res, {std::clamp(roughness, kMinRoughness, 1.0)}),
                Texture::constant(res, res, {visibility}));
}

MaskImage GBuffer::mask() const {
    MaskImage m(width, height);
    for (size_t i = 0; i < pixels.size(); i++) m.values()[i] = pixels[i].coverage;
    return m;
}

namespace {

constexpr int kTile = 32;
// Tangent slots of the per-pixel duals.
constexpr int kTranslation = 0;
constexpr int kRotation = 3;
constexpr int kLogScale = 6;
constexpr int kAlbedo = 7;
constexpr int kRoughness = 10;
constexpr int kVisibility = 11;
constexpr int kPoseDims = 7;
constexpr int kAllDims = 12;

struct Frame {
    const TriMesh &mesh;
    const PinholeCamera &cam;
    Mat3 rot;
    double scale;
    Vec3 translation;

    Frame(const TriMesh &m, const PoseScale &pose, const PinholeCamera &c)
        : mesh(m), cam(c), rot(pose.rotation.normalized().to_matrix()), scale(pose.scale),
          translation(pose.translation) {}
};

template <int N>
Vec3T<Dual<N>> rotation_tangent() {
    using D = Dual<N>;
    return {D::variable(0.0, kRotation), D::variable(0.0, kRotation + 1), D::variable(0.0, kRotation + 2)};
}

// World position of an object-space point, differentiable in the pose when
// N covers the pose slots.
template <int N>
Vec3T<Dual<N>> world_point(const Frame &f, const Vec3 &p_obj) {
    using D = Dual<N>;
    Vec3T<D> p(f.rot * p_obj);
    if constexpr (N >= kPoseDims) {
        p = p + cross(rotation_tangent<N>(), p);
        D s = f.scale * (1.0 + D::variable(0.0, kLogScale));
        Vec3T<D> t{D::variable(f.translation.x, kTranslation), D::variable(f.translation.y, kTranslation + 1),
                   D::variable(f.translation.z, kTranslation + 2)};
        return p * s + t;
    } else {
        return p * D(f.scale) + Vec3T<D>(f.translation);
    }
}

template <int N>
bool project_point(const PinholeCamera &cam, const Vec3T<Dual<N>> &x, Dual<N> &u, Dual<N> &v) {
    using D = Dual<N>;
    Vec3T<D> xc = cam.rotation * x + Vec3T<D>(cam.translation);
    D depth = -xc.z;
    if (value(depth) <= 1e-6) return false;
    u = cam.cx + cam.focal * xc.x / depth;
    v = cam.cy - cam.focal * xc.y / depth;
    return true;
}

template <int N>
Dual<N> segment_distance(const Dual<N> &ax, const Dual<N> &ay, const Dual<N> &bx, const Dual<N> &by, double px,
                         double py) {
    using D = Dual<N>;
    D abx = bx - ax, aby = by - ay;
    D apx = px - ax, apy = py - ay;
    D len2 = abx * abx + aby * aby;
    D t(0.0);
    if (value(len2) > 0.0) t = clamp_value((apx * abx + apy * aby) / len2, 0.0, 1.0);
    D dx = apx - t * abx, dy = apy - t * aby;
    return sqrt(dx * dx + dy * dy);
}

// Screen-space distance from a pixel center to a projected silhouette edge.
template <int N>
Dual<N> edge_distance(const Frame &f, const SilhouetteEdge &e, double px, double py) {
    Dual<N> ax, ay, bx, by;
    project_point<N>(f.cam, world_point<N>(f, f.mesh.vertices[e.v0]), ax, ay);
    project_point<N>(f.cam, world_point<N>(f, f.mesh.vertices[e.v1]), bx, by);
    return segment_distance<N>(ax, ay, bx, by, px, py);
}

struct Segment2 {
    double ax, ay, bx, by;
};

GBuffer rasterize_impl(const TriMesh &mesh, const MeshAccel &accel, const PoseScale &pose,
                       const PinholeCamera &cam, double aa_width, int threads) {
    pose.validate();
    cam.validate();
    GBuffer g;
    g.width = cam.width;
    g.height = cam.height;
    g.pose = pose;
    g.camera = cam;
    g.aa_width = aa_width;
    g.pixels.assign(static_cast<size_t>(cam.width) * cam.height, GPixel{});
    const Frame f(mesh, pose, cam);
    const Mat3 rot_t = f.rot.transposed();
    const Vec3 center = cam.center();
    const Vec3 origin_obj = rot_t * (center - f.translation) / f.scale;
    const int nthreads = resolve_thread_count(threads);

    parallel_for(static_cast<size_t>(cam.height), nthreads, [&](size_t row) {
        int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; x++) {
            Ray ray = cam.pixel_ray(x, y);
            Vec3 dir_obj = rot_t * ray.direction / f.scale;
            auto hit = accel.bvh.intersect(origin_obj, dir_obj);
            if (!hit) continue;
            GPixel &p = g.pixels[static_cast<size_t>(y) * cam.width + x];
            const auto &tri = mesh.triangles[hit->triangle];
            double b0 = 1.0 - hit->b1 - hit->b2;
            p.hit = true;
            p.triangle = hit->triangle;
            p.b1 = hit->b1;
            p.b2 = hit->b2;
            p.position = ray.origin + ray.direction * hit->t;
            Vec3 n = mesh.normals[tri[0]] * b0 + mesh.normals[tri[1]] * hit->b1 + mesh.normals[tri[2]] * hit->b2;
            p.normal = UnitVec3::normalize(f.rot * n);
            const Uv &t0 = mesh.uvs[tri[0]], &t1 = mesh.uvs[tri[1]], &t2 = mesh.uvs[tri[2]];
            p.uv = {b0 * t0.u + hit->b1 * t1.u + hit->b2 * t2.u, b0 * t0.v + hit->b1 * t1.v + hit->b2 * t2.v};
            p.coverage = 1.0;
        }
    });

    if (aa_width <= 0.0) return g;

    // Silhouette: boundary edges and edges between a front- and a back-facing face.
    const EdgeTopology &topo = accel.topology;
    auto front_facing = [&](int32_t face) {
        Vec3 n = f.rot * topo.face_normals[face];
        Vec3 x = value(world_point<0>(f, mesh.vertices[mesh.triangles[face][0]]));
        return dot(n, x - center) < 0.0;
    };
    std::vector<Segment2> segs;
    for (const auto &e : topo.edges) {
        bool sil = e.face1 < 0 || front_facing(e.face0) != front_facing(e.face1);
        if (!sil) continue;
        Dual<0> ax, ay, bx, by;
        if (!project_point<0>(cam, world_point<0>(f, mesh.vertices[e.v0]), ax, ay)) continue;
        if (!project_point<0>(cam, world_point<0>(f, mesh.vertices[e.v1]), bx, by)) continue;
        g.silhouette.push_back({e.v0, e.v1});
        segs.push_back({ax.v, ay.v, bx.v, by.v});
    }

    // Bin segments into tiles so each pixel only tests nearby edges.
    const int ntx = (cam.width + kTile - 1) / kTile;
    const int nty = (cam.height + kTile - 1) / kTile;
    std::vector<std::vector<uint32_t>> bins(static_cast<size_t>(ntx) * nty);
    for (size_t s = 0; s < segs.size(); s++) {
        const Segment2 &sg = segs[s];
        double x0 = std::min(sg.ax, sg.bx) - aa_width, x1 = std::max(sg.ax, sg.bx) + aa_width;
        double y0 = std::min(sg.ay, sg.by) - aa_width, y1 = std::max(sg.ay, sg.by) + aa_width;
        if (x1 < -0.5 || y1 < -0.5 || x0 > cam.width - 0.5 || y0 > cam.height - 0.5) continue;
        int tx0 = std::clamp(static_cast<int>(std::floor(x0 / kTile)), 0, ntx - 1);
        int tx1 = std::clamp(static_cast<int>(std::floor(x1 / kTile)), 0, ntx - 1);
        int ty0 = std::clamp(static_cast<int>(std::floor(y0 / kTile)), 0, nty - 1);
        int ty1 = std::clamp(static_cast<int>(std::floor(y1 / kTile)), 0, nty - 1);
        for (int ty = ty0; ty <= ty1; ty++)
            for (int tx = tx0; tx <= tx1; tx++) bins[static_cast<size_t>(ty) * ntx + tx].push_back(static_cast<uint32_t>(s));
    }

    parallel_for(bins.size(), nthreads, [&](size_t tile) {
        int tx = static_cast<int>(tile % ntx), ty = static_cast<int>(tile / ntx);
        const auto &bin = bins[tile];
        if (bin.empty()) return;
        for (int y = ty * kTile; y < std::min(cam.height, (ty + 1) * kTile); y++) {
            for (int x = tx * kTile; x < std::min(cam.width, (tx + 1) * kTile); x++) {
                GPixel &p = g.pixels[static_cast<size_t>(y) * cam.width + x];
                if (!p.hit) continue;
                double best = aa_width;
                int32_t best_edge = -1;
                for (uint32_t s : bin) {
                    const Segment2 &sg = segs[s];
                    double d = segment_distance<0>(sg.ax, sg.ay, sg.bx, sg.by, x, y).v;
                    if (d < best) {
                        best = d;
                        best_edge = static_cast<int32_t>(s);
                    }
                }
                if (best_edge >= 0) {
                    p.edge = best_edge;
                    p.coverage = best / aa_width;
                }
            }
        }
    });
    return g;
}

struct TileGrad {
    std::vector<double> env;
    std::array<double, kPoseDims> pose{};
    std::vector<double> albedo, roughness, visibility;
};

struct ShadeJob {
    const GBuffer &g;
    const AlpModel &model;
    const EnvMap &env;
    int spp;
    uint64_t seed;
    const HdrImage *adj_image = nullptr;
    const MaskImage *adj_mask = nullptr;
    bool want_env = false;
};

template <int N>
void shade_pixel(const ShadeJob &job, const Frame &f, int x, int y, RenderOutput &out, TileGrad *tg) {
    using D = Dual<N>;
    using V = Vec3T<D>;
    const GBuffer &g = job.g;
    const size_t index = static_cast<size_t>(y) * g.width + x;
    const GPixel &gp = g.pixels[index];
    if (!gp.hit) return;
    const TriMesh &mesh = f.mesh;
    const auto &tri = mesh.triangles[gp.triangle];

    // Re-intersect the hit triangle with differentiable vertices.
    V w0 = world_point<N>(f, mesh.vertices[tri[0]]);
    V w1 = world_point<N>(f, mesh.vertices[tri[1]]);
    V w2 = world_point<N>(f, mesh.vertices[tri[2]]);
    Ray ray = g.camera.pixel_ray(x, y);
    V dir(ray.direction);
    V e1 = w1 - w0, e2 = w2 - w0;
    V pvec = cross(dir, e2);
    D det = dot(e1, pvec);
    V tvec = V(ray.origin) - w0;
    D b1 = dot(tvec, pvec) / det;
    V qvec = cross(tvec, e1);
    D b2 = dot(dir, qvec) / det;
    D b0 = 1.0 - b1 - b2;

    V n_obj = V(mesh.normals[tri[0]]) * b0 + V(mesh.normals[tri[1]]) * b1 + V(mesh.normals[tri[2]]) * b2;
    V nw = f.rot * n_obj;
    if constexpr (N >= kPoseDims) nw = nw + cross(rotation_tangent<N>(), nw);
    V n = normalize(nw);
    const Uv &t0 = mesh.uvs[tri[0]], &t1 = mesh.uvs[tri[1]], &t2 = mesh.uvs[tri[2]];
    D u = b0 * t0.u + b1 * t1.u + b2 * t2.u;
    D v = b0 * t0.v + b1 * t1.v + b2 * t2.v;

    const AlpModel &m = job.model;
    std::array<uint32_t, 4> at, rt, vt;
    std::array<D, 4> aw, rw, vw;
    m.albedo.bilinear(u, v, at, aw);
    m.roughness.bilinear(u, v, rt, rw);
    m.visibility.bilinear(u, v, vt, vw);
    V albedo;
    D rough(0.0), vis(0.0);
    for (int q = 0; q < 4; q++) {
        for (int c = 0; c < 3; c++) albedo[c] = albedo[c] + aw[q] * m.albedo.data[at[q] * 3 + c];
        rough = rough + rw[q] * m.roughness.data[rt[q]];
        vis = vis + vw[q] * m.visibility.data[vt[q]];
    }
    if constexpr (N >= kAllDims) {
        for (int c = 0; c < 3; c++) albedo[c] = albedo[c] + D::variable(0.0, kAlbedo + c);
        rough = rough + D::variable(0.0, kRoughness);
        vis = vis + D::variable(0.0, kVisibility);
    }

    D cov(gp.coverage);
    if constexpr (N >= kPoseDims) {
        if (gp.edge >= 0) cov = edge_distance<N>(f, g.silhouette[gp.edge], x, y) / g.aa_width;
    }

    Rgb adj{0.0, 0.0, 0.0};
    if (job.adj_image) adj = job.adj_image->at(x, y);
    const double inv_spp = 1.0 / job.spp;
    const double env_scale = value(cov) * value(vis) * inv_spp;
    const bool env_grad = job.want_env && tg && env_scale != 0.0 && (adj.x != 0.0 || adj.y != 0.0 || adj.z != 0.0);

    V wo(-ray.direction);
    D cos_o = dot(n, wo);
    V acc{D(0.0), D(0.0), D(0.0)};
    if (value(cos_o) > 0.0) {
        CounterRng rng(job.seed, index);
        EnvFootprint fp;
        for (int k = 0; k < job.spp; k++) {
            double u1 = rng.next();
            double u2 = rng.next();
            auto s = brdf::sample_vndf(rough, n, wo, u1, u2);
            D cos_i = dot(n, s.wi);
            if (value(cos_i) <= 0.0) continue;
            V fr = brdf::fresnel(albedo, s.cos_ho);
            D g1 = brdf::g1(rough, cos_i);
            V radiance = job.env.lookup(s.wi, env_grad ? &fp : nullptr);
            for (int c = 0; c < 3; c++) acc[c] = acc[c] + radiance[c] * fr[c] * g1;
            if (env_grad) {
                for (int c = 0; c < 3; c++) {
                    double coef = adj[c] * env_scale * value(fr[c]) * value(g1);
                    for (int q = 0; q < 4; q++) {
                        size_t p = 3 * static_cast<size_t>(fp.texel[q]) + c;
                        tg->env[p] += coef * fp.weight[q] * job.env.param_slope(p);
                    }
                }
            }
        }
    }
    D scale = cov * vis * inv_spp;
    V color = acc * scale;

    out.image.set(x, y, value(color));
    out.mask.values()[index] = value(cov);
    out.sample_count[index] = job.spp;

    if constexpr (N > 0) {
        if (!tg) return;
        double am = job.adj_mask ? job.adj_mask->values()[index] : 0.0;
        if constexpr (N >= kPoseDims) {
            for (int k = 0; k < kPoseDims; k++)
                tg->pose[k] += adj.x * color.x.d[k] + adj.y * color.y.d[k] + adj.z * color.z.d[k] + am * cov.d[k];
        }
        if constexpr (N >= kAllDims) {
            double mg[5];
            for (int j = 0; j < 5; j++)
                mg[j] = adj.x * color.x.d[kAlbedo + j] + adj.y * color.y.d[kAlbedo + j] + adj.z * color.z.d[kAlbedo + j];
            for (int q = 0; q < 4; q++) {
                for (int c = 0; c < 3; c++) tg->albedo[at[q] * 3 + c] += mg[c] * value(aw[q]);
                tg->roughness[rt[q]] += mg[3] * value(rw[q]);
                tg->visibility[vt[q]] += mg[4] * value(vw[q]);
            }
        }
    }
}

template <int N>
RenderOutput shade_all(const ShadeJob &job, int threads, const GradientRequest &req, Gradients *grads) {
    const GBuffer &g = job.g;
    const Frame f(*job.model.mesh, g.pose, g.camera);
    RenderOutput out;
    out.image = HdrImage(g.width, g.height);
    out.mask = MaskImage(g.width, g.height);
    out.sample_count.assign(static_cast<size_t>(g.width) * g.height, 0);
    const int ntx = (g.width + kTile - 1) / kTile;
    const int nty = (g.height + kTile - 1) / kTile;
    const size_t ntiles = static_cast<size_t>(ntx) * nty;
    std::vector<std::unique_ptr<TileGrad>> tiles(grads ? ntiles : 0);

    parallel_for(ntiles, resolve_thread_count(threads), [&](size_t tile) {
        int tx = static_cast<int>(tile % ntx), ty = static_cast<int>(tile / ntx);
        int x0 = tx * kTile, x1 = std::min(g.width, x0 + kTile);
        int y0 = ty * kTile, y1 = std::min(g.height, y0 + kTile);
        TileGrad *tg = nullptr;
        if (grads) {
            bool any = false;
            for (int y = y0; y < y1 && !any; y++)
                for (int x = x0; x < x1 && !any; x++) any = g.at(x, y).hit;
            if (any) {
                tiles[tile] = std::make_unique<TileGrad>();
                tg = tiles[tile].get();
                if (req.env) tg->env.assign(job.env.params().size(), 0.0);
                if (req.material) {
                    tg->albedo.assign(job.model.albedo.data.size(), 0.0);
                    tg->roughness.assign(job.model.roughness.data.size(), 0.0);
                    tg->visibility.assign(job.model.visibility.data.size(), 0.0);
                }
            }
        }
        for (int y = y0; y < y1; y++)
            for (int x = x0; x < x1; x++) shade_pixel<N>(job, f, x, y, out, tg);
    });

    if (grads) {
        // Merge in fixed tile order so the sums do not depend on scheduling.
        if (req.env) grads->env.assign(job.env.params().size(), 0.0);
        if (req.material) {
            grads->albedo.assign(job.model.albedo.data.size(), 0.0);
            grads->roughness.assign(job.model.roughness.data.size(), 0.0);
            grads->visibility.assign(job.model.visibility.data.size(), 0.0);
        }
        double pose[kPoseDims] = {};
        for (const auto &t : tiles) {
            if (!t) continue;
            for (size_t i = 0; i < t->env.size(); i++) grads->env[i] += t->env[i];
            for (int k = 0; k < kPoseDims; k++) pose[k] += t->pose[k];
            for (size_t i = 0; i < t->albedo.size(); i++) grads->albedo[i] += t->albedo[i];
            for (size_t i = 0; i < t->roughness.size(); i++) grads->roughness[i] += t->roughness[i];
            for (size_t i = 0; i < t->visibility.size(); i++) grads->visibility[i] += t->visibility[i];
        }
        if (req.pose) {
            grads->translation = {pose[kTranslation], pose[kTranslation + 1], pose[kTranslation + 2]};
            grads->rotation = {pose[kRotation], pose[kRotation + 1], pose[kRotation + 2]};
            grads->log_scale = pose[kLogScale];
        }
    }
    return out;
}

} // namespace

GBuffer rasterize(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, double aa_width,
                  int threads) {
    return rasterize_impl(*model.mesh, *model.accel, pose, cam, aa_width, threads);
}

GBuffer rasterize(const TriMesh &mesh, const PoseScale &pose, const PinholeCamera &cam, double aa_width,
                  int threads) {
    mesh.validate();
    MeshAccel accel(mesh);
    return rasterize_impl(mesh, accel, pose, cam, aa_width, threads);
}

RenderOutput shade(const GBuffer &g, const AlpModel &model, const EnvMap &env, int spp, uint64_t seed,
                   int threads) {
    if (spp < 1) throw Error(ErrorCode::InvalidArgument, "spp must be >= 1");
    ShadeJob job{g, model, env, spp, seed};
    return shade_all<0>(job, threads, {}, nullptr);
}

RenderOutput render(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, const EnvMap &env,
                    const RenderSettings &settings) {
    GBuffer g = rasterize(model, pose, cam, settings.aa_width, settings.threads);
    return shade(g, model, env, settings.spp, settings.seed, settings.threads);
}

Gradients render_with_gradients(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam,
                                const EnvMap &env, const RenderSettings &settings, const HdrImage &adjoint_image,
                                const MaskImage &adjoint_mask, const GradientRequest &request,
                                RenderOutput *forward) {
    if (settings.spp < 1) throw Error(ErrorCode::InvalidArgument, "spp must be >= 1");
    if (adjoint_image.width() != cam.width || adjoint_image.height() != cam.height ||
        adjoint_mask.width() != cam.width || adjoint_mask.height() != cam.height)
        throw Error(ErrorCode::DimensionMismatch, "adjoint images must match the camera resolution");
    GBuffer g = rasterize(model, pose, cam, settings.aa_width, settings.threads);
    ShadeJob job{g, model, env, settings.spp, settings.seed, &adjoint_image, &adjoint_mask, request.env};
    Gradients grads;
    RenderOutput out;
    if (request.material)
        out = shade_all<kAllDims>(job, settings.threads, request, &grads);
    else if (request.pose)
        out = shade_all<kPoseDims>(job, settings.threads, request, &grads);
    else
        out = shade_all<0>(job, settings.threads, request, &grads);
    if (forward) *forward = std::move(out);
    return grads;
}

} // namespace alp
