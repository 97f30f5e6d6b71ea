#include "alprobe/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace alp {

void Aabb::grow(const Vec3 &p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void Aabb::grow(const Aabb &b) {
    grow(b.lo);
    grow(b.hi);
}

double Aabb::surface_area() const {
    Vec3 e = hi - lo;
    if (e.x < 0.0) return 0.0;
    return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
}

std::optional<TriangleHit> intersect_triangle(const Vec3 &origin, const Vec3 &dir, const Vec3 &p0,
                                              const Vec3 &p1, const Vec3 &p2, double t_min, double t_max) {
    Vec3 e1 = p1 - p0;
    Vec3 e2 = p2 - p0;
    Vec3 pvec = cross(dir, e2);
    double det = dot(e1, pvec);
    if (std::abs(det) < 1e-300) return std::nullopt;
    double inv_det = 1.0 / det;
    Vec3 tvec = origin - p0;
    double b1 = dot(tvec, pvec) * inv_det;
    if (b1 < 0.0 || b1 > 1.0) return std::nullopt;
    Vec3 qvec = cross(tvec, e1);
    double b2 = dot(dir, qvec) * inv_det;
    if (b2 < 0.0 || b1 + b2 > 1.0) return std::nullopt;
    double t = dot(e2, qvec) * inv_det;
    if (t <= t_min || t >= t_max) return std::nullopt;
    return TriangleHit{0, t, b1, b2};
}

namespace {

constexpr int kBins = 16;
constexpr uint32_t kMaxLeaf = 4;

bool ray_box(const Aabb &b, const Vec3 &origin, const Vec3 &inv_dir, double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; a++) {
        double tn = (b.lo[a] - origin[a]) * inv_dir[a];
        double tf = (b.hi[a] - origin[a]) * inv_dir[a];
        if (tn > tf) std::swap(tn, tf);
        t0 = tn > t0 ? tn : t0;
        t1 = tf < t1 ? tf : t1;
        if (t0 > t1) return false;
    }
    return true;
}

} // namespace

Bvh::Bvh(const TriMesh &mesh) {
    const size_t n = mesh.triangles.size();
    tris_.resize(n);
    std::vector<Aabb> boxes(n);
    std::vector<Vec3> centers(n);
    prims_.resize(n);
    for (size_t i = 0; i < n; i++) {
        const auto &t = mesh.triangles[i];
        tris_[i] = {mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]};
        for (const Vec3 &p : tris_[i]) boxes[i].grow(p);
        centers[i] = boxes[i].centroid();
        prims_[i] = static_cast<uint32_t>(i);
    }
    nodes_.reserve(2 * n);
    if (n > 0) build(0, static_cast<uint32_t>(n), boxes, centers);
}

uint32_t Bvh::build(uint32_t begin, uint32_t end, std::vector<Aabb> &boxes, std::vector<Vec3> &centers) {
    uint32_t index = static_cast<uint32_t>(nodes_.size());
    nodes_.push_back({});
    Aabb box, cbox;
    for (uint32_t i = begin; i < end; i++) {
        box.grow(boxes[prims_[i]]);
        cbox.grow(centers[prims_[i]]);
    }
    nodes_[index].box = box;
    const uint32_t count = end - begin;

    auto make_leaf = [&] {
        nodes_[index].first = begin;
        nodes_[index].count = static_cast<uint16_t>(count);
    };
    if (count <= kMaxLeaf) {
        make_leaf();
        return index;
    }

    // Binned SAH over the centroid bounds.
    double best_cost = 1e300;
    int best_axis = -1, best_split = 0;
    for (int axis = 0; axis < 3; axis++) {
        double lo = cbox.lo[axis], hi = cbox.hi[axis];
        if (hi - lo < 1e-12) continue;
        Aabb bin_box[kBins];
        uint32_t bin_count[kBins] = {};
        double scale = kBins / (hi - lo);
        for (uint32_t i = begin; i < end; i++) {
            int b = std::min(kBins - 1, static_cast<int>((centers[prims_[i]][axis] - lo) * scale));
            bin_box[b].grow(boxes[prims_[i]]);
            bin_count[b]++;
        }
        double right_area[kBins];
        uint32_t right_count[kBins];
        Aabb acc;
        uint32_t cnt = 0;
        for (int b = kBins - 1; b > 0; b--) {
            acc.grow(bin_box[b]);
            cnt += bin_count[b];
            right_area[b] = acc.surface_area();
            right_count[b] = cnt;
        }
        acc = Aabb{};
        cnt = 0;
        for (int b = 0; b < kBins - 1; b++) {
            acc.grow(bin_box[b]);
            cnt += bin_count[b];
            if (cnt == 0 || right_count[b + 1] == 0) continue;
            double cost = acc.surface_area() * cnt + right_area[b + 1] * right_count[b + 1];
            if (cost < best_cost) {
                best_cost = cost;
                best_axis = axis;
                best_split = b + 1;
            }
        }
    }

    uint32_t mid;
    if (best_axis < 0) {
        if (count <= 32) {
            make_leaf();
            return index;
        }
        mid = begin + count / 2;
    } else {
        double lo = cbox.lo[best_axis];
        double scale = kBins / (cbox.hi[best_axis] - lo);
        auto it = std::partition(prims_.begin() + begin, prims_.begin() + end, [&](uint32_t p) {
            int b = std::min(kBins - 1, static_cast<int>((centers[p][best_axis] - lo) * scale));
            return b < best_split;
        });
        mid = static_cast<uint32_t>(it - prims_.begin());
        if (mid == begin || mid == end) mid = begin + count / 2;
    }
    nodes_[index].axis = static_cast<uint8_t>(best_axis < 0 ? 0 : best_axis);
    build(begin, mid, boxes, centers);
    uint32_t second = build(mid, end, boxes, centers);
    nodes_[index].first = second;
    nodes_[index].count = 0;
    return index;
}

std::optional<TriangleHit> Bvh::intersect(const Vec3 &origin, const Vec3 &dir, double t_min,
                                          double t_max) const {
    if (nodes_.empty()) return std::nullopt;
    Vec3 inv_dir{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    std::optional<TriangleHit> best;
    double closest = t_max;
    uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node &node = nodes_[stack[--sp]];
        if (!ray_box(node.box, origin, inv_dir, closest)) continue;
        if (node.count > 0) {
            for (uint32_t i = node.first; i < node.first + node.count; i++) {
                const auto &tri = tris_[prims_[i]];
                auto hit = intersect_triangle(origin, dir, tri[0], tri[1], tri[2], t_min, closest);
                if (hit) {
                    hit->triangle = prims_[i];
                    closest = hit->t;
                    best = hit;
                }
            }
        } else {
            uint32_t self = static_cast<uint32_t>(&node - nodes_.data());
            uint32_t first = self + 1, second = node.first;
            // Visit the child on the near side of the split first.
            if (dir[node.axis] < 0.0) std::swap(first, second);
            stack[sp++] = second;
            stack[sp++] = first;
        }
    }
    return best;
}

int Bvh::depth() const {
    if (nodes_.empty()) return 0;
    std::vector<std::pair<uint32_t, int>> stack{{0, 1}};
    int deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes_[i].count == 0) {
            stack.push_back({i + 1, d + 1});
            stack.push_back({nodes_[i].first, d + 1});
        }
    }
    return deepest;
}

EdgeTopology EdgeTopology::build(const TriMesh &mesh) {
    EdgeTopology topo;
    std::map<std::tuple<double, double, double>, uint32_t> weld;
    std::vector<uint32_t> welded(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); i++) {
        const Vec3 &p = mesh.vertices[i];
        welded[i] = weld.emplace(std::make_tuple(p.x, p.y, p.z), static_cast<uint32_t>(i)).first->second;
    }
    std::map<std::pair<uint32_t, uint32_t>, size_t> edge_index;
    topo.face_normals.resize(mesh.triangles.size());
    for (size_t f = 0; f < mesh.triangles.size(); f++) {
        const auto &t = mesh.triangles[f];
        topo.face_normals[f] = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        for (int k = 0; k < 3; k++) {
            uint32_t a = welded[t[k]], b = welded[t[(k + 1) % 3]];
            auto key = std::minmax(a, b);
            auto it = edge_index.find(key);
            if (it == edge_index.end()) {
                edge_index.emplace(key, topo.edges.size());
                topo.edges.push_back({key.first, key.second, static_cast<int32_t>(f), -1});
            } else {
                topo.edges[it->second].face1 = static_cast<int32_t>(f);
            }
        }
    }
    return topo;
}

} // namespace alp
