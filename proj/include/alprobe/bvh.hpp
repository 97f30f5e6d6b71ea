#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "alprobe/mesh.hpp"

namespace alp {

struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};

    void grow(const Vec3 &p);
    void grow(const Aabb &b);
    double surface_area() const;
    Vec3 centroid() const { return 0.5 * (lo + hi); }
};

struct TriangleHit {
    uint32_t triangle = 0;
    double t = 0.0;
    // Barycentric weights of vertices 1 and 2; vertex 0 gets 1 - b1 - b2.
    double b1 = 0.0;
    double b2 = 0.0;
};

// Moller-Trumbore, two-sided. Returns nothing when the ray misses or the hit
// lies outside (t_min, t_max).
std::optional<TriangleHit> intersect_triangle(const Vec3 &origin, const Vec3 &dir, const Vec3 &p0,
                                              const Vec3 &p1, const Vec3 &p2, double t_min, double t_max);

// Bounding volume hierarchy over a TriMesh, built with binned SAH and stored
// as a flat array in depth-first order (second child index explicit).
class Bvh {
public:
    Bvh() = default;
    explicit Bvh(const TriMesh &mesh);

    // Nearest hit along origin + t * dir, t in (t_min, t_max).
    std::optional<TriangleHit> intersect(const Vec3 &origin, const Vec3 &dir, double t_min = 1e-9,
                                         double t_max = 1e300) const;

    size_t node_count() const { return nodes_.size(); }
    int depth() const;

private:
    struct Node {
        Aabb box;
        uint32_t first = 0; // leaf: first primitive; interior: second child
        uint16_t count = 0; // leaf primitive count, 0 for interior nodes
        uint8_t axis = 0;
    };

    uint32_t build(uint32_t begin, uint32_t end, std::vector<Aabb> &boxes, std::vector<Vec3> &centers);

    std::vector<Node> nodes_;
    std::vector<uint32_t> prims_;
    std::vector<std::array<Vec3, 3>> tris_;
};

// Mesh edges with their adjacent faces, welded by exact position so that uv
// and normal seams do not create spurious boundaries.
struct EdgeTopology {
    struct Edge {
        uint32_t v0 = 0; // vertex indices into the mesh (one representative each)
        uint32_t v1 = 0;
        int32_t face0 = -1;
        int32_t face1 = -1; // -1 for boundary edges
    };
    std::vector<Edge> edges;
    std::vector<Vec3> face_normals; // object space, unnormalized orientation only

    static EdgeTopology build(const TriMesh &mesh);
};

// Everything ray casting needs about a mesh, built once.
struct MeshAccel {
    Bvh bvh;
    EdgeTopology topology;

    explicit MeshAccel(const TriMesh &mesh) : bvh(mesh), topology(EdgeTopology::build(mesh)) {}
};

} // namespace alp
