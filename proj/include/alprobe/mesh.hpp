#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "alprobe/core.hpp"

namespace alp {

struct Uv {
    double u = 0.0;
    double v = 0.0;
};

// Indexed triangle mesh in object units. Normals and uvs are per vertex.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<Vec3> normals;
    std::vector<Uv> uvs;

    // Throws InvalidMesh for bad indices/array sizes/normals and
    // DegenerateTriangle (listing the offending triangles) for area <= 1e-12.
    void validate() const;
    double triangle_area(size_t t) const;
    double surface_area() const;
    // Radius of the smallest origin-centered sphere enclosing every vertex.
    double bounding_radius() const;
};

// Latitude/longitude sphere centered at the origin. Each pole is fanned from
// one vertex per segment so that every triangle has a proper uv footprint.
// Vertex count: (rings - 1) * (segments + 1) + 2 * segments.
// Triangle count: 2 * segments * (rings - 1).
TriMesh make_uv_sphere(int rings, int segments, double radius);

// Upright (y axis) cylinder centered at the origin. The side occupies
// v in [0.1, 0.9] of the uv square, the caps the top and bottom strips.
TriMesh make_cylinder(int segments, double radius, double height, bool caps = true);

// Flat rectangle in the z = 0 plane facing +z.
TriMesh make_plate(double width, double height);

TriMesh parse_obj(std::istream &in);
TriMesh load_obj(const std::filesystem::path &path);
void save_obj(const TriMesh &mesh, const std::filesystem::path &path);

} // namespace alp
