#include "alprobe/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>

namespace alp {

void TriMesh::validate() const {
    if (normals.size() != vertices.size() || uvs.size() != vertices.size()) {
        throw Error(ErrorCode::InvalidMesh, "normals and uvs must have one entry per vertex");
    }
    if (triangles.empty()) throw Error(ErrorCode::InvalidMesh, "mesh has no triangles");
    for (size_t t = 0; t < triangles.size(); t++) {
        for (uint32_t i : triangles[t]) {
            if (i >= vertices.size()) {
                std::ostringstream os;
                os << "triangle " << t << " references vertex " << i << " out of range";
                throw Error(ErrorCode::InvalidMesh, os.str());
            }
        }
    }
    for (size_t i = 0; i < normals.size(); i++) {
        if (std::abs(length(normals[i]) - 1.0) > 1e-6) {
            std::ostringstream os;
            os << "normal " << i << " is not unit length";
            throw Error(ErrorCode::InvalidMesh, os.str());
        }
    }
    for (size_t i = 0; i < uvs.size(); i++) {
        const Uv &uv = uvs[i];
        if (!(uv.u >= -1e-9 && uv.u <= 1.0 + 1e-9 && uv.v >= -1e-9 && uv.v <= 1.0 + 1e-9)) {
            std::ostringstream os;
            os << "uv " << i << " lies outside [0,1]^2";
            throw Error(ErrorCode::InvalidMesh, os.str());
        }
    }
    std::vector<size_t> degenerate;
    for (size_t t = 0; t < triangles.size(); t++) {
        if (!(triangle_area(t) > 1e-12)) degenerate.push_back(t);
    }
    if (!degenerate.empty()) {
        std::ostringstream os;
        os << degenerate.size() << " degenerate triangle(s):";
        for (size_t k = 0; k < std::min<size_t>(degenerate.size(), 16); k++) os << ' ' << degenerate[k];
        if (degenerate.size() > 16) os << " ...";
        throw Error(ErrorCode::DegenerateTriangle, os.str());
    }
}

double TriMesh::triangle_area(size_t t) const {
    const auto &tri = triangles[t];
    Vec3 e1 = vertices[tri[1]] - vertices[tri[0]];
    Vec3 e2 = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * length(cross(e1, e2));
}

double TriMesh::surface_area() const {
    double a = 0.0;
    for (size_t t = 0; t < triangles.size(); t++) a += triangle_area(t);
    return a;
}

double TriMesh::bounding_radius() const {
    double r = 0.0;
    for (const Vec3 &v : vertices) r = std::max(r, length(v));
    return r;
}

TriMesh make_uv_sphere(int rings, int segments, double radius) {
    if (rings < 3 || segments < 3) {
        throw Error(ErrorCode::InvalidResolution, "uv sphere needs rings >= 3 and segments >= 3");
    }
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
    TriMesh m;
    auto direction = [&](int ring, int seg) {
        // seg wraps so that the seam column reuses bit-identical positions
        double theta = kPi * ring / rings;
        double phi = 2.0 * kPi * (seg % segments) / segments;
        return Vec3{std::sin(theta) * std::cos(phi), std::cos(theta), -std::sin(theta) * std::sin(phi)};
    };
    // Interior rings 1..rings-1, segments+1 columns each.
    for (int ring = 1; ring < rings; ring++) {
        for (int seg = 0; seg <= segments; seg++) {
            Vec3 d = direction(ring, seg);
            m.vertices.push_back(radius * d);
            m.normals.push_back(d);
            m.uvs.push_back({static_cast<double>(seg) / segments, static_cast<double>(ring) / rings});
        }
    }
    auto grid = [&](int ring, int seg) { return static_cast<uint32_t>((ring - 1) * (segments + 1) + seg); };
    uint32_t north = static_cast<uint32_t>(m.vertices.size());
    for (int seg = 0; seg < segments; seg++) {
        m.vertices.push_back({0.0, radius, 0.0});
        m.normals.push_back({0.0, 1.0, 0.0});
        m.uvs.push_back({(seg + 0.5) / segments, 0.0});
    }
    uint32_t south = static_cast<uint32_t>(m.vertices.size());
    for (int seg = 0; seg < segments; seg++) {
        m.vertices.push_back({0.0, -radius, 0.0});
        m.normals.push_back({0.0, -1.0, 0.0});
        m.uvs.push_back({(seg + 0.5) / segments, 1.0});
    }
    // Counter-clockwise seen from outside.
    for (int seg = 0; seg < segments; seg++) {
        m.triangles.push_back({north + seg, grid(1, seg), grid(1, seg + 1)});
    }
    for (int ring = 1; ring < rings - 1; ring++) {
        for (int seg = 0; seg < segments; seg++) {
            uint32_t a = grid(ring, seg), b = grid(ring, seg + 1);
            uint32_t c = grid(ring + 1, seg), d = grid(ring + 1, seg + 1);
            m.triangles.push_back({a, c, d});
            m.triangles.push_back({a, d, b});
        }
    }
    for (int seg = 0; seg < segments; seg++) {
        m.triangles.push_back({south + seg, grid(rings - 1, seg + 1), grid(rings - 1, seg)});
    }
    m.validate();
    return m;
}

TriMesh make_cylinder(int segments, double radius, double height, bool caps) {
    if (segments < 3) throw Error(ErrorCode::InvalidResolution, "cylinder needs segments >= 3");
    if (!(radius > 0.0) || !(height > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "cylinder radius and height must be positive");
    }
    TriMesh m;
    const double top = 0.5 * height, bottom = -0.5 * height;
    auto around = [&](int seg) {
        double phi = 2.0 * kPi * (seg % segments) / segments;
        return Vec3{std::cos(phi), 0.0, -std::sin(phi)};
    };
    // Side.
    for (int seg = 0; seg <= segments; seg++) {
        Vec3 d = around(seg);
        double u = static_cast<double>(seg) / segments;
        m.vertices.push_back({radius * d.x, top, radius * d.z});
        m.normals.push_back(d);
        m.uvs.push_back({u, 0.1});
        m.vertices.push_back({radius * d.x, bottom, radius * d.z});
        m.normals.push_back(d);
        m.uvs.push_back({u, 0.9});
    }
    for (int seg = 0; seg < segments; seg++) {
        uint32_t a = 2 * seg, b = 2 * seg + 1, c = 2 * seg + 2, d = 2 * seg + 3;
        m.triangles.push_back({a, b, d});
        m.triangles.push_back({a, d, c});
    }
    if (caps) {
        for (int side = 0; side < 2; side++) {
            const double y = side == 0 ? top : bottom;
            const Vec3 n{0.0, side == 0 ? 1.0 : -1.0, 0.0};
            const double v_rim = side == 0 ? 0.1 : 0.9;
            const double v_center = side == 0 ? 0.0 : 1.0;
            uint32_t rim = static_cast<uint32_t>(m.vertices.size());
            for (int seg = 0; seg <= segments; seg++) {
                Vec3 d = around(seg);
                m.vertices.push_back({radius * d.x, y, radius * d.z});
                m.normals.push_back(n);
                m.uvs.push_back({static_cast<double>(seg) / segments, v_rim});
            }
            uint32_t center = static_cast<uint32_t>(m.vertices.size());
            for (int seg = 0; seg < segments; seg++) {
                m.vertices.push_back({0.0, y, 0.0});
                m.normals.push_back(n);
                m.uvs.push_back({(seg + 0.5) / segments, v_center});
            }
            for (int seg = 0; seg < segments; seg++) {
                if (side == 0) {
                    m.triangles.push_back({center + seg, rim + seg, rim + seg + 1});
                } else {
                    m.triangles.push_back({center + seg, rim + seg + 1, rim + seg});
                }
            }
        }
    }
    m.validate();
    return m;
}

TriMesh make_plate(double width, double height) {
    if (!(width > 0.0) || !(height > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "plate size must be positive");
    }
    TriMesh m;
    double hw = 0.5 * width, hh = 0.5 * height;
    m.vertices = {{-hw, -hh, 0.0}, {hw, -hh, 0.0}, {hw, hh, 0.0}, {-hw, hh, 0.0}};
    m.normals.assign(4, Vec3{0.0, 0.0, 1.0});
    m.uvs = {{0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    m.validate();
    return m;
}

namespace {

int resolve_obj_index(long idx, size_t count, int line) {
    long r = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || r < 0 || r >= static_cast<long>(count)) {
        throw Error(ErrorCode::InvalidMesh, "obj line " + std::to_string(line) + ": index out of range");
    }
    return static_cast<int>(r);
}

} // namespace

TriMesh parse_obj(std::istream &in) {
    std::vector<Vec3> positions, normals;
    std::vector<Uv> texcoords;
    using Corner = std::tuple<int, int, int>; // v, vt, vn (-1 when absent)
    std::vector<std::array<Corner, 3>> faces;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) {
                throw Error(ErrorCode::InvalidMesh, "obj line " + std::to_string(line_no) + ": bad vertex");
            }
            positions.push_back(p);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ls >> n.x >> n.y >> n.z)) {
                throw Error(ErrorCode::InvalidMesh, "obj line " + std::to_string(line_no) + ": bad normal");
            }
            normals.push_back(n);
        } else if (tag == "vt") {
            Uv t;
            if (!(ls >> t.u >> t.v)) {
                throw Error(ErrorCode::InvalidMesh, "obj line " + std::to_string(line_no) + ": bad texcoord");
            }
            // OBJ texture space has v pointing up; images are stored top-down.
            t.v = 1.0 - t.v;
            texcoords.push_back(t);
        } else if (tag == "f") {
            std::vector<Corner> poly;
            std::string tok;
            while (ls >> tok) {
                int v = -1, vt = -1, vn = -1;
                size_t s1 = tok.find('/');
                v = resolve_obj_index(std::stol(tok.substr(0, s1)), positions.size(), line_no);
                if (s1 != std::string::npos) {
                    size_t s2 = tok.find('/', s1 + 1);
                    std::string a = tok.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1);
                    if (!a.empty()) vt = resolve_obj_index(std::stol(a), texcoords.size(), line_no);
                    if (s2 != std::string::npos) {
                        std::string b = tok.substr(s2 + 1);
                        if (!b.empty()) vn = resolve_obj_index(std::stol(b), normals.size(), line_no);
                    }
                }
                poly.emplace_back(v, vt, vn);
            }
            if (poly.size() < 3) {
                throw Error(ErrorCode::InvalidMesh, "obj line " + std::to_string(line_no) + ": face with < 3 corners");
            }
            for (size_t k = 1; k + 1 < poly.size(); k++) faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }

    TriMesh m;
    std::map<Corner, uint32_t> corner_index;
    std::vector<bool> has_normal;
    for (const auto &f : faces) {
        std::array<uint32_t, 3> tri{};
        for (int k = 0; k < 3; k++) {
            auto it = corner_index.find(f[k]);
            if (it == corner_index.end()) {
                auto [v, vt, vn] = f[k];
                uint32_t id = static_cast<uint32_t>(m.vertices.size());
                m.vertices.push_back(positions[v]);
                m.uvs.push_back(vt >= 0 ? texcoords[vt] : Uv{});
                m.normals.push_back(vn >= 0 ? normals[vn] : Vec3{});
                has_normal.push_back(vn >= 0);
                it = corner_index.emplace(f[k], id).first;
            }
            tri[k] = it->second;
        }
        m.triangles.push_back(tri);
    }
    // Fill missing normals by area-weighted face normals over shared positions.
    if (std::find(has_normal.begin(), has_normal.end(), false) != has_normal.end()) {
        std::map<std::tuple<double, double, double>, Vec3> accum;
        for (const auto &t : m.triangles) {
            Vec3 fn = cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]);
            for (uint32_t i : t) {
                const Vec3 &p = m.vertices[i];
                accum[{p.x, p.y, p.z}] += fn;
            }
        }
        for (size_t i = 0; i < m.vertices.size(); i++) {
            if (has_normal[i]) continue;
            const Vec3 &p = m.vertices[i];
            m.normals[i] = accum[{p.x, p.y, p.z}];
        }
    }
    for (Vec3 &n : m.normals) {
        double len = length(n);
        if (len > 0.0) n = n / len;
    }
    for (Uv &t : m.uvs) {
        t.u = std::clamp(t.u, 0.0, 1.0);
        t.v = std::clamp(t.v, 0.0, 1.0);
    }
    m.validate();
    return m;
}

TriMesh load_obj(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open mesh file " + path.string());
    return parse_obj(in);
}

void save_obj(const TriMesh &mesh, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write mesh file " + path.string());
    out.precision(17);
    for (const Vec3 &v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const Uv &t : mesh.uvs) out << "vt " << t.u << ' ' << 1.0 - t.v << '\n';
    for (const Vec3 &n : mesh.normals) out << "vn " << n.x << ' ' << n.y << ' ' << n.z << '\n';
    for (const auto &t : mesh.triangles) {
        out << 'f';
        for (uint32_t i : t) out << ' ' << i + 1 << '/' << i + 1 << '/' << i + 1;
        out << '\n';
    }
}

} // namespace alp
