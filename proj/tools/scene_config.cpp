#include "scene_config.hpp"

#include <fstream>

#include "alprobe/io.hpp"

namespace alp::cli {

namespace fs = std::filesystem;

json default_config() {
    FitConfig f;
    ReconstructConfig r;
    RenderSettings rs;
    return json{
        {"seed", 0},
        {"threads", 0},
        {"output_dir", "out"},
        {"mesh", nullptr},
        {"material",
         {{"albedo", {0.8, 0.8, 0.8}}, {"roughness", 0.2}, {"visibility", 1.0}, {"q_ref", {1.0, 0.0, 0.0, 0.0}}}},
        {"camera",
         {{"width", 128},
          {"height", 128},
          {"focal", 200.0},
          {"look_at", {{"eye", {0.0, 0.0, 4.0}}, {"target", {0.0, 0.0, 0.0}}, {"up", {0.0, 1.0, 0.0}}}}}},
        {"pose", pose_to_json(PoseScale{})},
        {"env", nullptr},
        {"reference", nullptr},
        {"mask", nullptr},
        {"render", {{"spp", rs.spp}, {"aa_width", rs.aa_width}}},
        {"fit",
         {{"lambda_pose", f.lambda_pose},
          {"lambda_light", f.lambda_light},
          {"decay_fraction", f.decay_fraction},
          {"steps", f.steps},
          {"spp", f.spp},
          {"final_spp", f.final_spp},
          {"lr_env", f.lr_env},
          {"lr_translation", f.lr_translation},
          {"lr_rotation", f.lr_rotation},
          {"lr_log_scale", f.lr_log_scale},
          {"lr_final_fraction", f.lr_final_fraction},
          {"starts", json::array()},
          {"n_pairs", f.n_pairs},
          {"sigma_degrees", f.sigma * 180.0 / kPi},
          {"env_width", f.env_width},
          {"env_height", f.env_height},
          {"aa_width", f.aa_width},
          {"freeze_pose", f.freeze_pose},
          {"initial_pose", nullptr}}},
        {"reconstruct",
         {{"texture_width", r.texture_width},
          {"texture_height", r.texture_height},
          {"steps", r.steps},
          {"spp", r.spp},
          {"lr_albedo", r.lr_albedo},
          {"lr_roughness", r.lr_roughness},
          {"lr_visibility", r.lr_visibility},
          {"lr_translation", r.lr_translation},
          {"lr_rotation", r.lr_rotation},
          {"lr_log_scale", r.lr_log_scale},
          {"lr_final_fraction", r.lr_final_fraction},
          {"initial_albedo", {r.initial_albedo.x, r.initial_albedo.y, r.initial_albedo.z}},
          {"initial_roughness", r.initial_roughness},
          {"initial_visibility", r.initial_visibility},
          {"optimize_pose", r.optimize_pose},
          {"optimize_textures", r.optimize_textures},
          {"optimize_visibility", r.optimize_visibility},
          {"aa_width", r.aa_width}}},
        {"captures", json::array()},
        {"relight", {{"materials", {"mirror", "shiny", "diffuse"}}, {"resolution", 128}, {"spp", 256}}},
        {"confidence", {{"width", 64}, {"height", 32}, {"spp", 64}}},
        {"eval", {{"method", "estimate"}, {"estimate", nullptr}, {"reference", nullptr}}},
    };
}

namespace {

[[noreturn]] void bad(const std::string &field, const std::string &msg) { throw ConfigError(field, msg); }

// Follows a dotted path; numeric components index arrays.
json *find_path(json &root, const std::string &dotted, bool create) {
    json *node = &root;
    size_t start = 0;
    while (start <= dotted.size()) {
        size_t dot = dotted.find('.', start);
        std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) bad(dotted, "empty path component");
        if (node->is_array()) {
            size_t idx = 0;
            try {
                idx = std::stoul(key);
            } catch (const std::exception &) {
                bad(dotted, "expected an array index, got '" + key + "'");
            }
            if (idx >= node->size()) {
                if (!create) return nullptr;
                bad(dotted, "array index out of range");
            }
            node = &(*node)[idx];
        } else {
            if (!node->is_object()) {
                if (!create) return nullptr;
                *node = json::object();
            }
            if (!node->contains(key)) {
                if (!create) return nullptr;
                (*node)[key] = nullptr;
            }
            node = &(*node)[key];
        }
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return node;
}

const json &at_path(const json &root, const std::string &dotted) {
    static const json null_value;
    const json *p = find_path(const_cast<json &>(root), dotted, false);
    return p ? *p : null_value;
}

double num(const json &j, const std::string &field) {
    if (!j.is_number()) bad(field, "expected a number");
    return j.get<double>();
}

int integer(const json &j, const std::string &field) {
    if (!j.is_number_integer()) bad(field, "expected an integer");
    return j.get<int>();
}

bool boolean(const json &j, const std::string &field) {
    if (!j.is_boolean()) bad(field, "expected true or false");
    return j.get<bool>();
}

Vec3 vec3(const json &j, const std::string &field) {
    if (!j.is_array() || j.size() != 3) bad(field, "expected an array of 3 numbers");
    return {num(j[0], field), num(j[1], field), num(j[2], field)};
}

Quaternion quat(const json &j, const std::string &field) {
    if (!j.is_array() || j.size() != 4) bad(field, "expected [w, x, y, z]");
    Quaternion q{num(j[0], field), num(j[1], field), num(j[2], field), num(j[3], field)};
    if (!(q.norm() > 0.0)) bad(field, "quaternion must be non-zero");
    return q.normalized();
}

bool is_path_value(const json &j) { return j.is_string(); }

// Rewrites path-valued fields of a loaded file relative to its directory.
void absolutize(json &cfg, const fs::path &base) {
    auto fix = [&](json &j) {
        if (j.is_string()) j = (base / fs::path(j.get<std::string>())).lexically_normal().string();
    };
    for (const char *key : {"mesh", "env", "reference", "mask", "output_dir"})
        if (cfg.contains(key)) fix(cfg[key]);
    if (cfg.contains("material") && cfg["material"].is_object())
        for (const char *key : {"albedo", "roughness", "visibility"})
            if (cfg["material"].contains(key)) fix(cfg["material"][key]);
    if (cfg.contains("captures") && cfg["captures"].is_array())
        for (auto &c : cfg["captures"])
            if (c.is_object())
                for (const char *key : {"image", "mask", "env"})
                    if (c.contains(key)) fix(c[key]);
    if (cfg.contains("eval") && cfg["eval"].is_object())
        for (const char *key : {"estimate", "reference"})
            if (cfg["eval"].contains(key)) fix(cfg["eval"][key]);
}

std::string absolute(const std::string &p) { return fs::absolute(fs::path(p)).lexically_normal().string(); }

Texture texture_from(const json &j, const std::string &field, int channels) {
    if (is_path_value(j)) {
        HdrImage img;
        try {
            img = load_hdr(j.get<std::string>());
        } catch (const Error &e) {
            bad(field, e.what());
        }
        Texture t = Texture::constant(img.width(), img.height(), std::vector<double>(channels, 0.0));
        for (int y = 0; y < img.height(); y++)
            for (int x = 0; x < img.width(); x++) {
                Rgb c = img.at(x, y);
                for (int k = 0; k < channels; k++) t.at(x, y, k) = c[k];
            }
        return t;
    }
    if (channels == 3) {
        Vec3 c = vec3(j, field);
        return Texture::constant(1, 1, {c.x, c.y, c.z});
    }
    return Texture::constant(1, 1, {num(j, field)});
}

void check_file(const json &j, const std::string &field) {
    if (j.is_null()) bad(field, "required");
    if (!j.is_string()) bad(field, "expected a file path");
    if (!fs::exists(j.get<std::string>())) bad(field, "file not found: " + j.get<std::string>());
}

// Re-raises a module validation error with the block prefix on its field.
template <class F>
auto prefixed(const std::string &block, F &&f) {
    try {
        return f();
    } catch (const ConfigError &e) {
        std::string msg = e.what();
        std::string head = e.field() + ": ";
        if (msg.rfind(head, 0) == 0) msg = msg.substr(head.size());
        throw ConfigError(block + "." + e.field(), msg);
    }
}

} // namespace

json effective_config(const Overrides &o) {
    json cfg = default_config();
    cfg["output_dir"] = absolute("out");
    if (o.config) {
        std::ifstream in(*o.config);
        if (!in) bad("config", "cannot open " + *o.config);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::parse_error &e) {
            bad("config", std::string("invalid JSON: ") + e.what());
        }
        if (!file.is_object()) bad("config", "top level must be an object");
        file.erase("command");
        absolutize(file, fs::absolute(fs::path(*o.config)).parent_path());
        cfg.merge_patch(file);
    }
    if (o.output_dir) cfg["output_dir"] = absolute(*o.output_dir);
    if (o.seed) cfg["seed"] = *o.seed;
    if (o.threads) cfg["threads"] = *o.threads;
    if (o.mesh) cfg["mesh"] = absolute(*o.mesh);
    if (o.env) cfg["env"] = absolute(*o.env);
    if (o.reference) cfg["reference"] = absolute(*o.reference);
    if (o.mask) cfg["mask"] = absolute(*o.mask);
    for (const std::string &s : o.set) {
        size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0) bad("set", "expected path=value, got '" + s + "'");
        std::string path = s.substr(0, eq), text = s.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error &) {
            value = text;
        }
        *find_path(cfg, path, true) = value;
    }
    return cfg;
}

TriMesh load_mesh(const json &cfg) {
    const json &m = cfg["mesh"];
    if (m.is_null()) bad("mesh", "required");
    if (m.is_string()) {
        check_file(m, "mesh");
        try {
            return load_obj(m.get<std::string>());
        } catch (const Error &e) {
            if (e.code() == ErrorCode::IoError) bad("mesh", e.what());
            throw;
        }
    }
    if (!m.is_object() || !m.contains("primitive")) bad("mesh", "expected an OBJ path or {\"primitive\": ...}");
    std::string kind = m["primitive"].is_string() ? m["primitive"].get<std::string>() : "";
    auto get = [&](const char *key, double fallback) {
        return m.contains(key) ? num(m[key], std::string("mesh.") + key) : fallback;
    };
    auto geti = [&](const char *key, int fallback) {
        return m.contains(key) ? integer(m[key], std::string("mesh.") + key) : fallback;
    };
    if (kind == "sphere") {
        int rings = geti("rings", 32), segments = geti("segments", 64);
        double radius = get("radius", 1.0);
        if (rings < 3) bad("mesh.rings", "must be >= 3");
        if (segments < 3) bad("mesh.segments", "must be >= 3");
        if (!(radius > 0.0)) bad("mesh.radius", "must be > 0");
        return make_uv_sphere(rings, segments, radius);
    }
    if (kind == "cylinder") {
        int segments = geti("segments", 64);
        double radius = get("radius", 0.5), height = get("height", 1.0);
        bool caps = m.contains("caps") ? boolean(m["caps"], "mesh.caps") : true;
        if (segments < 3) bad("mesh.segments", "must be >= 3");
        if (!(radius > 0.0)) bad("mesh.radius", "must be > 0");
        if (!(height > 0.0)) bad("mesh.height", "must be > 0");
        return make_cylinder(segments, radius, height, caps);
    }
    if (kind == "plate") {
        double w = get("width", 1.0), h = get("height", 1.0);
        if (!(w > 0.0)) bad("mesh.width", "must be > 0");
        if (!(h > 0.0)) bad("mesh.height", "must be > 0");
        return make_plate(w, h);
    }
    bad("mesh.primitive", "expected sphere, cylinder or plate");
}

AlpModel load_model(const json &cfg) {
    TriMesh mesh = load_mesh(cfg);
    const json &mat = cfg["material"];
    Texture albedo = texture_from(mat["albedo"], "material.albedo", 3);
    Texture rough = texture_from(mat["roughness"], "material.roughness", 1);
    Texture vis = texture_from(mat["visibility"], "material.visibility", 1);
    for (double a : albedo.data)
        if (!(a >= 0.0 && a <= 1.0)) bad("material.albedo", "values must lie in [0, 1]");
    for (double r : rough.data)
        if (!(r >= kMinRoughness && r <= 1.0)) bad("material.roughness", "values must lie in [0.03, 1]");
    for (double v : vis.data)
        if (!(v >= 0.0 && v <= 1.0)) bad("material.visibility", "values must lie in [0, 1]");
    Quaternion q_ref = quat(mat["q_ref"], "material.q_ref");
    return AlpModel::make(std::move(mesh), std::move(albedo), std::move(rough), std::move(vis), q_ref);
}

PinholeCamera parse_camera(const json &c, const std::string &field) {
    if (!c.is_object()) bad(field, "expected an object");
    int w = integer(c.value("width", json()), field + ".width");
    int h = integer(c.value("height", json()), field + ".height");
    double f = num(c.value("focal", json()), field + ".focal");
    if (w < 1) bad(field + ".width", "must be >= 1");
    if (h < 1) bad(field + ".height", "must be >= 1");
    if (!(f > 0.0)) bad(field + ".focal", "must be > 0");
    PinholeCamera cam;
    if (c.contains("look_at") && !c["look_at"].is_null()) {
        const json &l = c["look_at"];
        Vec3 eye = vec3(l.value("eye", json()), field + ".look_at.eye");
        Vec3 target = vec3(l.value("target", json()), field + ".look_at.target");
        Vec3 up = vec3(l.value("up", json{0.0, 1.0, 0.0}), field + ".look_at.up");
        if (length(eye - target) == 0.0) bad(field + ".look_at", "eye and target coincide");
        if (length(cross(target - eye, up)) < 1e-12) bad(field + ".look_at.up", "parallel to the view direction");
        cam = PinholeCamera::look_at(eye, target, up, w, h, f);
    } else {
        cam.width = w;
        cam.height = h;
        cam.focal = f;
        cam.cx = 0.5 * (w - 1);
        cam.cy = 0.5 * (h - 1);
        cam.rotation = quat(c.value("rotation", json()), field + ".rotation").to_matrix();
        cam.translation = vec3(c.value("translation", json()), field + ".translation");
    }
    if (c.contains("cx")) cam.cx = num(c["cx"], field + ".cx");
    if (c.contains("cy")) cam.cy = num(c["cy"], field + ".cy");
    return cam;
}

PoseScale parse_pose(const json &p, const std::string &field) {
    if (!p.is_object()) bad(field, "expected an object");
    if (p.contains("order") && p["order"] != "wxyz") bad(field + ".order", "only \"wxyz\" is supported");
    PoseScale pose;
    pose.rotation = quat(p.value("rotation", json{1.0, 0.0, 0.0, 0.0}), field + ".rotation");
    pose.translation = vec3(p.value("translation", json{0.0, 0.0, 0.0}), field + ".translation");
    pose.scale = num(p.value("scale", json(1.0)), field + ".scale");
    if (!(pose.scale > 0.0)) bad(field + ".scale", "must be > 0");
    return pose;
}

json pose_to_json(const PoseScale &p) {
    return json{{"order", "wxyz"},
                {"rotation", {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}},
                {"translation", {p.translation.x, p.translation.y, p.translation.z}},
                {"scale", p.scale}};
}

RenderSettings parse_render(const json &cfg) {
    RenderSettings rs;
    rs.spp = integer(at_path(cfg, "render.spp"), "render.spp");
    rs.aa_width = num(at_path(cfg, "render.aa_width"), "render.aa_width");
    rs.seed = cfg["seed"].get<uint64_t>();
    rs.threads = integer(cfg["threads"], "threads");
    if (rs.spp < 1) bad("render.spp", "must be >= 1");
    if (!(rs.aa_width >= 0.0)) bad("render.aa_width", "must be >= 0");
    return rs;
}

FitConfig parse_fit(const json &cfg) {
    const json &f = cfg["fit"];
    if (!f.is_object()) bad("fit", "expected an object");
    FitConfig c;
    auto n = [&](const char *k) { return num(f.value(k, json()), std::string("fit.") + k); };
    auto i = [&](const char *k) { return integer(f.value(k, json()), std::string("fit.") + k); };
    c.lambda_pose = n("lambda_pose");
    c.lambda_light = n("lambda_light");
    c.decay_fraction = n("decay_fraction");
    c.steps = i("steps");
    c.spp = i("spp");
    c.final_spp = i("final_spp");
    c.lr_env = n("lr_env");
    c.lr_translation = n("lr_translation");
    c.lr_rotation = n("lr_rotation");
    c.lr_log_scale = n("lr_log_scale");
    c.lr_final_fraction = n("lr_final_fraction");
    c.n_pairs = i("n_pairs");
    c.sigma = n("sigma_degrees") * kPi / 180.0;
    c.env_width = i("env_width");
    c.env_height = i("env_height");
    c.aa_width = n("aa_width");
    c.freeze_pose = boolean(f.value("freeze_pose", json()), "fit.freeze_pose");
    const json &starts = f.value("starts", json::array());
    if (!starts.is_array()) bad("fit.starts", "expected a list of [w, x, y, z]");
    for (size_t k = 0; k < starts.size(); k++) c.starts.push_back(quat(starts[k], "fit.starts." + std::to_string(k)));
    if (f.contains("initial_pose") && !f["initial_pose"].is_null())
        c.initial_pose = parse_pose(f["initial_pose"], "fit.initial_pose");
    c.seed = cfg["seed"].get<uint64_t>();
    c.threads = integer(cfg["threads"], "threads");
    prefixed("fit", [&] {
        c.validate();
        return 0;
    });
    return c;
}

ReconstructConfig parse_reconstruct(const json &cfg) {
    const json &r = cfg["reconstruct"];
    if (!r.is_object()) bad("reconstruct", "expected an object");
    ReconstructConfig c;
    auto n = [&](const char *k) { return num(r.value(k, json()), std::string("reconstruct.") + k); };
    auto i = [&](const char *k) { return integer(r.value(k, json()), std::string("reconstruct.") + k); };
    auto b = [&](const char *k) { return boolean(r.value(k, json()), std::string("reconstruct.") + k); };
    c.texture_width = i("texture_width");
    c.texture_height = i("texture_height");
    c.steps = i("steps");
    c.spp = i("spp");
    c.lr_albedo = n("lr_albedo");
    c.lr_roughness = n("lr_roughness");
    c.lr_visibility = n("lr_visibility");
    c.lr_translation = n("lr_translation");
    c.lr_rotation = n("lr_rotation");
    c.lr_log_scale = n("lr_log_scale");
    c.lr_final_fraction = n("lr_final_fraction");
    c.initial_albedo = vec3(r.value("initial_albedo", json()), "reconstruct.initial_albedo");
    c.initial_roughness = n("initial_roughness");
    c.initial_visibility = n("initial_visibility");
    c.optimize_pose = b("optimize_pose");
    c.optimize_textures = b("optimize_textures");
    c.optimize_visibility = b("optimize_visibility");
    c.aa_width = n("aa_width");
    c.initial_pose = parse_pose(cfg["pose"], "pose");
    c.seed = cfg["seed"].get<uint64_t>();
    c.threads = integer(cfg["threads"], "threads");
    prefixed("reconstruct", [&] {
        c.validate();
        return 0;
    });
    return c;
}

std::vector<ProbeMaterial> parse_materials(const json &cfg) {
    const json &m = at_path(cfg, "relight.materials");
    if (!m.is_array() || m.empty()) bad("relight.materials", "expected a non-empty list");
    std::vector<ProbeMaterial> out;
    for (const auto &name : m) {
        if (name == "mirror")
            out.push_back(ProbeMaterial::mirror());
        else if (name == "shiny")
            out.push_back(ProbeMaterial::shiny());
        else if (name == "diffuse")
            out.push_back(ProbeMaterial::diffuse());
        else
            bad("relight.materials", "unknown material " + name.dump());
    }
    return out;
}

void require_inputs(const json &cfg, const std::string &command) {
    if (!cfg["seed"].is_number_unsigned() && !(cfg["seed"].is_number_integer() && cfg["seed"].get<int64_t>() >= 0))
        bad("seed", "expected a non-negative integer");
    if (integer(cfg["threads"], "threads") < 0) bad("threads", "must be >= 0");
    if (!cfg["output_dir"].is_string()) bad("output_dir", "expected a directory path");
    auto mesh_ok = [&] {
        if (cfg["mesh"].is_null()) bad("mesh", "required");
        if (cfg["mesh"].is_string()) check_file(cfg["mesh"], "mesh");
        for (const char *key : {"albedo", "roughness", "visibility"}) {
            const json &t = cfg["material"][key];
            if (t.is_string()) check_file(t, std::string("material.") + key);
        }
    };
    if (command == "render") {
        mesh_ok();
        check_file(cfg["env"], "env");
    } else if (command == "estimate") {
        mesh_ok();
        check_file(cfg["reference"], "reference");
        check_file(cfg["mask"], "mask");
    } else if (command == "reconstruct") {
        mesh_ok();
        const json &caps = cfg["captures"];
        if (!caps.is_array()) bad("captures", "expected a list");
        for (size_t k = 0; k < caps.size(); k++) {
            std::string f = "captures." + std::to_string(k);
            if (!caps[k].is_object()) bad(f, "expected an object");
            for (const char *key : {"image", "mask", "env"}) check_file(caps[k].value(key, json()), f + "." + key);
            if (!caps[k].contains("camera")) bad(f + ".camera", "required");
        }
    } else if (command == "relight") {
        check_file(cfg["env"], "env");
    } else if (command == "eval") {
        check_file(at_path(cfg, "eval.estimate"), "eval.estimate");
        check_file(at_path(cfg, "eval.reference"), "eval.reference");
    } else if (command == "confidence") {
        mesh_ok();
    }
}

} // namespace alp::cli
