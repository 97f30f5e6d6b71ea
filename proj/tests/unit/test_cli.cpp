#include <doctest.h>

#include <fstream>
#include <sstream>

#include "alprobe/io.hpp"
#include "scene_config.hpp"

using namespace alp;
using alp::cli::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "alprobe");
    std::vector<char *> argv;
    for (auto &a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string read_bytes(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path &p, const std::string &s) { std::ofstream(p) << s; }

// Fresh scratch directory with a small environment map and a scene file.
struct Workspace {
    fs::path dir;

    explicit Workspace(const std::string &name) {
        dir = fs::temp_directory_path() / ("alprobe_cli_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        EnvMap env(16, 8);
        for (int y = 0; y < 8; y++)
            for (int x = 0; x < 16; x++) {
                Vec3 d = uv_to_dir((x + 0.5) / 16, (y + 0.5) / 8).vec();
                env.set_radiance(x, y, {0.3 + std::max(0.0, d.y), 0.4 + 0.3 * d.x * d.x, 0.2 + 0.5 * std::max(0.0, -d.z)});
            }
        save_hdr(env.to_image(), dir / "env.pfm");
        json scene = {
            {"mesh", {{"primitive", "sphere"}, {"radius", 1.0}, {"rings", 16}, {"segments", 32}}},
            {"material", {{"albedo", {1, 1, 1}}, {"roughness", 0.1}}},
            {"camera", {{"width", 24}, {"height", 24}, {"focal", 40}, {"look_at", {{"eye", {0, 0, 4}}, {"target", {0, 0, 0}}}}}},
            {"env", "env.pfm"},
            {"render", {{"spp", 16}}},
            {"fit",
             {{"steps", 30},
              {"spp", 8},
              {"final_spp", 64},
              {"env_width", 16},
              {"env_height", 8},
              {"n_pairs", 256},
              {"freeze_pose", true},
              {"initial_pose", {{"order", "wxyz"}, {"rotation", {1, 0, 0, 0}}, {"translation", {0, 0, 0}}, {"scale", 1}}}}},
            {"relight", {{"resolution", 16}, {"spp", 16}}},
            {"confidence", {{"width", 16}, {"height", 8}, {"spp", 4}}},
        };
        write_text(dir / "scene.json", scene.dump(2));
    }
    ~Workspace() { fs::remove_all(dir); }

    std::string path(const std::string &p) const { return (dir / p).string(); }
};

} // namespace

TEST_CASE("missing mesh exits 2 and names the field") {
    Workspace ws("nomesh");
    json scene = json::parse(read_bytes(ws.dir / "scene.json"));
    scene.erase("mesh");
    write_text(ws.dir / "scene.json", scene.dump());
    Run r = run_cli({"render", "-c", ws.path("scene.json"), "-o", ws.path("out")});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: ConfigError: mesh", 0) == 0);
    Run missing = run_cli({"render", "-c", ws.path("scene.json"), "--mesh", ws.path("nope.obj"), "-o", ws.path("out")});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("mesh") != std::string::npos);
}

TEST_CASE("invalid numeric fields exit 2 before any output") {
    Workspace ws("badfocal");
    Run r = run_cli({"render", "-c", ws.path("scene.json"), "-o", ws.path("out"), "--set", "camera.focal=-5"});
    CHECK(r.code == 2);
    CHECK(r.err.find("camera.focal") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.dir / "out" / "image.pfm"));
    Run unknown = run_cli({"render", "--no-such-flag"});
    CHECK(unknown.code == 2);
}

TEST_CASE("module errors exit 1 with one machine-parsable line") {
    Workspace ws("emptymask");
    HdrImage ref(24, 24);
    save_hdr(ref, ws.dir / "ref.pfm");
    save_mask(MaskImage(24, 24), ws.dir / "mask.png");
    Run r = run_cli({"estimate", "-c", ws.path("scene.json"), "--reference", ws.path("ref.pfm"), "--mask",
                     ws.path("mask.png"), "-o", ws.path("out")});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: EmptyMask: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("precedence is flag over file over default") {
    Workspace ws("precedence");
    cli::Overrides o;
    json d = cli::effective_config(o);
    CHECK(d["seed"] == 0);
    CHECK(d["render"]["spp"] == RenderSettings{}.spp);

    json scene = json::parse(read_bytes(ws.dir / "scene.json"));
    scene["seed"] = 5;
    write_text(ws.dir / "scene.json", scene.dump());
    o.config = ws.path("scene.json");
    json f = cli::effective_config(o);
    CHECK(f["seed"] == 5);
    CHECK(f["render"]["spp"] == 16);
    CHECK(f["env"] == ws.path("env.pfm"));
    // Untouched defaults survive the merge.
    CHECK(f["fit"]["lambda_pose"] == FitConfig{}.lambda_pose);

    o.seed = 11;
    o.set = {"render.spp=3"};
    json g = cli::effective_config(o);
    CHECK(g["seed"] == 11);
    CHECK(g["render"]["spp"] == 3);
}

TEST_CASE("render writes artifacts and a manifest that reproduces them bit-exactly") {
    Workspace ws("manifest");
    Run r = run_cli({"render", "-c", ws.path("scene.json"), "-o", ws.path("a"), "--seed", "4"});
    REQUIRE(r.code == 0);
    for (const char *f : {"image.pfm", "mask.png", "preview.png", "manifest.json"}) CHECK(fs::exists(ws.dir / "a" / f));
    std::string env_before = read_bytes(ws.dir / "env.pfm");
    Run again = run_cli({"render", "-c", ws.path("a/manifest.json"), "-o", ws.path("b")});
    REQUIRE(again.code == 0);
    CHECK(read_bytes(ws.dir / "a" / "image.pfm") == read_bytes(ws.dir / "b" / "image.pfm"));
    CHECK(read_bytes(ws.dir / "a" / "mask.png") == read_bytes(ws.dir / "b" / "mask.png"));
    CHECK(read_bytes(ws.dir / "env.pfm") == env_before);
    json m = json::parse(read_bytes(ws.dir / "a" / "manifest.json"));
    CHECK(m["command"] == "render");
    CHECK(m["seed"] == 4);
}

TEST_CASE("render then estimate with the pose frozen reproduces the image") {
    Workspace ws("roundtrip");
    REQUIRE(run_cli({"render", "-c", ws.path("scene.json"), "-o", ws.path("r"), "--set", "render.spp=512"}).code == 0);
    std::string ref_before = read_bytes(ws.dir / "r" / "image.pfm");
    Run e = run_cli({"estimate", "-c", ws.path("scene.json"), "--reference", ws.path("r/image.pfm"), "--mask",
                     ws.path("r/mask.png"), "-o", ws.path("e"), "--set", "fit.steps=150"});
    REQUIRE(e.code == 0);
    for (const char *f : {"env.pfm", "env.png", "pose.json", "loss.csv", "composite.png", "manifest.json"})
        CHECK(fs::exists(ws.dir / "e" / f));
    json pose = json::parse(read_bytes(ws.dir / "e" / "pose.json"));
    CHECK(pose["order"] == "wxyz");
    CHECK(pose["start_psnr"][0].get<double>() >= 35.0);
    std::ifstream csv(ws.dir / "e" / "loss.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "step,total,rgb,mask,pose_reg,light_reg");
    CHECK(read_bytes(ws.dir / "r" / "image.pfm") == ref_before);
}

TEST_CASE("eval of a map against itself reports zero error") {
    Workspace ws("eval");
    Run r = run_cli({"eval", ws.path("env.pfm"), ws.path("env.pfm"), "-c", ws.path("scene.json"), "-o", ws.path("v"),
                     "--method", "same"});
    REQUIRE(r.code == 0);
    std::ifstream csv(ws.dir / "v" / "eval.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "method,material,angular_error,si_rmse");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string method, mat, ang, si;
        std::getline(ss, method, ',');
        std::getline(ss, mat, ',');
        std::getline(ss, ang, ',');
        std::getline(ss, si, ',');
        CHECK(method == "same");
        CHECK(std::stod(ang) == 0.0);
        CHECK(std::stod(si) == 0.0);
        rows++;
    }
    CHECK(rows == 3);
}

TEST_CASE("relight and confidence commands write their outputs") {
    Workspace ws("misc");
    REQUIRE(run_cli({"relight", "-c", ws.path("scene.json"), "-o", ws.path("l")}).code == 0);
    for (const char *f : {"sphere_mirror.pfm", "sphere_shiny.png", "sphere_diffuse.pfm", "sphere_mask.png"})
        CHECK(fs::exists(ws.dir / "l" / f));
    REQUIRE(run_cli({"confidence", "-c", ws.path("scene.json"), "-o", ws.path("c")}).code == 0);
    HdrImage conf = load_hdr(ws.dir / "c" / "confidence.pfm");
    CHECK(conf.width() == 16);
    double peak = 0.0;
    for (double v : conf.data()) peak = std::max(peak, v);
    CHECK(peak == 1.0);
}
