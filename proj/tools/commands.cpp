#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "alprobe/confidence.hpp"
#include "alprobe/io.hpp"
#include "alprobe/rng.hpp"
#include "scene_config.hpp"

namespace alp::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
    json cfg;
    fs::path out_dir;
    std::ostream &out;
};

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream f(path);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    f << text;
}

void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

EnvMap load_env(const std::string &path) { return EnvMap::from_image(load_hdr(path)); }

std::string loss_csv(const std::vector<LossTerms> &trace) {
    std::ostringstream s;
    s << std::setprecision(17) << "step,total,rgb,mask,pose_reg,light_reg\n";
    for (size_t i = 0; i < trace.size(); i++) {
        const auto &t = trace[i];
        s << i << "," << t.total << "," << t.rgb << "," << t.mask << "," << t.pose_reg << "," << t.light_reg << "\n";
    }
    return s.str();
}

HdrImage side_by_side(const HdrImage &a, const HdrImage &b) {
    HdrImage out(a.width() + b.width(), std::max(a.height(), b.height()));
    for (int y = 0; y < a.height(); y++)
        for (int x = 0; x < a.width(); x++) out.set(x, y, a.at(x, y));
    for (int y = 0; y < b.height(); y++)
        for (int x = 0; x < b.width(); x++) out.set(a.width() + x, y, b.at(x, y));
    return out;
}

HdrImage gray_image(const std::vector<double> &values, int w, int h) {
    HdrImage img(w, h);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            double v = values[static_cast<size_t>(y) * w + x];
            img.set(x, y, {v, v, v});
        }
    return img;
}

HdrImage texture_image(const Texture &t) {
    HdrImage img(t.width, t.height);
    for (int y = 0; y < t.height; y++)
        for (int x = 0; x < t.width; x++) {
            Rgb c;
            for (int k = 0; k < 3; k++) c[k] = t.at(x, y, t.channels == 3 ? k : 0);
            img.set(x, y, c);
        }
    return img;
}

void cmd_render(Context &ctx) {
    const json &cfg = ctx.cfg;
    AlpModel model = load_model(cfg);
    PinholeCamera cam = parse_camera(cfg["camera"], "camera");
    PoseScale pose = parse_pose(cfg["pose"], "pose");
    RenderSettings rs = parse_render(cfg);
    EnvMap env = load_env(cfg["env"]);
    RenderOutput r = render(model, pose, cam, env, rs);
    save_hdr(r.image, ctx.out_dir / "image.pfm");
    save_mask(r.mask, ctx.out_dir / "mask.png");
    save_png_rgb(r.image, ctx.out_dir / "preview.png");
    ctx.out << "wrote " << (ctx.out_dir / "image.pfm").string() << "\n";
}

void cmd_estimate(Context &ctx) {
    const json &cfg = ctx.cfg;
    AlpModel model = load_model(cfg);
    PinholeCamera cam = parse_camera(cfg["camera"], "camera");
    FitConfig fc = parse_fit(cfg);
    HdrImage ref = load_hdr(cfg["reference"].get<std::string>());
    MaskImage mask = load_mask(cfg["mask"].get<std::string>());
    FitResult fr = estimate_lighting(ref, mask, model, cam, fc);

    save_hdr(fr.env.to_image(), ctx.out_dir / "env.pfm");
    save_png_rgb(fr.env.to_image(), ctx.out_dir / "env.png");
    json pose = pose_to_json(fr.pose);
    pose["selected_start"] = fr.selected;
    pose["start_psnr"] = json::array();
    for (double p : fr.start_psnr) pose["start_psnr"].push_back(std::isfinite(p) ? json(p) : json(nullptr));
    write_json(ctx.out_dir / "pose.json", pose);
    write_text(ctx.out_dir / "loss.csv", loss_csv(fr.trace));

    RenderSettings rs{fc.final_spp, derive_seed(fc.seed, 0x636f6d70ULL), fc.aa_width, fc.threads};
    RenderOutput again = render(model, fr.pose, cam, fr.env, rs);
    save_png_rgb(side_by_side(ref, again.image), ctx.out_dir / "composite.png");
    ctx.out << "selected start " << fr.selected << ", psnr " << fr.start_psnr[fr.selected] << " dB\n";
}

void cmd_reconstruct(Context &ctx) {
    const json &cfg = ctx.cfg;
    TriMesh mesh = load_mesh(cfg);
    ReconstructConfig rc = parse_reconstruct(cfg);
    std::vector<Capture> caps;
    const json &list = cfg["captures"];
    for (size_t k = 0; k < list.size(); k++) {
        const json &c = list[k];
        Capture cap;
        cap.image = load_hdr(c["image"].get<std::string>());
        cap.mask = load_mask(c["mask"].get<std::string>());
        cap.env = load_env(c["env"]);
        cap.camera = parse_camera(c["camera"], "captures." + std::to_string(k) + ".camera");
        caps.push_back(std::move(cap));
    }
    ReconstructResult r = reconstruct_alp(caps, mesh, rc);
    save_hdr(texture_image(r.model.albedo), ctx.out_dir / "albedo.pfm");
    save_hdr(texture_image(r.model.roughness), ctx.out_dir / "roughness.pfm");
    save_hdr(texture_image(r.model.visibility), ctx.out_dir / "visibility.pfm");
    write_json(ctx.out_dir / "pose.json", pose_to_json(r.pose));
    write_text(ctx.out_dir / "loss.csv", loss_csv(r.trace));
    std::ostringstream views;
    views << "texel,views\n";
    for (size_t t = 0; t < r.texel_views.size(); t++) views << t << "," << r.texel_views[t] << "\n";
    write_text(ctx.out_dir / "texel_views.csv", views.str());
    ctx.out << "final loss " << r.trace.back().total << "\n";
}

void cmd_relight(Context &ctx) {
    const json &cfg = ctx.cfg;
    EnvMap env = load_env(cfg["env"]);
    int res = cfg["relight"]["resolution"].get<int>();
    int spp = cfg["relight"]["spp"].get<int>();
    if (res < 1) throw ConfigError("relight.resolution", "must be >= 1");
    if (spp < 1) throw ConfigError("relight.spp", "must be >= 1");
    for (const ProbeMaterial &m : parse_materials(cfg)) {
        RelightOutput r = relight_sphere(env, m, res, spp, cfg["seed"].get<uint64_t>(), cfg["threads"].get<int>());
        save_hdr(r.image, ctx.out_dir / ("sphere_" + m.name() + ".pfm"));
        save_png_rgb(r.image, ctx.out_dir / ("sphere_" + m.name() + ".png"));
        save_mask(r.mask, ctx.out_dir / "sphere_mask.png");
    }
    ctx.out << "wrote spheres to " << ctx.out_dir.string() << "\n";
}

void cmd_eval(Context &ctx) {
    const json &cfg = ctx.cfg;
    EnvMap est = load_env(cfg["eval"]["estimate"]);
    EnvMap ref = load_env(cfg["eval"]["reference"]);
    int res = cfg["relight"]["resolution"].get<int>();
    int spp = cfg["relight"]["spp"].get<int>();
    if (res < 1) throw ConfigError("relight.resolution", "must be >= 1");
    if (spp < 1) throw ConfigError("relight.spp", "must be >= 1");
    if (!cfg["eval"]["method"].is_string()) throw ConfigError("eval.method", "expected a string");
    const std::string method = cfg["eval"]["method"];
    const uint64_t seed = cfg["seed"].get<uint64_t>();
    const int threads = cfg["threads"].get<int>();
    std::ostringstream csv;
    csv << std::setprecision(10) << "method,material,angular_error,si_rmse\n";
    for (const ProbeMaterial &m : parse_materials(cfg)) {
        RelightOutput a = relight_sphere(est, m, res, spp, seed, threads);
        RelightOutput b = relight_sphere(ref, m, res, spp, seed, threads);
        csv << method << "," << m.name() << "," << angular_error(a.image, b.image, b.mask) << ","
            << si_rmse(a.image, b.image, b.mask) << "\n";
    }
    write_text(ctx.out_dir / "eval.csv", csv.str());
    ctx.out << csv.str();
}

void cmd_confidence(Context &ctx) {
    const json &cfg = ctx.cfg;
    AlpModel model = load_model(cfg);
    PinholeCamera cam = parse_camera(cfg["camera"], "camera");
    PoseScale pose = parse_pose(cfg["pose"], "pose");
    const json &c = cfg["confidence"];
    int w = c["width"].get<int>(), h = c["height"].get<int>(), spp = c["spp"].get<int>();
    if (h < 1 || w != 2 * h) throw ConfigError("confidence.width", "must equal 2 * confidence.height");
    if (spp < 1) throw ConfigError("confidence.spp", "must be >= 1");
    ConfidenceMap m = confidence_map(model, pose, cam, w, h, spp, cfg["seed"].get<uint64_t>(), cfg["threads"].get<int>());
    save_png_gray(m.values, w, h, ctx.out_dir / "confidence.png");
    save_hdr(gray_image(m.values, w, h), ctx.out_dir / "confidence.pfm");
    ctx.out << "wrote " << (ctx.out_dir / "confidence.png").string() << "\n";
}

using Command = void (*)(Context &);

} // namespace

int run(int argc, char **argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Lighting estimation from accidental light probes"};
    app.require_subcommand(1);
    Overrides o;
    std::string eval_estimate, eval_reference, eval_method;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"render", "Render the model at a pose under an environment map"},
        {"estimate", "Recover lighting and pose from one HDR image and mask"},
        {"reconstruct", "Recover material textures from posed views under known lighting"},
        {"relight", "Relight mirror, shiny and diffuse probe spheres with an environment map"},
        {"eval", "Compare two environment maps by relighting probe spheres"},
        {"confidence", "Sampling-frequency confidence map over lighting directions"},
    };
    for (const auto &[name, help] : commands) {
        CLI::App *sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", o.config, "Scene config JSON (a run manifest works too)");
        sub->add_option("-o,--output-dir", o.output_dir, "Directory for outputs");
        sub->add_option("--seed", o.seed, "Seed for every stochastic step");
        sub->add_option("--threads", o.threads, "Worker threads (0: hardware, capped by ALPROBE_THREADS)");
        sub->add_option("--set", o.set, "Override a config field: dotted.path=value (repeatable)");
        if (name != "relight" && name != "eval") sub->add_option("--mesh", o.mesh, "Mesh OBJ path");
        if (name == "render" || name == "relight") sub->add_option("--env", o.env, "Environment map (PFM)");
        if (name == "estimate") {
            sub->add_option("--reference", o.reference, "Reference HDR image (PFM)");
            sub->add_option("--mask", o.mask, "Object mask (8-bit grayscale PNG)");
        }
        if (name == "eval") {
            sub->add_option("estimate", eval_estimate, "Estimated environment map (PFM)");
            sub->add_option("reference", eval_reference, "Reference environment map (PFM)");
            sub->add_option("--method", eval_method, "Method label for the CSV");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success &e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: ConfigError: " << e.what() << "\n";
        return 2;
    }
    std::string command = app.get_subcommands().front()->get_name();
    if (!eval_estimate.empty()) o.set.push_back("eval.estimate=" + json(fs::absolute(eval_estimate).string()).dump());
    if (!eval_reference.empty())
        o.set.push_back("eval.reference=" + json(fs::absolute(eval_reference).string()).dump());
    if (!eval_method.empty()) o.set.push_back("eval.method=" + json(eval_method).dump());

    set_warning_sink([&err](const std::string &m) { err << "warning: " << m << "\n"; });
    int code = 0;
    try {
        json cfg = effective_config(o);
        require_inputs(cfg, command);
        Context ctx{cfg, fs::path(cfg["output_dir"].get<std::string>()), out};
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create " + ctx.out_dir.string() + ": " + ec.message());
        json manifest = cfg;
        manifest["command"] = command;
        write_json(ctx.out_dir / "manifest.json", manifest);
        static const std::map<std::string, Command> table = {
            {"render", cmd_render}, {"estimate", cmd_estimate}, {"reconstruct", cmd_reconstruct},
            {"relight", cmd_relight}, {"eval", cmd_eval}, {"confidence", cmd_confidence},
        };
        table.at(command)(ctx);
    } catch (const ConfigError &e) {
        err << "error: ConfigError: " << e.what() << "\n";
        code = 2;
    } catch (const Error &e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        code = 1;
    } catch (const json::exception &e) {
        err << "error: ConfigError: " << e.what() << "\n";
        code = 2;
    } catch (const std::exception &e) {
        err << "error: Internal: " << e.what() << "\n";
        code = 1;
    }
    set_warning_sink(nullptr);
    return code;
}

} // namespace alp::cli
