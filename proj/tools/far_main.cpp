// SPDX-License-Identifier: Apache-2.0
// Command line front end: deterministic scene runs, parameter sweeps,
// and self checks.
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "far/depth_bins.hpp"
#include "far/geometry.hpp"
#include "far/pyramid.hpp"
#include "far/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvariant = 2;

far::SceneConfig load_config(const std::string& path, bool seed_set, std::uint64_t seed) {
    far::SceneConfig cfg =
        path.empty() ? far::default_scene_config() : far::SceneConfig::load(path);
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    for (const auto& line : lines) out << line << '\n';
}

void write_run_outputs(const far::PipelineResult& res, const std::string& out_dir, bool plots) {
    far::emit_report(res.metrics, out_dir, plots, &res.diagnostics);
    const std::filesystem::path base(out_dir);
    {
        std::ofstream out(base / "coverage.json");
        out << res.diagnostics.to_json().dump(2) << '\n';
    }
    std::vector<std::string> det_lines, query_lines, pred_lines;
    for (const auto& fd : res.detections)
        for (const auto& det : fd.dets) det_lines.push_back(far::detection_to_json(det).dump());
    for (const auto& frame : res.queries)
        for (const auto& q : frame) query_lines.push_back(far::query_to_json(q).dump());
    for (const auto& frame : res.predictions)
        for (const auto& p : frame) {
            nlohmann::ordered_json j;
            j["category"] = p.box.category;
            j["center"] = {p.box.center.x(), p.box.center.y(), p.box.center.z()};
            j["size"] = {p.box.size.x(), p.box.size.y(), p.box.size.z()};
            j["yaw"] = p.box.yaw;
            j["score"] = p.score;
            pred_lines.push_back(j.dump());
        }
    write_lines(base / "detections.jsonl", det_lines);
    write_lines(base / "queries.jsonl", query_lines);
    write_lines(base / "predictions.jsonl", pred_lines);
}

int run_command(const std::string& config_path, const std::string& variant_name, bool seed_set,
                std::uint64_t seed, const std::string& out_dir, bool plots,
                const std::string& dump_path) {
    far::SceneConfig cfg;
    far::PipelineVariant variant;
    try {
        cfg = load_config(config_path, seed_set, seed);
        variant = far::parse_variant(variant_name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        const far::Scene scene = far::gen_scene(cfg);
        if (!dump_path.empty()) far::dump_pyramid(scene.frames.front().pyramid, dump_path);
        const far::PipelineResult res = far::run_pipeline(scene, variant, cfg);
        write_run_outputs(res, out_dir, plots);
        const auto& agg = res.metrics.bands.back();
        std::cout << "run: variant=" << variant_name << " seed=" << cfg.seed
                  << " frames=" << cfg.frames << " band=" << agg.band.label()
                  << " recall@" << agg.per_threshold.back().threshold << "="
                  << agg.per_threshold.back().recall << " wrote " << out_dir << '\n';
    } catch (const std::exception& e) {
        std::cerr << "invariant failure: " << e.what() << '\n';
        return kExitInvariant;
    }
    return kExitOk;
}

void apply_override(far::SceneConfig& cfg, const std::string& name, const std::string& value) {
    const double v = std::stod(value);
    if (name == "n_global") cfg.n_global = static_cast<int>(v);
    else if (name == "tau") cfg.tau = v;
    else if (name == "memory_k") cfg.memory_k = static_cast<int>(v);
    else if (name == "frames") cfg.frames = static_cast<int>(v);
    else if (name == "gt_per_frame") cfg.gt_per_frame = static_cast<int>(v);
    else if (name == "seed") cfg.seed = static_cast<std::uint64_t>(v);
    else if (name == "size_jitter") cfg.size_jitter = v;
    else if (name == "noise_amp") cfg.pyramid.noise_amp = v;
    else if (name == "bump_amp") cfg.pyramid.bump_amp = v;
    else if (name == "drop_max") cfg.detector.drop_max = v;
    else throw std::invalid_argument("sweep: unsupported parameter " + name);
    cfg.validate();
}

int thread_budget(std::size_t n_tasks) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("FAR_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) n = static_cast<unsigned>(v);
        } catch (const std::exception&) {
            // Unparseable values fall back to the hardware count.
        }
    }
    return static_cast<int>(std::min<std::size_t>(n, n_tasks));
}

int sweep_command(const std::string& config_path, const std::string& variant_name, bool seed_set,
                  std::uint64_t seed, const std::string& out_dir, const std::string& param,
                  bool plots) {
    std::string name;
    std::vector<std::string> values;
    const auto eq = param.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= param.size()) {
        std::cerr << "error: --param expects name=v1,v2,...\n";
        return kExitUsage;
    }
    name = param.substr(0, eq);
    std::stringstream ss(param.substr(eq + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(tok);
    if (values.empty()) {
        std::cerr << "error: --param has no values\n";
        return kExitUsage;
    }

    far::SceneConfig base_cfg;
    far::PipelineVariant variant;
    std::vector<far::SceneConfig> configs;
    try {
        base_cfg = load_config(config_path, seed_set, seed);
        variant = far::parse_variant(variant_name);
        for (const auto& v : values) {
            far::SceneConfig cfg = base_cfg;
            apply_override(cfg, name, v);
            configs.push_back(std::move(cfg));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    std::vector<far::MetricsReport> reports(values.size());
    std::vector<std::string> errors(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= values.size()) return;
            try {
                const far::Scene scene = far::gen_scene(configs[i]);
                const far::PipelineResult res = far::run_pipeline(scene, variant, configs[i]);
                const std::string dir =
                    (std::filesystem::path(out_dir) / (name + "_" + values[i])).string();
                far::emit_report(res.metrics, dir, plots, &res.diagnostics);
                reports[i] = res.metrics;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_threads = thread_budget(values.size());
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < values.size(); ++i)
        if (!errors[i].empty()) {
            std::cerr << "invariant failure at " << name << "=" << values[i] << ": " << errors[i]
                      << '\n';
            return kExitInvariant;
        }

    nlohmann::ordered_json summary;
    summary["param"] = name;
    summary["variant"] = variant_name;
    summary["runs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < values.size(); ++i) {
        nlohmann::ordered_json jr;
        jr["value"] = values[i];
        jr["dir"] = name + "_" + values[i];
        jr["report"] = reports[i].to_json();
        summary["runs"].push_back(std::move(jr));
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "sweep.json");
    out << summary.dump(2) << '\n';
    std::cout << "sweep: " << name << " over " << values.size() << " values, wrote " << out_dir
              << '\n';
    return kExitOk;
}

int check_command(const std::string& config_path) {
    bool ok = true;
    auto check = [&](const std::string& label, auto&& fn) {
        try {
            fn();
            std::cout << "check " << label << ": ok\n";
        } catch (const std::exception& e) {
            ok = false;
            std::cout << "check " << label << ": FAIL (" << e.what() << ")\n";
        }
    };

    far::SceneConfig cfg;
    check("config", [&] { cfg = load_config(config_path, false, 0); });
    if (!ok) return kExitInvariant;

    check("rig-projection", [&] {
        for (int view = 0; view < cfg.rig.size(); ++view) {
            const auto& intr = cfg.rig.camera(view).intrinsics;
            const far::Pixel pix{intr.cx, intr.cy, view};
            const far::Vec3 p = far::unproject_pixel(pix, 10.0, cfg.rig);
            const far::Projection pr = far::project_point(p, view, cfg.rig);
            if (pr.behind || std::abs(pr.depth - 10.0) > 1e-9 ||
                std::abs(pr.pixel.u - intr.cx) > 1e-6 || std::abs(pr.pixel.v - intr.cy) > 1e-6)
                throw std::runtime_error("projection round trip failed");
        }
    });
    check("depth-bins", [&] {
        const auto& bins = cfg.depth_bins;
        for (int b = 0; b < bins.n_bins; ++b) {
            const double c = far::bin_to_depth(b, bins);
            if (far::depth_to_bin(c, bins) != b)
                throw std::runtime_error("bin center left its bin");
        }
        if (far::depth_to_bin(bins.d_max, bins) != bins.n_bins - 1)
            throw std::runtime_error("d_max must map to the last bin");
    });
    check("pipeline-smoke", [&] {
        far::SceneConfig small = cfg;
        small.frames = 2;
        small.gt_per_frame = 4;
        small.n_global = 50;
        small.validate();
        const far::Scene scene = far::gen_scene(small);
        const far::PipelineResult res =
            far::run_pipeline(scene, far::PipelineVariant::AdaptivePlusGlobal, small);
        if (res.metrics.bands.size() != small.metric_bands.size() + 1)
            throw std::runtime_error("missing aggregate band");
        for (const auto& cb : res.diagnostics.coverage)
            for (double c : cb.coverage)
                if (!(c >= 0.0 && c <= 1.0)) throw std::runtime_error("coverage outside [0, 1]");
    });
    return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic long-range surround-view detection simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", variant = "adaptive_plus_global";
    std::string param, dump_path;
    std::uint64_t seed = 0;
    bool plots = false;

    auto* run = app.add_subcommand("run", "Run one scene and write reports");
    auto* run_seed = run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--config", config_path, "Scene config JSON");
    run->add_option("--variant", variant, "global_only | adaptive_only | adaptive_plus_global");
    run->add_option("--out", out_dir, "Output directory");
    run->add_flag("--plots", plots, "Also write SVG charts");
    run->add_option("--dump-pyramid", dump_path, "Write the first frame's pyramid to this file");

    auto* sweep = app.add_subcommand("sweep", "Run the scene across one parameter's values");
    auto* sweep_seed = sweep->add_option("--seed", seed, "Override the config seed");
    sweep->add_option("--config", config_path, "Scene config JSON");
    sweep->add_option("--variant", variant, "global_only | adaptive_only | adaptive_plus_global");
    sweep->add_option("--out", out_dir, "Output directory");
    sweep->add_option("--param", param, "Sweep spec, e.g. n_global=100,300,644")->required();
    sweep->add_flag("--plots", plots, "Also write SVG charts");

    auto* chk = app.add_subcommand("check", "Validate the config and core invariants");
    chk->add_option("--config", config_path, "Scene config JSON");

    auto* defc = app.add_subcommand("default-config", "Print the default config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (run->parsed())
        return run_command(config_path, variant, run_seed->count() > 0, seed, out_dir, plots,
                           dump_path);
    if (sweep->parsed())
        return sweep_command(config_path, variant, sweep_seed->count() > 0, seed, out_dir, param,
                             plots);
    if (chk->parsed()) return check_command(config_path);
    if (defc->parsed()) {
        std::cout << far::default_scene_config().to_json().dump(2) << '\n';
        return kExitOk;
    }
    return kExitUsage;
}
