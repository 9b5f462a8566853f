#include "magdr/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "magdr/error.hpp"
#include "magdr/experiments.hpp"
#include "magdr/io.hpp"
#include "magdr/parallel.hpp"
#include "magdr/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace magdr {

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
    std::string log_level = "info";
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "experiment config (INI)");
    sub->add_option("--seed", c.seed, "base seed (first fixture seed; attack seed for `attack`)");
    sub->add_option("--workers", c.workers, "worker pool size");
    sub->add_option("--out", c.out, "output directory or file");
    sub->add_option("--log-level", c.log_level, "trace|debug|info|warn|error|off");
}

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_ini_file(c.config_path);
    if (c.workers) cfg.eval.workers = *c.workers;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Common& c, const ExperimentConfig& cfg, const std::string& sub) {
    return c.out.empty() ? fs::path(cfg.eval.output_dir) / sub : fs::path(c.out);
}

json provenance_json(const ExperimentConfig& cfg, const std::string& seeds) {
    return {{"tool", tool_version()}, {"config_hash", cfg.hash()}, {"seeds", seeds}};
}

std::string dataset_seeds(const Dataset& d) {
    if (d.empty()) return "";
    bool contiguous = true;
    for (std::size_t i = 1; i < d.size(); ++i) contiguous &= d[i].seed == d[0].seed + i;
    if (contiguous) return seed_range(d[0].seed, static_cast<int>(d.size()));
    std::string s;
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? " " : "") + std::to_string(d[i].seed);
    return s;
}

// Test fixtures from --input, else generated from the config.
Dataset input_dataset(const std::string& input, const ExperimentConfig& cfg) {
    if (!input.empty()) {
        Dataset d = load_dataset(input);
        if (d.empty()) throw ValidationError("dataset " + input + " has no samples");
        return d;
    }
    return make_dataset(cfg.fixtures, cfg.fixtures.spec.seed, cfg.fixtures.count);
}

Dataset calibration_dataset(const ExperimentConfig& cfg) {
    if (cfg.fixtures.calibration_count < 1)
        throw ValidationError("[fixtures] calibration_count must be >= 1 to calibrate thresholds");
    return make_dataset(cfg.fixtures, cfg.fixtures.calibration_seed, cfg.fixtures.calibration_count);
}

std::vector<TransformSpec> read_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("defense set file not found: " + path);
    std::string text, line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        for (char ch : line) text += (ch == ' ' || ch == '\t' || ch == '\r') ? ',' : ch;
        text += ',';
    }
    std::string cleaned;
    for (std::size_t i = 0; i < text.size(); ++i)
        if (!(text[i] == ',' && (cleaned.empty() || cleaned.back() == ','))) cleaned += text[i];
    while (!cleaned.empty() && cleaned.back() == ',') cleaned.pop_back();
    if (cleaned.empty()) throw ValidationError("defense set file " + path + " lists no transforms");
    return parse_spec_list(cleaned);
}

RecnetCatalog load_catalog(const std::string& flag, const ExperimentConfig& cfg) {
    const std::string path = !flag.empty() ? flag
                             : !cfg.recnet.catalog_path.empty()
                                 ? cfg.recnet.catalog_path
                                 : (fs::path(cfg.eval.output_dir) / "recnet_catalog.json").string();
    if (!fs::exists(path))
        throw ValidationError("recnet catalog not found: " + path +
                              "; run `magdr pretrain-recnet --config <cfg> --out " + path + "` first");
    return RecnetCatalog::load(path);
}

json report_json(const DetectionReport& r) {
    return {{"region_flags", r.region_flags},   {"flagged_regions", r.flagged_regions},
            {"s_dist", r.s_dist},               {"s_cons", r.s_cons},
            {"s_final", r.s_final},             {"dd", r.dd_disrupted},
            {"cd", r.cd_disrupted},             {"disrupted", r.disrupted},
            {"tau_regions", r.tau_regions},     {"tau_cons", r.tau_cons}};
}

json detector_json(const DetectorConfig& d) {
    return {{"tau_regions", d.tau_regions},
            {"tau_cons", d.tau_cons},
            {"lambda", d.lambda},
            {"calibration_hash", d.calibration_hash}};
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

DetectorConfig detector_for(const ExperimentConfig& cfg, bool no_calibrate) {
    if (no_calibrate) return cfg.detector;
    const DetectorConfig det = calibrate_on(calibration_dataset(cfg), cfg);
    spdlog::info("calibrated on seeds {}: tau_regions={} tau_cons={:.6g}",
                 seed_range(cfg.fixtures.calibration_seed, cfg.fixtures.calibration_count), det.tau_regions,
                 det.tau_cons);
    return det;
}

int run(int argc, char** argv) {
    CLI::App app{"magdr: detect and undo adversarial disruption of image-editing models"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    Common c;

    // gen-fixtures
    auto* gen = app.add_subcommand("gen-fixtures", "write seeded fixtures and a manifest");
    add_common(gen, c);
    std::optional<int> n;
    bool calib = false;
    gen->add_option("--n", n, "number of fixtures (default [fixtures] count)");
    gen->add_flag("--calibration", calib, "write the calibration set instead of the test set");

    // attack
    auto* atk = app.add_subcommand("attack", "perturb a dataset");
    add_common(atk, c);
    std::string input, method, target, defense_set;
    std::optional<double> eps, alpha;
    std::optional<int> iters;
    atk->add_option("--input", input, "dataset manifest (default: generate from config)");
    atk->add_option("--method", method, "pgd|targeted|cw|adaptive");
    atk->add_option("--eps", eps);
    atk->add_option("--alpha", alpha);
    atk->add_option("--iters", iters);
    atk->add_option("--target", target, "target output image for the targeted attack");
    atk->add_option("--defense-set", defense_set, "file listing transform specs for the adaptive attack");

    // detect
    auto* det = app.add_subcommand("detect", "run the detectors on a dataset");
    add_common(det, c);
    bool no_calibrate = false;
    det->add_option("--input", input, "dataset manifest (default: generate from config)");
    det->add_flag("--no-calibrate", no_calibrate, "use [detector] thresholds as given");

    // pretrain-recnet
    auto* pre = app.add_subcommand("pretrain-recnet", "select the pruned transform layers");
    add_common(pre, c);

    // reconstruct
    std::string catalog;
    auto* rec = app.add_subcommand("reconstruct", "apply the searched per-region pipeline unconditionally");
    add_common(rec, c);
    rec->add_option("--input", input, "dataset manifest (default: generate from config)");
    rec->add_option("--catalog", catalog, "recnet catalog (default [recnet] catalog)");
    rec->add_flag("--no-calibrate", no_calibrate, "use [detector] thresholds as given");

    // defend
    auto* dfn = app.add_subcommand("defend", "detect, and reconstruct flagged inputs");
    add_common(dfn, c);
    dfn->add_option("--input", input, "dataset manifest (default: generate from config)");
    dfn->add_option("--catalog", catalog, "recnet catalog (default [recnet] catalog)");
    dfn->add_flag("--no-calibrate", no_calibrate, "use [detector] thresholds as given");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "detection and reconstruction tables");
    add_common(ev, c);
    ev->add_option("--catalog", catalog, "recnet catalog (default [recnet] catalog)");

    // adaptive-curve
    auto* ac = app.add_subcommand("adaptive-curve", "F1 versus adaptive-attack iterations");
    add_common(ac, c);
    std::vector<int> iter_list;
    ac->add_option("--iters", iter_list, "iteration counts, ascending")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        if (argc <= 1) std::cerr << app.help();
        return 1;
    }

    spdlog::set_level(spdlog::level::from_str(c.log_level));
    ExperimentConfig cfg = load_config(c);

    if (gen->parsed()) {
        const int count = n.value_or(calib ? cfg.fixtures.calibration_count : cfg.fixtures.count);
        if (count < 1) throw ValidationError("--n must be >= 1");
        const std::uint64_t first = c.seed.value_or(calib ? cfg.fixtures.calibration_seed : cfg.fixtures.spec.seed);
        const Dataset d = make_dataset(cfg.fixtures, first, count);
        const auto manifest =
            save_dataset(d, out_dir(c, cfg, "fixtures"), provenance_json(cfg, seed_range(first, count)).dump());
        spdlog::info("wrote {} fixtures: {}", count, manifest.string());
        return 0;
    }

    if (c.seed && !atk->parsed()) cfg.fixtures.spec.seed = *c.seed;
    if (c.seed) cfg.validate();

    if (atk->parsed()) {
        AttackConfig a = cfg.attack;
        if (!method.empty()) a.method = parse_attack_method(method);
        if (eps) a.eps = *eps;
        if (alpha) a.alpha = *alpha;
        if (iters) a.iterations = *iters;
        if (c.seed) a.seed = *c.seed;
        if (!defense_set.empty()) a.defense_specs = read_spec_file(defense_set);
        if (!target.empty()) a.target = load_image(target);
        if (a.method == AttackMethod::Adaptive && a.defense_specs.empty()) a.defense_specs = cfg.detector.consistency_specs;
        const Dataset clean = input_dataset(input, cfg);
        const fs::path dir = out_dir(c, cfg, "attack");
        struct Item {
            Sample sample;
            AttackResult result;
        };
        const auto items = parallel_map<Item>(clean.size(), cfg.eval.workers, [&](std::size_t i) {
            const auto g = make_generator(cfg.generator, *clean[i].masks);
            Item it{clean[i], attack_sample(clean[i], *g, a)};
            it.sample.clean = clean[i].image;
            it.sample.image = it.result.x_hat;
            return it;
        });
        Dataset out;
        for (const auto& it : items) {
            out.push_back(it.sample);
            write_json(dir / "attacks" / (it.sample.id + ".json"),
                       {{"id", it.sample.id},
                        {"method", attack_method_name(a.method)},
                        {"eps", a.eps},
                        {"alpha", a.step()},
                        {"iterations", a.iterations},
                        {"seed", derive_seed(a.seed, it.sample.seed)},
                        {"linf", it.result.linf},
                        {"output_mse", it.result.output_mse},
                        {"loss_trace", it.result.loss_trace}});
        }
        const auto manifest = save_dataset(out, dir, provenance_json(cfg, dataset_seeds(clean)).dump());
        spdlog::info("attacked {} samples: {}", out.size(), manifest.string());
        return 0;
    }

    if (det->parsed()) {
        const Dataset d = input_dataset(input, cfg);
        const DetectorConfig dc = detector_for(cfg, no_calibrate);
        const auto reports = parallel_map<DetectionReport>(d.size(), cfg.eval.workers, [&](std::size_t i) {
            const auto g = make_generator(cfg.generator, *d[i].masks);
            return decide(d[i].image, d[i].condition, *d[i].masks, *g, dc);
        });
        DetectionTable t;
        t.calibrated = dc;
        for (std::size_t i = 0; i < d.size(); ++i) t.samples.push_back(SampleVerdict{d[i].id, d[i].clean ? 1 : 0, reports[i]});
        const fs::path dir = out_dir(c, cfg, "detect");
        write_text(dir / "detections.csv", detection_samples_csv(t, {cfg.hash(), dataset_seeds(d), ""}));
        write_json(dir / "detector.json", detector_json(dc));
        int flagged = 0;
        for (const auto& r : reports) flagged += r.disrupted;
        spdlog::info("{} of {} samples flagged as disrupted", flagged, d.size());
        return 0;
    }

    if (pre->parsed()) {
        const RecnetCatalog cat = pretrain_from_config(cfg);
        const fs::path path = c.out.empty() ? (!cfg.recnet.catalog_path.empty()
                                                   ? fs::path(cfg.recnet.catalog_path)
                                                   : fs::path(cfg.eval.output_dir) / "recnet_catalog.json")
                                            : fs::path(c.out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        cat.save(path, provenance_json(cfg, seed_range(cfg.recnet.train_seed, cfg.recnet.train_count)).dump());
        spdlog::info("wrote recnet catalog: {}", path.string());
        return 0;
    }

    if (rec->parsed() || dfn->parsed()) {
        const bool defend_mode = dfn->parsed();
        const RecnetCatalog cat = load_catalog(catalog, cfg);
        const Dataset d = input_dataset(input, cfg);
        const DetectorConfig dc = detector_for(cfg, no_calibrate);
        struct Item {
            Image image;
            json record;
        };
        const auto items = parallel_map<Item>(d.size(), cfg.eval.workers, [&](std::size_t i) {
            const ScoreContext ctx = make_context(d[i], cfg, dc);
            Item it;
            if (defend_mode) {
                const DefenseResult r = defend(d[i].image, ctx, cat, cfg.recnet.defense);
                it.image = r.image;
                json reports = json::array(), pipes = json::array();
                for (const auto& rep : r.reports) reports.push_back(report_json(rep));
                for (const auto& p : r.pipelines) pipes.push_back(json::parse(pipeline_to_json(p, *d[i].masks)));
                it.record = {{"id", d[i].id}, {"reports", reports}, {"pipelines", pipes}};
            } else {
                const RecPipeline p =
                    build_pipeline(d[i].image, ctx, cat, cfg.recnet.defense.L_rec, cfg.recnet.defense.shortlist);
                it.image = reconstruct(d[i].image, p, *d[i].masks);
                it.record = {{"id", d[i].id}, {"pipeline", json::parse(pipeline_to_json(p, *d[i].masks))}};
            }
            return it;
        });
        const fs::path dir = out_dir(c, cfg, defend_mode ? "defend" : "reconstruct");
        Dataset out;
        for (std::size_t i = 0; i < d.size(); ++i) {
            Sample s = d[i];
            s.image = items[i].image;
            out.push_back(std::move(s));
            write_json(dir / "pipelines" / (d[i].id + ".json"), items[i].record);
        }
        save_dataset(out, dir, provenance_json(cfg, dataset_seeds(d)).dump());
        spdlog::info("wrote {} reconstructed samples to {}", out.size(), dir.string());
        return 0;
    }

    if (ev->parsed()) {
        const RecnetCatalog cat = load_catalog(catalog, cfg);
        const Dataset test = make_dataset(cfg.fixtures, cfg.fixtures.spec.seed, cfg.fixtures.count);
        const Dataset calibration = calibration_dataset(cfg);
        const DetectionTable dt = evaluate_detection(test, calibration, cfg);
        const Provenance prov{cfg.hash(),
                              seed_range(cfg.fixtures.spec.seed, cfg.fixtures.count) + " calibration=" +
                                  seed_range(cfg.fixtures.calibration_seed, cfg.fixtures.calibration_count),
                              ""};
        const fs::path dir = c.out.empty() ? fs::path(cfg.eval.output_dir) : fs::path(c.out);
        write_text(dir / "detection.csv", detection_csv(dt, prov));
        write_text(dir / "detection_samples.csv", detection_samples_csv(dt, prov));
        const ReconstructionTable rt = evaluate_reconstruction(test, dt.calibrated, cat, cfg);
        write_text(dir / "reconstruction.csv", reconstruction_csv(rt, prov));
        for (const auto& r : dt.rows) spdlog::info("{} {}: f1={:.4f}", r.attack, r.detector, r.f1);
        for (const auto& r : rt.rows) spdlog::info("{}: psnr_o={:.3f}", r.defense, r.psnr_o);
        return 0;
    }

    if (ac->parsed()) {
        const std::vector<int> its = iter_list.empty() ? cfg.eval.adaptive_iterations : iter_list;
        const Dataset test = make_dataset(cfg.fixtures, cfg.fixtures.spec.seed, cfg.eval.adaptive_count);
        const Dataset calibration = calibration_dataset(cfg);
        validate_iterations(its);  // before spending time on calibration
        const DetectorConfig dc = calibrate_on(calibration, cfg);
        const auto curve = adaptive_curve(test, dc, its, cfg);
        const fs::path path = c.out.empty() ? fs::path(cfg.eval.output_dir) / "adaptive_curve.csv" : fs::path(c.out);
        write_text(path, curve_csv(curve, {cfg.hash(),
                                           seed_range(cfg.fixtures.spec.seed, cfg.eval.adaptive_count) +
                                               " calibration=" +
                                               seed_range(cfg.fixtures.calibration_seed,
                                                          cfg.fixtures.calibration_count),
                                           ""}));
        spdlog::info("wrote {}", path.string());
        return 0;
    }
    return 1;
}

}  // namespace

int cli_main(int argc, char** argv) {
    auto logger = spdlog::get("magdr");
    if (!logger) logger = spdlog::stderr_color_mt("magdr");
    spdlog::set_default_logger(logger);
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}

}  // namespace magdr
