#include "magdr/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "magdr/error.hpp"
#include "magdr/metrics.hpp"
#include "magdr/parallel.hpp"
#include "magdr/rng.hpp"

namespace magdr {

std::string tool_version() { return std::string("magdr ") + MAGDR_VERSION; }

std::string Provenance::csv_header() const {
    std::string h = "# tool=" + tool_version() + "\n# config_hash=" + config_hash + "\n# seeds=" + seeds + "\n";
    if (!extra.empty()) h += "# " + extra + "\n";
    return h;
}

std::string seed_range(std::uint64_t first, int n) {
    return std::to_string(first) + "-" + std::to_string(first + static_cast<std::uint64_t>(std::max(n, 1)) - 1);
}

double f1_score(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

PrfRow prf(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size()) throw ValidationError("prf: size mismatch");
    PrfRow row;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predicted[i] && labels[i]) ++row.tp;
        else if (predicted[i] && !labels[i]) ++row.fp;
        else if (!predicted[i] && labels[i]) ++row.fn;
        else ++row.tn;
    }
    row.precision = row.tp + row.fp ? static_cast<double>(row.tp) / (row.tp + row.fp) : 0.0;
    row.recall = row.tp + row.fn ? static_cast<double>(row.tp) / (row.tp + row.fn) : 0.0;
    row.f1 = f1_score(row.precision, row.recall);
    return row;
}

ScoreContext make_context(const Sample& s, const ExperimentConfig& cfg, const DetectorConfig& det) {
    ScoreContext ctx;
    ctx.generator = make_generator(cfg.generator, *s.masks);
    ctx.condition = s.condition;
    ctx.masks = s.masks;
    ctx.detector = det;
    return ctx;
}

AttackResult attack_sample(const Sample& s, const Generator& gen, const AttackConfig& attack) {
    AttackConfig a = attack;
    a.seed = derive_seed(attack.seed, s.seed);
    if (a.method == AttackMethod::Targeted && !a.target) a.target = s.image;  // target = the input itself
    try {
        return run_attack(s.image, s.condition, gen, a);
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw RuntimeError("attack failed on sample " + s.id + " (seed " + std::to_string(s.seed) + "): " + e.what());
    }
}

namespace {

AttackConfig effective_attack(const AttackConfig& a, const ExperimentConfig& cfg) {
    AttackConfig out = a;
    if (out.method == AttackMethod::Adaptive && out.defense_specs.empty())
        out.defense_specs = cfg.detector.consistency_specs;
    return out;
}

}  // namespace

Dataset attack_dataset(const Dataset& clean, const ExperimentConfig& cfg, const AttackConfig& attack) {
    const AttackConfig a = effective_attack(attack, cfg);
    return parallel_map<Sample>(clean.size(), cfg.eval.workers, [&](std::size_t i) {
        const Sample& s = clean[i];
        const auto gen = make_generator(cfg.generator, *s.masks);
        Sample out = s;
        out.image = attack_sample(s, *gen, a).x_hat;
        out.clean = s.image;
        return out;
    });
}

DetectorConfig calibrate_on(const Dataset& calibration, const ExperimentConfig& cfg) {
    std::vector<std::shared_ptr<const Generator>> gens;
    std::vector<CleanSample> clean;
    for (const auto& s : calibration) {
        gens.push_back(make_generator(cfg.generator, *s.masks));
        clean.push_back({&s.image, s.masks.get(), s.condition, gens.back()});
    }
    return calibrate(clean, cfg.detector, cfg.target_fpr, cfg.eval.workers);
}

namespace {

void require_disjoint(const Dataset& a, const Dataset& b) {
    std::set<std::uint64_t> seeds;
    for (const auto& s : a) seeds.insert(s.seed);
    for (const auto& s : b)
        if (seeds.count(s.seed))
            throw ValidationError("calibration and test sets share fixture seed " + std::to_string(s.seed));
}

std::vector<PrfRow> verdict_rows(const std::vector<SampleVerdict>& v, const std::string& attack) {
    std::vector<int> labels, dd, cd, comb;
    for (const auto& s : v) {
        labels.push_back(s.label);
        dd.push_back(s.report.dd_disrupted);
        cd.push_back(s.report.cd_disrupted);
        comb.push_back(s.report.disrupted);
    }
    std::vector<PrfRow> rows = {prf(dd, labels), prf(cd, labels), prf(comb, labels)};
    const char* names[] = {"DD", "CD", "combined"};
    for (int i = 0; i < 3; ++i) {
        rows[i].attack = attack;
        rows[i].detector = names[i];
    }
    return rows;
}

}  // namespace

DetectionTable evaluate_detection_calibrated(const Dataset& test_clean, const Dataset& attacked,
                                             const DetectorConfig& det, const ExperimentConfig& cfg) {
    if (test_clean.size() != attacked.size()) throw ValidationError("clean and attacked sets differ in size");
    if (test_clean.size() < 1) throw ValidationError("evaluate_detection: needs at least one sample pair");
    const std::size_t n = test_clean.size();
    auto verdicts = parallel_map<SampleVerdict>(2 * n, cfg.eval.workers, [&](std::size_t job) {
        const Sample& s = job < n ? test_clean[job] : attacked[job - n];
        const auto gen = make_generator(cfg.generator, *s.masks);
        return SampleVerdict{s.id, job < n ? 0 : 1, decide(s.image, s.condition, *s.masks, *gen, det)};
    });
    // interleave clean/attacked per sample for readable reports
    std::vector<SampleVerdict> ordered;
    for (std::size_t i = 0; i < n; ++i) {
        ordered.push_back(verdicts[i]);
        ordered.push_back(verdicts[n + i]);
    }
    DetectionTable t;
    t.calibrated = det;
    t.samples = ordered;
    t.rows = verdict_rows(ordered, attack_method_name(cfg.attack.method));
    return t;
}

DetectionTable evaluate_detection(const Dataset& test_clean, const Dataset& calibration, const ExperimentConfig& cfg) {
    if (test_clean.empty()) throw ValidationError("evaluate_detection: empty test set");
    require_disjoint(test_clean, calibration);
    const DetectorConfig det = calibrate_on(calibration, cfg);
    spdlog::info("calibrated: tau_regions={} tau_cons={:.6g}", det.tau_regions, det.tau_cons);
    const Dataset attacked = attack_dataset(test_clean, cfg, cfg.attack);
    return evaluate_detection_calibrated(test_clean, attacked, det, cfg);
}

RecnetCatalog pretrain_from_config(const ExperimentConfig& cfg) {
    const Dataset train_clean = make_dataset(cfg.fixtures, cfg.recnet.train_seed, cfg.recnet.train_count);
    const Dataset train = attack_dataset(train_clean, cfg, cfg.attack);
    std::vector<TrainSample> samples;
    for (const auto& s : train) samples.push_back({s.image, make_context(s, cfg, cfg.detector)});
    const CatalogConfig grids = cfg.recnet.grid_config_path.empty()
                                    ? CatalogConfig::defaults()
                                    : CatalogConfig::from_json_file(cfg.recnet.grid_config_path);
    return pretrain(samples, cfg.recnet.defense.L_rec, grids, cfg.eval.workers);
}

namespace {

struct PairMetrics {
    double mse, ssim, psnr, featsim;
};

PairMetrics pair_metrics(const Image& a, const Image& b, const MetricOptions& opts) {
    const auto fx = feature_extractor(opts.feature_seed, a.channels);
    return {mse(a, b), ssim(a, b, opts.ssim_window), psnr(a, b),
            feature_cosine_similarity(fx->extract(a), fx->extract(b))};
}

struct RowAccumulator {
    ReconRow row;
    int n = 0;
    void add(const PairMetrics& in, const PairMetrics& out) {
        row.mse_i += in.mse;
        row.ssim_i += in.ssim;
        row.psnr_i += in.psnr;
        row.featsim_i += in.featsim;
        row.mse_o += out.mse;
        row.ssim_o += out.ssim;
        row.psnr_o += out.psnr;
        row.featsim_o += out.featsim;
        ++n;
    }
    ReconRow mean() const {
        ReconRow r = row;
        const double k = n ? 1.0 / n : 0.0;
        for (double* v : {&r.mse_i, &r.ssim_i, &r.psnr_i, &r.featsim_i, &r.mse_o, &r.ssim_o, &r.psnr_o, &r.featsim_o})
            *v *= k;
        return r;
    }
};

}  // namespace

ReconstructionTable evaluate_reconstruction(const Dataset& test_clean, const DetectorConfig& det,
                                            const RecnetCatalog& cat, const ExperimentConfig& cfg) {
    if (test_clean.empty()) throw ValidationError("evaluate_reconstruction: empty test set");
    const Dataset attacked = attack_dataset(test_clean, cfg, cfg.attack);
    const std::size_t nb = cfg.eval.baselines.size();
    struct Item {
        ReconSample sample;
        std::vector<std::pair<PairMetrics, PairMetrics>> metrics;  // no_defense, magdr, baselines...
    };
    const auto items = parallel_map<Item>(test_clean.size(), cfg.eval.workers, [&](std::size_t i) {
        const Sample& clean = test_clean[i];
        const Sample& adv = attacked[i];
        const ScoreContext ctx = make_context(adv, cfg, det);
        const Image y_clean = ctx.generator->forward(clean.image, clean.condition);
        auto measure = [&](const Image& candidate) {
            return std::make_pair(pair_metrics(clean.image, candidate, det.metrics),
                                  pair_metrics(y_clean, ctx.generator->forward(candidate, clean.condition), det.metrics));
        };
        Item it;
        it.sample.id = clean.id;
        it.sample.defense = defend(adv.image, ctx, cat, cfg.recnet.defense);
        it.metrics.push_back(measure(adv.image));
        it.metrics.push_back(measure(it.sample.defense.image));
        for (const auto& b : cfg.eval.baselines) it.metrics.push_back(measure(apply(b, adv.image)));
        return it;
    });
    std::vector<RowAccumulator> acc(2 + nb);
    acc[0].row.defense = "no_defense";
    acc[1].row.defense = "magdr";
    for (std::size_t b = 0; b < nb; ++b) acc[2 + b].row.defense = "uniform:" + spec_to_string(cfg.eval.baselines[b]);
    ReconstructionTable t;
    for (const auto& it : items) {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k].add(it.metrics[k].first, it.metrics[k].second);
        t.samples.push_back(it.sample);
    }
    for (const auto& a : acc) t.rows.push_back(a.mean());
    return t;
}

void validate_iterations(const std::vector<int>& iterations) {
    if (iterations.empty()) throw ValidationError("adaptive curve: empty iteration list");
    for (std::size_t i = 0; i < iterations.size(); ++i) {
        if (iterations[i] < 1)
            throw ValidationError("adaptive curve: iteration count " + std::to_string(iterations[i]) +
                                  " produces no disrupted samples; F1 needs positives (use counts >= 1)");
        if (i && iterations[i] <= iterations[i - 1])
            throw ValidationError("adaptive curve: iteration list must be strictly ascending");
    }
}

std::vector<CurvePoint> adaptive_curve(const Dataset& test_clean, const DetectorConfig& det,
                                       const std::vector<int>& iterations, const ExperimentConfig& cfg) {
    validate_iterations(iterations);
    if (test_clean.empty()) throw ValidationError("adaptive_curve: empty test set");
    AttackConfig a = cfg.attack;
    a.method = AttackMethod::Adaptive;
    if (a.defense_specs.empty()) a.defense_specs = det.consistency_specs;
    std::vector<CurvePoint> out;
    for (int k : iterations) {
        a.iterations = k;
        const Dataset attacked = attack_dataset(test_clean, cfg, a);
        ExperimentConfig local = cfg;
        local.attack = a;
        const DetectionTable t = evaluate_detection_calibrated(test_clean, attacked, det, local);
        out.push_back({k, t.rows[0].f1, t.rows[1].f1, t.rows[2].f1});
        spdlog::info("adaptive curve: iters={} f1_combined={:.4f}", k, t.rows[2].f1);
    }
    return out;
}

namespace {

std::string g(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string detection_csv(const DetectionTable& t, const Provenance& p) {
    std::string s = p.csv_header();
    s += "# tau_regions=" + std::to_string(t.calibrated.tau_regions) + " tau_cons=" + g(t.calibrated.tau_cons) +
         " calibration_hash=" + t.calibrated.calibration_hash + "\n";
    s += "attack,detector,precision,recall,f1,tp,fp,tn,fn\n";
    for (const auto& r : t.rows)
        s += r.attack + "," + r.detector + "," + g(r.precision) + "," + g(r.recall) + "," + g(r.f1) + "," +
             std::to_string(r.tp) + "," + std::to_string(r.fp) + "," + std::to_string(r.tn) + "," +
             std::to_string(r.fn) + "\n";
    return s;
}

std::string detection_samples_csv(const DetectionTable& t, const Provenance& p) {
    std::string s = p.csv_header();
    s += "id,label,flags,flagged_regions,s_dist,s_cons,s_final,dd,cd,verdict\n";
    for (const auto& v : t.samples) {
        std::string bits;
        for (int f : v.report.region_flags) bits += f ? '1' : '0';
        s += v.id + "," + std::to_string(v.label) + "," + bits + "," + std::to_string(v.report.flagged_regions) +
             "," + g(v.report.s_dist) + "," + g(v.report.s_cons) + "," + g(v.report.s_final) + "," +
             std::to_string(v.report.dd_disrupted) + "," + std::to_string(v.report.cd_disrupted) + "," +
             (v.report.disrupted ? "disrupted" : "clean") + "\n";
    }
    return s;
}

std::string reconstruction_csv(const ReconstructionTable& t, const Provenance& p) {
    std::string s = p.csv_header();
    s += "defense,mse_i,ssim_i,psnr_i,featsim_i,mse_o,ssim_o,psnr_o,featsim_o\n";
    for (const auto& r : t.rows)
        s += r.defense + "," + g(r.mse_i) + "," + g(r.ssim_i) + "," + g(r.psnr_i) + "," + g(r.featsim_i) + "," +
             g(r.mse_o) + "," + g(r.ssim_o) + "," + g(r.psnr_o) + "," + g(r.featsim_o) + "\n";
    return s;
}

std::string curve_csv(const std::vector<CurvePoint>& curve, const Provenance& p) {
    std::string s = p.csv_header();
    s += "iters,f1_dd,f1_cd,f1_combined\n";
    for (const auto& c : curve)
        s += std::to_string(c.iterations) + "," + g(c.f1_dd) + "," + g(c.f1_cd) + "," + g(c.f1_combined) + "\n";
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << text;
    if (!out) throw RuntimeError("cannot write " + path.string());
}

}  // namespace magdr
