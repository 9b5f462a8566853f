#include "magdr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string_view>

#include "magdr/error.hpp"
#include "magdr/hash.hpp"
#include "magdr/io.hpp"
#include "magdr/parallel.hpp"

namespace magdr {

WeightVector default_weights() {
    WeightVector w{};
    const double v = 1.0 / (DistanceVector::kSize - 1);
    for (int m = 0; m < DistanceVector::kSize; ++m) w[m] = m == DistanceVector::kPsnrDeficit ? 0.0 : v;
    return w;
}

void DetectorConfig::validate() const {
    if (!(lambda > 0) || !std::isfinite(lambda)) throw ValidationError("detector: lambda must be positive");
    double s = 0.0;
    for (double v : w) {
        if (!(v >= 0) || !std::isfinite(v)) throw ValidationError("detector: weights must be non-negative");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("detector: weights must sum to 1");
    if (tau_regions < 0 || !(tau_cons >= 0)) throw ValidationError("detector: thresholds must be non-negative");
    if (consistency_specs.size() < 2) throw ValidationError("detector: need at least 2 consistency transforms");
}

namespace {

// Small per-thread LRU of feature stacks keyed by image content. During the
// reconstruction search most masked regions are untouched by a candidate, so
// their stacks repeat.
const FeatureStack& cached_extract(const FeatureExtractor& fx, const Image& img) {
    struct Entry {
        const FeatureExtractor* fx = nullptr;
        std::size_t hash = 0;
        std::uint64_t used = 0;
        Image image;
        FeatureStack stack;
    };
    constexpr std::size_t kCapacity = 48;
    thread_local std::vector<Entry> cache;
    thread_local std::uint64_t tick = 0;
    const std::size_t h = std::hash<std::string_view>{}(
        std::string_view(reinterpret_cast<const char*>(img.data.data()), img.data.size() * sizeof(double)));
    if (cache.capacity() < kCapacity) cache.reserve(kCapacity);  // returned references stay valid
    ++tick;
    for (auto& e : cache)
        if (e.hash == h && e.fx == &fx && e.image == img) {
            e.used = tick;
            return e.stack;
        }
    Entry* slot;
    if (cache.size() < kCapacity) {
        slot = &cache.emplace_back();
    } else {
        slot = &*std::min_element(cache.begin(), cache.end(),
                                  [](const Entry& a, const Entry& b) { return a.used < b.used; });
    }
    slot->fx = &fx;
    slot->hash = h;
    slot->used = tick;
    slot->image = img;
    slot->stack = fx.extract(img);
    return slot->stack;
}

}  // namespace

std::vector<DistanceVector> region_distances(const Image& x, const Image& y, const MaskTensor& masks,
                                             const MetricOptions& opts) {
    require_same_shape(x, y, "region_distances");
    if (x.width != masks.width() || x.height != masks.height())
        throw ValidationError("region_distances: mask dimensions do not match images");
    const auto fx = feature_extractor(opts.feature_seed, x.channels);
    std::vector<DistanceVector> out;
    out.reserve(masks.size());
    for (int i = 0; i < masks.size(); ++i) {
        const Image a = apply_mask(x, i, masks);
        const Image b = apply_mask(y, i, masks);
        DistanceVector d = distance_vector(a, cached_extract(*fx, a), b, cached_extract(*fx, b), opts);
        for (double& v : d.values) v /= masks.mass(i);
        out.push_back(d);
    }
    return out;
}

DistortionFlags distortion_flags(const std::vector<DistanceVector>& dbar, int c, const WeightVector& w) {
    if (dbar.size() < 2) throw ValidationError("distortion_flags: need at least one non-target region");
    if (c < 0 || c >= static_cast<int>(dbar.size())) throw ValidationError("distortion_flags: target out of range");
    DistortionFlags out;
    out.flags.assign(dbar.size(), 0);
    for (int i = 0; i < static_cast<int>(dbar.size()); ++i) {
        if (i == c) continue;
        double best = -INFINITY;
        for (int m = 0; m < DistanceVector::kSize; ++m)
            if (w[m] > 0) best = std::max(best, dbar[i][m] - dbar[c][m]);
        out.flags[i] = best >= 0.0 ? 1 : 0;
        for (int m = 0; m < DistanceVector::kSize; ++m) out.s_dist += w[m] / (1.0 + std::exp(-dbar[i][m]));
    }
    return out;
}

double consistency_score(const Image& x_hat, const Image& y, const Condition& c, const Generator& gen,
                         const std::vector<TransformSpec>& specs, const WeightVector& w, const MetricOptions& opts) {
    if (specs.empty()) throw ValidationError("consistency_score: empty transform list");
    const auto fx = feature_extractor(opts.feature_seed, y.channels);
    const FeatureStack fy = fx->extract(y);
    const std::size_t k = specs.size();
    std::vector<DistanceVector> d(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (specs[i].category == Category::Identity) continue;  // d = 0 exactly
        const Image yk = gen.forward(apply(specs[i], x_hat), c);
        d[i] = distance_vector(y, fy, yk, fx->extract(yk), opts);
    }
    double score = 0.0;
    for (int m = 0; m < DistanceVector::kSize; ++m) {
        if (w[m] == 0.0) continue;
        double mean = 0.0;
        for (const auto& v : d) mean += v[m];
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (const auto& v : d) var += (v[m] - mean) * (v[m] - mean);
        score += w[m] * std::sqrt(var / static_cast<double>(k));
    }
    return score;
}

double consistency_score(const Image& x_hat, const Condition& c, const Generator& gen,
                         const std::vector<TransformSpec>& specs, const WeightVector& w, const MetricOptions& opts) {
    return consistency_score(x_hat, gen.forward(x_hat, c), c, gen, specs, w, opts);
}

DetectionReport decide(const Image& x_hat, const Condition& c, const MaskTensor& masks, const Generator& gen,
                       const DetectorConfig& cfg) {
    cfg.validate();
    validate_condition(c, masks);
    const int target = c.attribute_index;
    const Image y = gen.forward(x_hat, c);
    DetectionReport r;
    r.region_distances = region_distances(x_hat, y, masks, cfg.metrics);
    r.benchmark = r.region_distances[target];
    const auto flags = distortion_flags(r.region_distances, target, cfg.w);
    r.region_flags = flags.flags;
    r.s_dist = flags.s_dist;
    r.s_cons = consistency_score(x_hat, y, c, gen, cfg.consistency_specs, cfg.w, cfg.metrics);
    r.s_final = cfg.lambda * r.s_dist + r.s_cons;
    r.flagged_regions = static_cast<int>(std::count(r.region_flags.begin(), r.region_flags.end(), 1));
    r.dd_disrupted = r.flagged_regions >= cfg.tau_regions;
    r.cd_disrupted = r.s_cons > cfg.tau_cons;
    r.disrupted = r.dd_disrupted || r.cd_disrupted;
    r.tau_regions = cfg.tau_regions;
    r.tau_cons = cfg.tau_cons;
    r.lambda = cfg.lambda;
    return r;
}

CalibrationStats calibration_stats(const std::vector<CleanSample>& clean, const DetectorConfig& base, int workers) {
    const auto reports = parallel_map<DetectionReport>(clean.size(), workers, [&](std::size_t i) {
        return decide(*clean[i].image, clean[i].condition, *clean[i].masks, *clean[i].generator, base);
    });
    CalibrationStats st;
    for (const auto& r : reports) {
        st.s_cons.push_back(r.s_cons);
        st.flagged_regions.push_back(r.flagged_regions);
    }
    return st;
}

DetectorConfig calibrate_from_stats(const CalibrationStats& stats, const DetectorConfig& base, double target_fpr,
                                    const std::string& set_hash) {
    const std::size_t n = stats.s_cons.size();
    if (n < 20) throw ValidationError("calibrate: need at least 20 clean samples, got " + std::to_string(n));
    if (!(target_fpr > 0.0 && target_fpr < 0.5)) throw ValidationError("calibrate: target_fpr must be in (0, 0.5)");
    if (stats.flagged_regions.size() != n) throw ValidationError("calibrate: inconsistent statistics");
    DetectorConfig cfg = base;
    std::vector<double> sorted = stats.s_cons;
    std::sort(sorted.begin(), sorted.end());
    // nearest rank; the small slack keeps e.g. 0.95 * 100 at rank 95
    const auto rank = static_cast<std::size_t>(std::ceil((1.0 - target_fpr) * static_cast<double>(n) - 1e-9));
    cfg.tau_cons = sorted[std::clamp<std::size_t>(rank, 1, n) - 1];
    const int max_flags = *std::max_element(stats.flagged_regions.begin(), stats.flagged_regions.end());
    cfg.tau_regions = max_flags + 1;
    for (int t = 1; t <= max_flags + 1; ++t) {
        const auto hits = std::count_if(stats.flagged_regions.begin(), stats.flagged_regions.end(),
                                        [t](int f) { return f >= t; });
        if (static_cast<double>(hits) <= target_fpr * static_cast<double>(n) + 1e-12) {
            cfg.tau_regions = t;
            break;
        }
    }
    cfg.calibration_hash = set_hash;
    return cfg;
}

std::string calibration_set_hash(const std::vector<CleanSample>& clean) {
    std::string bytes;
    for (const auto& s : clean) {
        for (double v : s.image->data) bytes.push_back(static_cast<char>(to_byte(v)));
        for (int i = 0; i < s.masks->size(); ++i)
            for (double v : s.masks->region(i)) bytes.push_back(static_cast<char>(to_byte(v)));
        std::ostringstream os;
        os.precision(17);
        os << s.condition.attribute_index << ";" << s.condition.hue_shift_deg << ";" << s.condition.brightness << ";"
           << s.condition.contrast << "|";
        bytes += os.str();
    }
    return sha256_hex(bytes);
}

DetectorConfig calibrate(const std::vector<CleanSample>& clean, const DetectorConfig& base, double target_fpr,
                         int workers) {
    if (clean.size() < 20) throw ValidationError("calibrate: need at least 20 clean samples");
    if (!(target_fpr > 0.0 && target_fpr < 0.5)) throw ValidationError("calibrate: target_fpr must be in (0, 0.5)");
    return calibrate_from_stats(calibration_stats(clean, base, workers), base, target_fpr,
                                calibration_set_hash(clean));
}

}  // namespace magdr
