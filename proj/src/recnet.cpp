#include "magdr/recnet.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "magdr/error.hpp"
#include "magdr/parallel.hpp"

using json = nlohmann::json;

namespace magdr {

double ScoreContext::s_final(const Image& x) const {
    if (!generator || !masks) throw ValidationError("score context is incomplete");
    return decide(x, condition, *masks, *generator, detector).s_final;
}

PrunedLayer pretrain_layer(const std::vector<TrainSample>& train, const LayerCatalog& layer, int workers) {
    if (train.empty()) throw ValidationError("pretrain_layer: empty training set");
    if (layer.specs.empty()) throw ValidationError("pretrain_layer: empty catalog");
    const std::size_t ns = layer.specs.size(), nt = train.size();
    const auto scores = parallel_map<double>(ns * nt, workers, [&](std::size_t job) {
        const auto& spec = layer.specs[job / nt];
        const auto& sample = train[job % nt];
        return sample.ctx.s_final(apply(spec, sample.x_hat));
    });
    std::vector<double> mean(ns, 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t t = 0; t < nt; ++t) mean[s] += scores[s * nt + t];
        mean[s] /= static_cast<double>(nt);
    }
    PrunedLayer out;
    out.layer_index = layer.layer_index;
    for (Category c : categories_of(layer)) {
        std::size_t best = ns;
        for (std::size_t s = 0; s < ns; ++s)
            if (layer.specs[s].category == c && (best == ns || mean[s] < mean[best])) best = s;
        out.specs.push_back(layer.specs[best]);
    }
    return out;
}

RecnetCatalog pretrain(const std::vector<TrainSample>& train, int n_layers, const CatalogConfig& grids, int workers) {
    if (n_layers < 1) throw ValidationError("pretrain: need at least one layer");
    RecnetCatalog cat;
    cat.grids = grids;
    std::vector<TrainSample> cur = train;
    for (int l = 0; l < n_layers; ++l) {
        const LayerCatalog layer = catalog(l, grids);
        PrunedLayer pruned = pretrain_layer(cur, layer, workers);
        cat.layers.push_back(pruned);
        if (l + 1 == n_layers) break;
        // advance the training inputs with this layer's overall best spec
        const std::size_t np = pruned.specs.size(), nt = cur.size();
        const auto scores = parallel_map<double>(np * nt, workers, [&](std::size_t job) {
            const auto& s = cur[job % nt];
            return s.ctx.s_final(apply(pruned.specs[job / nt], s.x_hat));
        });
        std::size_t best = 0;
        double best_mean = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double m = 0.0;
            for (std::size_t t = 0; t < nt; ++t) m += scores[p * nt + t];
            m /= static_cast<double>(nt);
            if (p == 0 || m < best_mean) {
                best = p;
                best_mean = m;
            }
        }
        for (auto& s : cur) s.x_hat = apply(pruned.specs[best], s.x_hat);
    }
    return cat;
}

namespace {

double candidate_score(const RegionState& state, int region, const TransformSpec& spec, const ScoreContext& ctx) {
    if (spec.category == Category::Identity) return state.score;
    std::vector<Image> imgs = state.region_images;
    imgs[region] = apply(spec, imgs[region]);
    return ctx.s_final(clamp01(blend_regions(imgs, *ctx.masks)));
}

}  // namespace

Selection select_for_patch(const RegionState& state, int region, const PrunedLayer& pruned, const LayerCatalog& full,
                           const ScoreContext& ctx, int shortlist) {
    if (pruned.specs.empty()) throw ValidationError("select_for_patch: pruned layer has no categories");
    if (shortlist < 1) throw ValidationError("select_for_patch: shortlist must be >= 1");
    if (region < 0 || region >= static_cast<int>(state.region_images.size()))
        throw ValidationError("select_for_patch: region out of range");
    if (std::none_of(pruned.specs.begin(), pruned.specs.end(),
                     [](const TransformSpec& s) { return s.category == Category::Identity; }))
        throw ValidationError("select_for_patch: pruned layer must contain identity");

    std::vector<std::pair<TransformSpec, double>> cache;
    auto score_of = [&](const TransformSpec& spec) {
        for (const auto& [s, v] : cache)
            if (s == spec) return v;
        const double v = candidate_score(state, region, spec, ctx);
        cache.emplace_back(spec, v);
        return v;
    };

    std::vector<std::size_t> order(pruned.specs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> q(pruned.specs.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = score_of(pruned.specs[i]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });
    std::vector<Category> chosen;
    for (std::size_t k = 0; k < order.size() && static_cast<int>(k) < shortlist; ++k)
        chosen.push_back(pruned.specs[order[k]].category);

    Selection best;
    bool have = false;
    for (const auto& spec : full.specs) {
        if (std::find(chosen.begin(), chosen.end(), spec.category) == chosen.end()) continue;
        const double v = score_of(spec);
        if (!have || v < best.score) {
            best = {spec, v};
            have = true;
        }
    }
    // a shortlisted category missing from the full grid still has its pruned spec
    for (std::size_t k = 0; k < order.size() && static_cast<int>(k) < shortlist; ++k) {
        const auto& spec = pruned.specs[order[k]];
        if (std::find(full.specs.begin(), full.specs.end(), spec) == full.specs.end() && (!have || q[order[k]] < best.score)) {
            best = {spec, q[order[k]]};
            have = true;
        }
    }
    return best;
}

RecPipeline build_pipeline(const Image& x_hat, const ScoreContext& ctx, const RecnetCatalog& cat, int L_rec,
                           int shortlist, std::vector<int> region_order) {
    if (L_rec < 1) throw ValidationError("build_pipeline: L_rec must be >= 1");
    if (static_cast<int>(cat.layers.size()) < L_rec)
        throw ValidationError("build_pipeline: recnet catalog has " + std::to_string(cat.layers.size()) +
                              " pretrained layers, " + std::to_string(L_rec) + " required");
    const int n = ctx.masks->size();
    if (region_order.empty()) {
        region_order.resize(n);
        std::iota(region_order.begin(), region_order.end(), 0);
    }
    if (static_cast<int>(region_order.size()) != n) throw ValidationError("build_pipeline: bad region order");

    RegionState state;
    state.region_images.assign(n, x_hat);
    state.score = ctx.s_final(x_hat);
    RecPipeline p;
    p.per_region.assign(n, {});
    p.provenance.assign(n, {});
    p.initial_score = state.score;
    p.region_order = region_order;
    for (int r : region_order) {
        int identity_streak = 0;
        for (int l = 0; l < L_rec && identity_streak < 2; ++l) {
            const LayerCatalog full = catalog(l, cat.grids);
            const Selection sel = select_for_patch(state, r, cat.layers[l], full, ctx, shortlist);
            p.per_region[r].push_back(sel.spec);
            if (sel.spec.category != Category::Identity)
                state.region_images[r] = apply(sel.spec, state.region_images[r]);
            state.score = sel.score;
            p.provenance[r].push_back(sel.score);
            identity_streak = sel.spec.category == Category::Identity ? identity_streak + 1 : 0;
        }
    }
    return p;
}

Image apply_sequence(const std::vector<TransformSpec>& specs, const Image& x) {
    Image cur = x;
    for (const auto& s : specs)
        if (s.category != Category::Identity) cur = apply(s, cur);
    return cur;
}

Image reconstruct(const Image& x_hat, const RecPipeline& pipeline, const MaskTensor& masks) {
    if (static_cast<int>(pipeline.per_region.size()) != masks.size())
        throw ValidationError("reconstruct: pipeline has " + std::to_string(pipeline.per_region.size()) +
                              " regions, masks have " + std::to_string(masks.size()));
    std::vector<Image> imgs;
    imgs.reserve(masks.size());
    for (const auto& seq : pipeline.per_region) imgs.push_back(apply_sequence(seq, x_hat));
    return clamp01(blend_regions(imgs, masks));
}

DefenseResult defend(const Image& x_hat, const ScoreContext& ctx, const RecnetCatalog& cat,
                     const DefenseSettings& settings) {
    if (settings.max_rounds < 1) throw ValidationError("defend: max_rounds must be >= 1");
    DefenseResult out;
    out.image = x_hat;
    for (int round = 0; round < settings.max_rounds; ++round) {
        out.reports.push_back(decide(out.image, ctx.condition, *ctx.masks, *ctx.generator, ctx.detector));
        if (!out.reports.back().disrupted) return out;
        out.pipelines.push_back(build_pipeline(out.image, ctx, cat, settings.L_rec, settings.shortlist));
        out.image = reconstruct(out.image, out.pipelines.back(), *ctx.masks);
    }
    out.reports.push_back(decide(out.image, ctx.condition, *ctx.masks, *ctx.generator, ctx.detector));
    return out;
}

namespace {

json spec_json(const TransformSpec& s) {
    return {{"category", category_name(s.category)}, {"param", s.param}, {"seed", s.seed}};
}

TransformSpec spec_from_json(const json& j) {
    TransformSpec s{parse_category(j.at("category").get<std::string>()), j.at("param").get<double>(),
                    j.value("seed", std::uint64_t{0})};
    validate_spec(s);
    return s;
}

}  // namespace

void RecnetCatalog::save(const std::filesystem::path& path, const std::string& provenance_json) const {
    json doc;
    doc["provenance"] = json::parse(provenance_json);
    doc["noise_seed"] = grids.noise_seed;
    doc["grids"] = json::array();
    for (const auto& g : grids.grids)
        doc["grids"].push_back({{"category", category_name(g.category)}, {"params", g.params}});
    if (!grids.layer_categories.empty()) {
        doc["layer_categories"] = json::array();
        for (const auto& l : grids.layer_categories) {
            json names = json::array();
            for (Category c : l) names.push_back(category_name(c));
            doc["layer_categories"].push_back(names);
        }
    }
    doc["layers"] = json::array();
    for (const auto& l : layers) {
        json specs = json::array();
        for (const auto& s : l.specs) specs.push_back(spec_json(s));
        doc["layers"].push_back({{"layer_index", l.layer_index}, {"specs", specs}});
    }
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

RecnetCatalog RecnetCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("recnet catalog not found: " + path.string() + " (run pretrain-recnet first)");
    RecnetCatalog cat;
    try {
        json doc;
        in >> doc;
        cat.grids.grids.clear();
        for (const auto& g : doc.at("grids"))
            cat.grids.grids.push_back({parse_category(g.at("category").get<std::string>()),
                                       g.at("params").get<std::vector<double>>()});
        cat.grids.noise_seed = doc.value("noise_seed", cat.grids.noise_seed);
        if (doc.contains("layer_categories"))
            for (const auto& l : doc["layer_categories"]) {
                std::vector<Category> cats;
                for (const auto& n : l) cats.push_back(parse_category(n.get<std::string>()));
                cat.grids.layer_categories.push_back(cats);
            }
        for (const auto& l : doc.at("layers")) {
            PrunedLayer p;
            p.layer_index = l.at("layer_index").get<int>();
            for (const auto& s : l.at("specs")) p.specs.push_back(spec_from_json(s));
            cat.layers.push_back(p);
        }
    } catch (const json::exception& e) {
        throw ValidationError("recnet catalog " + path.string() + ": " + e.what());
    }
    if (cat.layers.empty()) throw ValidationError("recnet catalog " + path.string() + " has no layers");
    return cat;
}

std::string pipeline_to_json(const RecPipeline& p, const MaskTensor& masks) {
    json doc;
    doc["initial_s_final"] = p.initial_score;
    doc["region_order"] = p.region_order;
    doc["regions"] = json::array();
    for (std::size_t r = 0; r < p.per_region.size(); ++r) {
        json specs = json::array();
        for (const auto& s : p.per_region[r]) specs.push_back(spec_to_string(s));
        doc["regions"].push_back(
            {{"region", masks.name(static_cast<int>(r))}, {"specs", specs}, {"s_final_after_layer", p.provenance[r]}});
    }
    return doc.dump(2);
}

}  // namespace magdr
