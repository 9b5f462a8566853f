#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "magdr/detector.hpp"
#include "magdr/generator.hpp"
#include "magdr/transforms.hpp"

namespace magdr {

// Everything needed to evaluate S_final for a candidate reconstruction.
struct ScoreContext {
    std::shared_ptr<const Generator> generator;
    Condition condition;
    std::shared_ptr<const MaskTensor> masks;
    DetectorConfig detector;

    double s_final(const Image& x) const;
};

struct PrunedLayer {
    int layer_index = 0;
    std::vector<TransformSpec> specs;  // one per category, catalog order
};

struct RecnetCatalog {
    std::vector<PrunedLayer> layers;
    CatalogConfig grids = CatalogConfig::defaults();

    void save(const std::filesystem::path& path, const std::string& provenance_json = "{}") const;
    static RecnetCatalog load(const std::filesystem::path& path);
};

struct TrainSample {
    Image x_hat;
    ScoreContext ctx;
};

// Per category, the grid parameter minimizing mean S_final over the training
// set; ties go to the milder parameter.
PrunedLayer pretrain_layer(const std::vector<TrainSample>& train, const LayerCatalog& layer, int workers = 1);

// Pretrains n_layers layers. Layer i+1 trains on the samples after the best
// spec of layer i (lowest mean score among its pruned specs) was applied.
RecnetCatalog pretrain(const std::vector<TrainSample>& train, int n_layers,
                       const CatalogConfig& grids = CatalogConfig::defaults(), int workers = 1);

struct Selection {
    TransformSpec spec;
    double score = 0.0;
};

// Current per-region reconstruction state: region_images[r] is region r's
// image after its transforms so far; the composed image is their soft blend.
struct RegionState {
    std::vector<Image> region_images;
    double score = 0.0;  // S_final of the composed image
};

Selection select_for_patch(const RegionState& state, int region, const PrunedLayer& pruned,
                           const LayerCatalog& full, const ScoreContext& ctx, int shortlist = 3);

struct RecPipeline {
    std::vector<std::vector<TransformSpec>> per_region;
    double initial_score = 0.0;
    std::vector<std::vector<double>> provenance;  // S_final after each layer, per region
    std::vector<int> region_order;
};

// Regions are processed one after another in region_order (default 0..N-1);
// each region runs up to L_rec layers and stops after two consecutive
// identity selections.
RecPipeline build_pipeline(const Image& x_hat, const ScoreContext& ctx, const RecnetCatalog& cat, int L_rec,
                           int shortlist = 3, std::vector<int> region_order = {});

Image apply_sequence(const std::vector<TransformSpec>& specs, const Image& x);
Image reconstruct(const Image& x_hat, const RecPipeline& pipeline, const MaskTensor& masks);

struct DefenseResult {
    Image image;
    std::vector<DetectionReport> reports;
    std::vector<RecPipeline> pipelines;
};

struct DefenseSettings {
    int L_rec = 3;
    int max_rounds = 2;
    int shortlist = 3;
};

DefenseResult defend(const Image& x_hat, const ScoreContext& ctx, const RecnetCatalog& cat,
                     const DefenseSettings& settings);

std::string pipeline_to_json(const RecPipeline& p, const MaskTensor& masks);

}  // namespace magdr
