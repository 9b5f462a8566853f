#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "magdr/image.hpp"

namespace magdr {

enum class Category { Identity, DctQuant, GaussBlur, Median, BitDepth, GaussNoise, ResizeCycle, MeanSmooth };

const std::vector<Category>& all_categories();
std::string category_name(Category c);
Category parse_category(const std::string& name);

struct TransformSpec {
    Category category = Category::Identity;
    double param = 0.0;
    std::uint64_t seed = 0;  // used by stochastic categories only

    bool operator==(const TransformSpec&) const = default;
};

TransformSpec make_spec(Category c, double param = 0.0, std::uint64_t seed = 0);
// "gauss_blur:1.5", "identity", "gauss_noise:0.02@7" (seed after '@').
TransformSpec parse_spec(const std::string& text);
std::string spec_to_string(const TransformSpec& spec);
std::vector<TransformSpec> parse_spec_list(const std::string& comma_separated);

// Throws ValidationError for parameters outside the category's domain
// (quality 1..100, sigma > 0, odd k >= 3, bits 1..8, noise sigma >= 0,
// scale in (0,1], ...).
void validate_spec(const TransformSpec& spec);

Image apply(const TransformSpec& spec, const Image& x);

// Adjoint of a differentiable surrogate of apply at x: exact for linear
// filters (blur, mean, resize cycle); straight-through for dct_quant and
// bit_depth; mean-filter adjoint for median; identity for noise.
Image smooth_vjp(const TransformSpec& spec, const Image& x, const Image& u);
bool has_exact_adjoint(Category c);

// Per-category parameter grids, ordered mildest to strongest.
struct CategoryGrid {
    Category category;
    std::vector<double> params;
};

struct CatalogConfig {
    std::vector<CategoryGrid> grids;                  // category order = tie-break order
    std::vector<std::vector<Category>> layer_categories;  // optional per-layer subsets
    std::uint64_t noise_seed = 17;

    static CatalogConfig defaults();
    // JSON: {"grids": [{"category": name, "params": [...]}, ...],
    //        "layers": [[name, ...], ...], "noise_seed": n}
    static CatalogConfig from_json_file(const std::filesystem::path& path);
    const CategoryGrid& grid(Category c) const;
    int index_of(Category c) const;
};

struct LayerCatalog {
    int layer_index = 0;
    std::vector<TransformSpec> specs;  // grouped by category, mildest first
};

LayerCatalog catalog(int layer_index, const CatalogConfig& cfg = CatalogConfig::defaults());
// Categories present in a layer catalog, in order of first appearance.
std::vector<Category> categories_of(const LayerCatalog& layer);

// The mildest parameter of every category, identity included.
std::vector<TransformSpec> mildest_specs(const CatalogConfig& cfg = CatalogConfig::defaults());

}  // namespace magdr
