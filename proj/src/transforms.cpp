#include "magdr/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <sstream>

#include "linear.hpp"
#include "magdr/error.hpp"
#include "magdr/rng.hpp"

namespace magdr {

namespace {

const std::map<Category, std::string>& name_table() {
    static const std::map<Category, std::string> t = {
        {Category::Identity, "identity"},      {Category::DctQuant, "dct_quant"},
        {Category::GaussBlur, "gauss_blur"},   {Category::Median, "median"},
        {Category::BitDepth, "bit_depth"},     {Category::GaussNoise, "gauss_noise"},
        {Category::ResizeCycle, "resize_cycle"}, {Category::MeanSmooth, "mean_smooth"}};
    return t;
}

std::string fmt_param(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

const std::vector<Category>& all_categories() {
    static const std::vector<Category> c = {Category::Identity,   Category::DctQuant,   Category::GaussBlur,
                                            Category::Median,     Category::BitDepth,   Category::GaussNoise,
                                            Category::ResizeCycle, Category::MeanSmooth};
    return c;
}

std::string category_name(Category c) { return name_table().at(c); }

Category parse_category(const std::string& name) {
    for (const auto& [c, n] : name_table())
        if (n == name) return c;
    throw ValidationError("unknown transform category '" + name + "'");
}

TransformSpec make_spec(Category c, double param, std::uint64_t seed) {
    TransformSpec s{c, param, seed};
    validate_spec(s);
    return s;
}

TransformSpec parse_spec(const std::string& text) {
    std::string body = text;
    std::uint64_t seed = 0;
    if (auto at = body.find('@'); at != std::string::npos) {
        try {
            seed = std::stoull(body.substr(at + 1));
        } catch (const std::exception&) {
            throw ValidationError("bad transform seed in '" + text + "'");
        }
        body = body.substr(0, at);
    }
    const auto colon = body.find(':');
    const Category c = parse_category(body.substr(0, colon));
    double param = 0.0;
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            param = std::stod(body.substr(colon + 1), &used);
            if (used != body.size() - colon - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ValidationError("bad transform parameter in '" + text + "'");
        }
    } else if (c != Category::Identity) {
        throw ValidationError("transform '" + text + "' needs a parameter (category:value)");
    }
    return make_spec(c, param, seed);
}

std::string spec_to_string(const TransformSpec& spec) {
    if (spec.category == Category::Identity) return "identity";
    std::string s = category_name(spec.category) + ":" + fmt_param(spec.param);
    if (spec.category == Category::GaussNoise) s += "@" + std::to_string(spec.seed);
    return s;
}

std::vector<TransformSpec> parse_spec_list(const std::string& text) {
    std::vector<TransformSpec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }),
                   item.end());
        if (!item.empty()) out.push_back(parse_spec(item));
    }
    return out;
}

void validate_spec(const TransformSpec& spec) {
    const double p = spec.param;
    auto bad = [&](const char* rule) {
        throw ValidationError("invalid parameter " + fmt_param(p) + " for " + category_name(spec.category) + " (" +
                              rule + ")");
    };
    if (!std::isfinite(p)) bad("must be finite");
    switch (spec.category) {
        case Category::Identity: break;
        case Category::DctQuant:
            if (p < 1 || p > 100 || p != std::floor(p)) bad("integer quality in 1..100");
            break;
        case Category::GaussBlur:
            if (!(p > 0) || p > 16) bad("sigma in (0, 16]");
            break;
        case Category::Median:
        case Category::MeanSmooth:
            if (p < 1 || p != std::floor(p) || static_cast<int>(p) % 2 == 0) bad("odd integer size");
            break;
        case Category::BitDepth:
            if (p < 1 || p > 8 || p != std::floor(p)) bad("integer bits in 1..8");
            break;
        case Category::GaussNoise:
            if (p < 0 || p > 1) bad("sigma in [0, 1]");
            break;
        case Category::ResizeCycle:
            if (!(p > 0) || p > 1) bad("scale in (0, 1]");
            break;
    }
}

namespace {

void require_fits(const Image& x, int radius, const TransformSpec& spec) {
    if (radius > std::min(x.width, x.height))
        throw ValidationError(spec_to_string(spec) + ": kernel larger than the " + std::to_string(x.width) + "x" +
                              std::to_string(x.height) + " image");
}

Image separable(const Lin1D& ox, const Lin1D& oy, const Image& x) { return apply_y(oy, apply_x(ox, x)); }
Image separable_adjoint(const Lin1D& ox, const Lin1D& oy, const Image& u) { return adjoint_x(ox, adjoint_y(oy, u)); }

int blur_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

struct ResizeOps {
    Lin1D down_x, down_y, up_x, up_y;
};

ResizeOps resize_ops(const Image& x, double scale) {
    const int mw = std::max(1, static_cast<int>(std::lround(x.width * scale)));
    const int mh = std::max(1, static_cast<int>(std::lround(x.height * scale)));
    return {bilinear(x.width, mw), bilinear(x.height, mh), bilinear(mw, x.width), bilinear(mh, x.height)};
}

Image resize_cycle(const Image& x, double scale) {
    const auto ops = resize_ops(x, scale);
    return apply_y(ops.up_y, apply_x(ops.up_x, apply_y(ops.down_y, apply_x(ops.down_x, x))));
}

Image resize_cycle_adjoint(const Image& x, double scale, const Image& u) {
    const auto ops = resize_ops(x, scale);
    return adjoint_x(ops.down_x, adjoint_y(ops.down_y, adjoint_x(ops.up_x, adjoint_y(ops.up_y, u))));
}

Image median_filter(const Image& x, int k) {
    const int r = k / 2;
    Image out(x.width, x.height, x.channels);
    std::vector<double> win(static_cast<std::size_t>(k) * k);
    for (int y = 0; y < x.height; ++y)
        for (int xx = 0; xx < x.width; ++xx)
            for (int ch = 0; ch < x.channels; ++ch) {
                std::size_t n = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        win[n++] = x.at(std::clamp(y + dy, 0, x.height - 1), std::clamp(xx + dx, 0, x.width - 1), ch);
                auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
                std::nth_element(win.begin(), mid, win.end());
                out.at(y, xx, ch) = *mid;
            }
    return out;
}

constexpr std::array<int, 64> kLumaTable = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                            14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                            18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                            49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const std::array<double, 64>& dct_matrix() {
    static const std::array<double, 64> m = [] {
        std::array<double, 64> a{};
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x) {
                const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
                a[u * 8 + x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
            }
        return a;
    }();
    return m;
}

std::array<double, 64> quant_table(int quality) {
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<double, 64> q{};
    for (int i = 0; i < 64; ++i) q[i] = std::clamp((kLumaTable[i] * scale + 50) / 100, 1, 255);
    return q;
}

Image dct_quant(const Image& x, int quality) {
    const auto& D = dct_matrix();
    const auto Q = quant_table(quality);
    Image out(x.width, x.height, x.channels);
    double blk[64], tmp[64], coef[64];
    for (int ch = 0; ch < x.channels; ++ch)
        for (int by = 0; by < x.height; by += 8)
            for (int bx = 0; bx < x.width; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        blk[i * 8 + j] =
                            255.0 * x.at(std::min(by + i, x.height - 1), std::min(bx + j, x.width - 1), ch) - 128.0;
                // coef = D blk D^T
                for (int u = 0; u < 8; ++u)
                    for (int j = 0; j < 8; ++j) {
                        double s = 0;
                        for (int i = 0; i < 8; ++i) s += D[u * 8 + i] * blk[i * 8 + j];
                        tmp[u * 8 + j] = s;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0;
                        for (int j = 0; j < 8; ++j) s += tmp[u * 8 + j] * D[v * 8 + j];
                        coef[u * 8 + v] = std::round(s / Q[u * 8 + v]) * Q[u * 8 + v];
                    }
                // blk = D^T coef D
                for (int i = 0; i < 8; ++i)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u) s += D[u * 8 + i] * coef[u * 8 + v];
                        tmp[i * 8 + v] = s;
                    }
                for (int i = 0; i < 8 && by + i < x.height; ++i)
                    for (int j = 0; j < 8 && bx + j < x.width; ++j) {
                        double s = 0;
                        for (int v = 0; v < 8; ++v) s += tmp[i * 8 + v] * D[v * 8 + j];
                        out.at(by + i, bx + j, ch) = std::clamp((s + 128.0) / 255.0, 0.0, 1.0);
                    }
            }
    return out;
}

}  // namespace

Image apply(const TransformSpec& spec, const Image& x) {
    validate_spec(spec);
    if (x.empty()) throw ValidationError("apply: empty image");
    switch (spec.category) {
        case Category::Identity: return x;
        case Category::DctQuant: return dct_quant(x, static_cast<int>(spec.param));
        case Category::GaussBlur: {
            require_fits(x, blur_radius(spec.param), spec);
            return clamp01(separable(gaussian_stencil(x.width, spec.param), gaussian_stencil(x.height, spec.param), x));
        }
        case Category::Median: {
            const int k = static_cast<int>(spec.param);
            require_fits(x, k, spec);
            return median_filter(x, k);
        }
        case Category::MeanSmooth: {
            const int k = static_cast<int>(spec.param);
            require_fits(x, k, spec);
            return clamp01(separable(box_stencil(x.width, k), box_stencil(x.height, k), x));
        }
        case Category::BitDepth: {
            const double levels = std::ldexp(1.0, static_cast<int>(spec.param)) - 1.0;
            Image out = x;
            for (double& v : out.data) v = std::clamp(std::round(v * levels) / levels, 0.0, 1.0);
            return out;
        }
        case Category::GaussNoise: {
            Rng rng(spec.seed);
            Image out = x;
            for (double& v : out.data) v = std::clamp(v + spec.param * rng.normal(), 0.0, 1.0);
            return out;
        }
        case Category::ResizeCycle: return clamp01(resize_cycle(x, spec.param));
    }
    throw ValidationError("apply: unknown category");
}

bool has_exact_adjoint(Category c) {
    return c == Category::Identity || c == Category::GaussBlur || c == Category::MeanSmooth ||
           c == Category::ResizeCycle;
}

Image smooth_vjp(const TransformSpec& spec, const Image& x, const Image& u) {
    validate_spec(spec);
    require_same_shape(x, u, "smooth_vjp");
    switch (spec.category) {
        case Category::Identity:
        case Category::DctQuant:
        case Category::BitDepth:
        case Category::GaussNoise: return u;
        case Category::GaussBlur:
            require_fits(x, blur_radius(spec.param), spec);
            return separable_adjoint(gaussian_stencil(x.width, spec.param), gaussian_stencil(x.height, spec.param), u);
        case Category::Median:
        case Category::MeanSmooth: {
            const int k = static_cast<int>(spec.param);
            require_fits(x, k, spec);
            return separable_adjoint(box_stencil(x.width, k), box_stencil(x.height, k), u);
        }
        case Category::ResizeCycle: return resize_cycle_adjoint(x, spec.param, u);
    }
    throw ValidationError("smooth_vjp: unknown category");
}

CatalogConfig CatalogConfig::defaults() {
    CatalogConfig cfg;
    cfg.grids = {{Category::Identity, {0.0}},
                 {Category::DctQuant, {90, 70, 50, 30}},
                 {Category::GaussBlur, {0.5, 1.0, 1.5, 2.0}},
                 {Category::Median, {3, 5}},
                 {Category::BitDepth, {6, 5, 4, 3}},
                 {Category::GaussNoise, {0.01, 0.02, 0.04}},
                 {Category::ResizeCycle, {0.75, 0.5}},
                 {Category::MeanSmooth, {3, 5}}};
    return cfg;
}

const CategoryGrid& CatalogConfig::grid(Category c) const {
    for (const auto& g : grids)
        if (g.category == c) return g;
    throw ValidationError("catalog has no category " + category_name(c));
}

int CatalogConfig::index_of(Category c) const {
    for (std::size_t i = 0; i < grids.size(); ++i)
        if (grids[i].category == c) return static_cast<int>(i);
    return -1;
}

CatalogConfig CatalogConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("catalog file not found: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("catalog file " + path.string() + ": " + e.what());
    }
    CatalogConfig cfg = defaults();
    try {
        if (doc.contains("grids")) {
            cfg.grids.clear();
            for (const auto& g : doc["grids"]) {
                CategoryGrid cg{parse_category(g.at("category").get<std::string>()),
                                g.at("params").get<std::vector<double>>()};
                if (cg.category == Category::Identity) cg.params = {0.0};
                if (cg.params.empty()) throw ValidationError("empty grid for " + category_name(cg.category));
                for (double p : cg.params) validate_spec({cg.category, p, 0});
                cfg.grids.push_back(cg);
            }
        }
        if (doc.contains("layers"))
            for (const auto& layer : doc["layers"]) {
                std::vector<Category> cats;
                for (const auto& n : layer) cats.push_back(parse_category(n.get<std::string>()));
                cfg.layer_categories.push_back(cats);
            }
        if (doc.contains("noise_seed")) cfg.noise_seed = doc["noise_seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("catalog file " + path.string() + ": " + e.what());
    }
    if (cfg.index_of(Category::Identity) < 0) throw ValidationError("catalog must contain identity");
    return cfg;
}

LayerCatalog catalog(int layer_index, const CatalogConfig& cfg) {
    if (layer_index < 0) throw ValidationError("catalog: layer_index must be >= 0");
    std::vector<Category> cats;
    if (!cfg.layer_categories.empty()) {
        cats = cfg.layer_categories[std::min<std::size_t>(layer_index, cfg.layer_categories.size() - 1)];
        if (std::find(cats.begin(), cats.end(), Category::Identity) == cats.end())
            cats.insert(cats.begin(), Category::Identity);
    } else {
        for (const auto& g : cfg.grids) cats.push_back(g.category);
        if (cfg.index_of(Category::Identity) < 0) cats.insert(cats.begin(), Category::Identity);
    }
    LayerCatalog out;
    out.layer_index = layer_index;
    // keep the configured category order regardless of the per-layer listing order
    std::vector<Category> ordered;
    if (cfg.index_of(Category::Identity) < 0) ordered.push_back(Category::Identity);
    for (const auto& g : cfg.grids)
        if (std::find(cats.begin(), cats.end(), g.category) != cats.end()) ordered.push_back(g.category);
    for (Category c : ordered) {
        if (c == Category::Identity) {
            out.specs.push_back({Category::Identity, 0.0, 0});
            continue;
        }
        for (double p : cfg.grid(c).params) {
            TransformSpec s{c, p, c == Category::GaussNoise ? cfg.noise_seed : 0};
            validate_spec(s);
            out.specs.push_back(s);
        }
    }
    return out;
}

std::vector<Category> categories_of(const LayerCatalog& layer) {
    std::vector<Category> cats;
    for (const auto& s : layer.specs)
        if (std::find(cats.begin(), cats.end(), s.category) == cats.end()) cats.push_back(s.category);
    return cats;
}

std::vector<TransformSpec> mildest_specs(const CatalogConfig& cfg) {
    std::vector<TransformSpec> out;
    const LayerCatalog layer = catalog(0, cfg);
    for (Category c : categories_of(layer))
        for (const auto& s : layer.specs)
            if (s.category == c) {
                out.push_back(s);
                break;
            }
    return out;
}

}  // namespace magdr
