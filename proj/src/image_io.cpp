#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "magdr/error.hpp"
#include "magdr/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace magdr {

unsigned char to_byte(double p) {
    const double v = std::floor(p * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

Image quantize_8bit(Image img) {
    for (double& v : img.data) v = to_byte(v) / 255.0;
    return img;
}

namespace {

std::string lower_ext(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext;
}

Image from_bytes(const unsigned char* bytes, int w, int h, int c) {
    if (w < 1 || h < 1) throw ValidationError("zero-dimension image");
    Image img(w, h, c);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

std::vector<unsigned char> to_bytes(const Image& image) {
    std::vector<unsigned char> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = to_byte(image.data[i]);
    return out;
}

Image load_png(const fs::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw ValidationError("cannot read PNG " + path.string() + ": " + img.message);
    if (img.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&img);
        throw ValidationError("unsupported PNG (16-bit samples): " + path.string());
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (img.width == 0 || img.height == 0) {
        png_image_free(&img);
        throw ValidationError("zero-dimension image: " + path.string());
    }
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
        throw ValidationError("cannot decode PNG " + path.string() + ": " + img.message);
    return from_bytes(buf.data(), static_cast<int>(img.width), static_cast<int>(img.height), color ? 3 : 1);
}

void save_png(const Image& image, const fs::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = image.width;
    img.height = image.height;
    if (image.channels == 1) img.format = PNG_FORMAT_GRAY;
    else if (image.channels == 3) img.format = PNG_FORMAT_RGB;
    else throw ValidationError("PNG output supports 1 or 3 channels");
    const auto bytes = to_bytes(image);
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw RuntimeError("cannot write PNG " + path.string() + ": " + img.message);
}

// Skips whitespace and '#' comments in a PNM header.
int pnm_int(std::istream& in) {
    int ch;
    while ((ch = in.peek()) != EOF) {
        if (std::isspace(ch)) in.get();
        else if (ch == '#') { std::string line; std::getline(in, line); }
        else break;
    }
    int v = -1;
    if (!(in >> v)) throw ValidationError("malformed PNM header");
    return v;
}

Image load_pnm(const fs::path& path, std::ifstream& in) {
    char magic[2];
    in.read(magic, 2);
    int c = 0;
    if (magic[0] == 'P' && magic[1] == '5') c = 1;
    else if (magic[0] == 'P' && magic[1] == '6') c = 3;
    else throw ValidationError("unsupported format: " + path.string());
    const int w = pnm_int(in), h = pnm_int(in), maxval = pnm_int(in);
    if (maxval != 255) throw ValidationError("unsupported PNM maxval (only 8-bit): " + path.string());
    if (w < 1 || h < 1) throw ValidationError("zero-dimension image: " + path.string());
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * c);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw ValidationError("truncated PNM: " + path.string());
    return from_bytes(buf.data(), w, h, c);
}

void save_pnm(const Image& image, const fs::path& path) {
    if (image.channels != 1 && image.channels != 3) throw ValidationError("PNM output supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << (image.channels == 1 ? "P5" : "P6") << "\n" << image.width << " " << image.height << "\n255\n";
    const auto bytes = to_bytes(image);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeError("cannot write " + path.string());
}

std::vector<unsigned char> largest_remainder_bytes(const std::vector<double>& weights) {
    // weights sum to 1; allocate 255 units.
    const std::size_t n = weights.size();
    std::vector<unsigned char> out(n);
    std::vector<double> rem(n);
    int used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = weights[i] * 255.0;
        const double f = std::floor(v);
        out[i] = static_cast<unsigned char>(std::clamp(f, 0.0, 255.0));
        rem[i] = v - f;
        used += out[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; used < 255 && k < n; ++k, ++used) ++out[order[k]];
    return out;
}

std::vector<std::vector<unsigned char>> mask_bytes(const MaskTensor& masks) {
    const std::size_t np = static_cast<std::size_t>(masks.width()) * masks.height();
    std::vector<std::vector<unsigned char>> bytes(masks.size(), std::vector<unsigned char>(np));
    std::vector<double> w(masks.size());
    for (std::size_t p = 0; p < np; ++p) {
        for (int i = 0; i < masks.size(); ++i) w[i] = masks.region(i)[p];
        const auto b = largest_remainder_bytes(w);
        for (int i = 0; i < masks.size(); ++i) bytes[i][p] = b[i];
    }
    return bytes;
}

}  // namespace

Image load_image(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("image file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    if (in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) {
        in.close();
        return load_png(path);
    }
    in.clear();
    in.seekg(0);
    return load_pnm(path, in);
}

void save_image(const Image& image, const fs::path& path) {
    if (image.empty()) throw ValidationError("cannot save an empty image");
    const std::string ext = lower_ext(path);
    if (ext == ".png") save_png(image, path);
    else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") save_pnm(image, path);
    else throw ValidationError("unsupported output extension '" + ext + "' (use .png or .ppm/.pgm)");
}

MaskTensor load_mask_manifest(const fs::path& path, MaskLoadInfo* info) {
    std::ifstream in(path);
    if (!in) throw ValidationError("mask manifest not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("mask manifest " + path.string() + ": " + e.what());
    }
    if (!doc.contains("regions") || !doc["regions"].is_array() || !doc.contains("target_index"))
        throw ValidationError("mask manifest " + path.string() + ": needs 'regions' array and 'target_index'");
    const fs::path base = path.parent_path();
    std::vector<std::vector<double>> regions;
    std::vector<std::string> names;
    int w = -1, h = -1;
    for (const auto& entry : doc["regions"]) {
        const std::string name = entry.at("region_name").get<std::string>();
        fs::path raster = entry.at("raster_path").get<std::string>();
        if (raster.is_relative()) raster = base / raster;
        if (!fs::exists(raster)) throw ValidationError("mask raster missing: " + raster.string());
        const Image img = load_image(raster);
        if (img.channels != 1) throw ValidationError("mask raster must be grayscale: " + raster.string());
        if (w < 0) { w = img.width; h = img.height; }
        else if (img.width != w || img.height != h)
            throw ValidationError("mask raster shape mismatch: " + raster.string());
        regions.push_back(img.data);
        names.push_back(name);
    }
    if (regions.empty()) throw ValidationError("mask manifest lists no regions: " + path.string());
    double dev = 0.0;
    MaskTensor masks = MaskTensor::renormalized(w, h, std::move(regions), std::move(names),
                                                doc["target_index"].get<int>(), &dev);
    if (info) {
        info->max_deviation = dev;
        info->warnings.clear();
    }
    if (dev > 1e-3) {
        std::ostringstream msg;
        msg << "mask manifest " << path.string() << ": per-pixel sums deviated by up to " << dev
            << "; renormalized";
        spdlog::warn(msg.str());
        if (info) info->warnings.push_back(msg.str());
    }
    return masks;
}

MaskTensor quantize_masks(const MaskTensor& masks) {
    const auto bytes = mask_bytes(masks);
    std::vector<std::vector<double>> regions(masks.size());
    for (int i = 0; i < masks.size(); ++i) {
        regions[i].resize(bytes[i].size());
        for (std::size_t p = 0; p < bytes[i].size(); ++p) regions[i][p] = bytes[i][p] / 255.0;
    }
    return MaskTensor::renormalized(masks.width(), masks.height(), std::move(regions), masks.names(),
                                    masks.target_index());
}

void save_mask_manifest(const MaskTensor& masks, const fs::path& manifest_path) {
    const auto bytes = mask_bytes(masks);
    const fs::path dir = manifest_path.parent_path();
    const std::string stem = manifest_path.stem().string();
    json doc;
    doc["target_index"] = masks.target_index();
    doc["regions"] = json::array();
    for (int i = 0; i < masks.size(); ++i) {
        Image raster(masks.width(), masks.height(), 1);
        for (std::size_t p = 0; p < bytes[i].size(); ++p) raster.data[p] = bytes[i][p] / 255.0;
        const std::string file = stem + "_" + std::to_string(i) + ".png";
        save_image(raster, dir / file);
        doc["regions"].push_back({{"region_name", masks.name(i)}, {"raster_path", file}});
    }
    std::ofstream out(manifest_path);
    if (!out) throw RuntimeError("cannot write " + manifest_path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace magdr
