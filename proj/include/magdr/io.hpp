#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "magdr/image.hpp"

namespace magdr {

// 8-bit PNG (gray or RGB; alpha is composited away by libpng) and binary
// PGM/PPM. Bytes map to p/255. 16-bit rasters are rejected.
Image load_image(const std::filesystem::path& path);

// Writes round-half-up(p * 255) clamped to [0,255]. The format follows the
// extension: .png, .pgm/.ppm/.pnm; anything else is rejected.
void save_image(const Image& image, const std::filesystem::path& path);

// Encoding used by save_image, exposed so in-memory data can match files.
unsigned char to_byte(double p);
Image quantize_8bit(Image img);

struct MaskLoadInfo {
    double max_deviation = 0.0;         // max |Σ_i M_i - 1| before renormalization
    std::vector<std::string> warnings;  // non-empty when max_deviation > 1e-3
};

// JSON: {"target_index": c, "regions": [{"region_name": ..., "raster_path": ...}, ...]}.
// Relative raster paths resolve against the manifest's directory.
MaskTensor load_mask_manifest(const std::filesystem::path& path, MaskLoadInfo* info = nullptr);

// Writes one gray PNG per region plus the manifest. Bytes are allocated per
// pixel by largest remainder so the stored weights sum to exactly 255.
void save_mask_manifest(const MaskTensor& masks, const std::filesystem::path& manifest_path);

// Same quantization as save_mask_manifest, applied in memory.
MaskTensor quantize_masks(const MaskTensor& masks);

}  // namespace magdr
