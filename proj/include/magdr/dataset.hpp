#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "magdr/config.hpp"
#include "magdr/generator.hpp"
#include "magdr/image.hpp"

namespace magdr {

struct Sample {
    std::string id;
    std::uint64_t seed = 0;
    Image image;                 // the input under test (clean, or attacked)
    std::optional<Image> clean;  // original clean image for attacked samples
    std::shared_ptr<const MaskTensor> masks;
    Condition condition;
};

using Dataset = std::vector<Sample>;

// Seeds first_seed .. first_seed + n - 1 with the fixture layout of cfg.
Dataset make_dataset(const FixtureSection& fixtures, std::uint64_t first_seed, int n);

// Writes images/, masks/, conditions/ and manifest.json under out_dir.
// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& out_dir,
                                   const std::string& provenance_json = "{}");
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Builds G for one sample.
std::shared_ptr<const Generator> make_generator(const GeneratorSection& g, const MaskTensor& masks,
                                                const std::filesystem::path& work_dir = std::filesystem::temp_directory_path() / "magdr_external");

}  // namespace magdr
