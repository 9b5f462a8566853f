#include "magdr/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "magdr/error.hpp"
#include "magdr/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace magdr {

Dataset make_dataset(const FixtureSection& fixtures, std::uint64_t first_seed, int n) {
    if (n < 0) throw ValidationError("make_dataset: negative count");
    Dataset out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        FixtureSpec spec = fixtures.spec;
        spec.seed = first_seed + static_cast<std::uint64_t>(i);
        Fixture f = synth_fixture(spec);
        Sample s;
        s.id = "fx" + std::to_string(spec.seed);
        s.seed = spec.seed;
        s.image = std::move(f.image);
        s.masks = std::make_shared<const MaskTensor>(std::move(f.masks));
        s.condition = fixtures.condition;
        s.condition.attribute_index = spec.target_index;
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

json condition_json(const Condition& c) {
    return {{"attribute_index", c.attribute_index},
            {"hue_shift_deg", c.hue_shift_deg},
            {"brightness", c.brightness},
            {"contrast", c.contrast}};
}

Condition condition_from_json(const json& j) {
    Condition c;
    c.attribute_index = j.at("attribute_index").get<int>();
    c.hue_shift_deg = j.value("hue_shift_deg", c.hue_shift_deg);
    c.brightness = j.value("brightness", c.brightness);
    c.contrast = j.value("contrast", c.contrast);
    return c;
}

}  // namespace

fs::path save_dataset(const Dataset& data, const fs::path& out_dir, const std::string& provenance_json) {
    try {
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "masks");
        fs::create_directories(out_dir / "conditions");
    } catch (const fs::filesystem_error& e) {
        throw RuntimeError("cannot create dataset directory " + out_dir.string() + ": " + e.what());
    }
    json doc;
    doc["provenance"] = json::parse(provenance_json);
    doc["samples"] = json::array();
    for (const auto& s : data) {
        const std::string img = "images/" + s.id + ".png";
        const std::string msk = "masks/" + s.id + ".json";
        const std::string cnd = "conditions/" + s.id + ".json";
        save_image(s.image, out_dir / img);
        save_mask_manifest(*s.masks, out_dir / msk);
        {
            std::ofstream f(out_dir / cnd);
            if (!f) throw RuntimeError("cannot write " + (out_dir / cnd).string());
            f << condition_json(s.condition).dump(2) << "\n";
        }
        json entry = {{"id", s.id}, {"seed", s.seed}, {"image", img}, {"masks", msk}, {"condition", cnd}};
        if (s.clean) {
            const std::string cl = "images/" + s.id + "_clean.png";
            save_image(*s.clean, out_dir / cl);
            entry["clean_image"] = cl;
        }
        doc["samples"].push_back(entry);
    }
    const fs::path manifest = out_dir / "manifest.json";
    std::ofstream out(manifest);
    if (!out) throw RuntimeError("cannot write " + manifest.string());
    out << doc.dump(2) << "\n";
    return manifest;
}

Dataset load_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("dataset manifest not found: " + manifest_path.string());
    const fs::path base = manifest_path.parent_path();
    Dataset out;
    try {
        json doc;
        in >> doc;
        for (const auto& e : doc.at("samples")) {
            Sample s;
            s.id = e.at("id").get<std::string>();
            s.seed = e.value("seed", std::uint64_t{0});
            s.image = load_image(base / e.at("image").get<std::string>());
            s.masks = std::make_shared<const MaskTensor>(load_mask_manifest(base / e.at("masks").get<std::string>()));
            std::ifstream cf(base / e.at("condition").get<std::string>());
            if (!cf) throw ValidationError("condition file missing for sample " + s.id);
            json cj;
            cf >> cj;
            s.condition = condition_from_json(cj);
            validate_condition(s.condition, *s.masks);
            if (e.contains("clean_image")) s.clean = load_image(base / e["clean_image"].get<std::string>());
            if (s.image.width != s.masks->width() || s.image.height != s.masks->height())
                throw ValidationError("sample " + s.id + ": image and masks differ in size");
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ValidationError("dataset manifest " + manifest_path.string() + ": " + e.what());
    }
    return out;
}

std::shared_ptr<const Generator> make_generator(const GeneratorSection& g, const MaskTensor& masks,
                                                const fs::path& work_dir) {
    if (g.type == "toy") return std::make_shared<const ToyEditGenerator>(masks, g.toy);
    if (g.type == "external") return std::make_shared<const ExternalProcessGenerator>(g.command, work_dir);
    throw ValidationError("unknown generator type '" + g.type + "'");
}

}  // namespace magdr
