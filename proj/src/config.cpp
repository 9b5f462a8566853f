#include "magdr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "magdr/error.hpp"
#include "magdr/hash.hpp"

namespace magdr {

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("x");
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("x");
        return i;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    const long long i = to_int(key, v);
    if (i < 0) throw ValidationError("config key '" + key + "': must be non-negative");
    return static_cast<std::uint64_t>(i);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string join_specs(const std::vector<TransformSpec>& specs) {
    std::string s;
    for (std::size_t i = 0; i < specs.size(); ++i) s += (i ? "," : "") + spec_to_string(specs[i]);
    return s;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(to_double(key, item));
    }
    return out;
}

struct Key {
    const char* section;
    const char* name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define KEY_D(sec, nm, field)                                                                   \
    Key { sec, nm, [](const ExperimentConfig& c) { return num(c.field); },                      \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_double(nm, v); } }
#define KEY_I(sec, nm, field)                                                                   \
    Key { sec, nm, [](const ExperimentConfig& c) { return std::to_string(c.field); },           \
          [](ExperimentConfig& c, const std::string& v) { c.field = static_cast<int>(to_int(nm, v)); } }
#define KEY_U(sec, nm, field)                                                                   \
    Key { sec, nm, [](const ExperimentConfig& c) { return std::to_string(c.field); },           \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_u64(nm, v); } }
#define KEY_B(sec, nm, field)                                                                   \
    Key { sec, nm, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
          [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(nm, v); } }
#define KEY_S(sec, nm, field)                                                                   \
    Key { sec, nm, [](const ExperimentConfig& c) { return c.field; },                           \
          [](ExperimentConfig& c, const std::string& v) { c.field = v; } }

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        KEY_U("fixtures", "seed", fixtures.spec.seed),
        KEY_I("fixtures", "count", fixtures.count),
        KEY_I("fixtures", "calibration_count", fixtures.calibration_count),
        KEY_U("fixtures", "calibration_seed", fixtures.calibration_seed),
        KEY_I("fixtures", "size", fixtures.spec.size),
        KEY_I("fixtures", "regions", fixtures.spec.n_regions),
        KEY_I("fixtures", "target_index", fixtures.spec.target_index),
        KEY_I("fixtures", "channels", fixtures.spec.channels),
        KEY_D("fixtures", "texture", fixtures.spec.texture),
        KEY_D("fixtures", "color_lo", fixtures.spec.color_lo),
        KEY_D("fixtures", "color_hi", fixtures.spec.color_hi),
        KEY_D("fixtures", "center_jitter", fixtures.spec.center_jitter),
        KEY_D("fixtures", "axis_jitter", fixtures.spec.axis_jitter),
        KEY_D("fixtures", "mask_sigma", fixtures.spec.mask_sigma),
        KEY_D("fixtures", "hue_shift_deg", fixtures.condition.hue_shift_deg),
        KEY_D("fixtures", "brightness", fixtures.condition.brightness),
        KEY_D("fixtures", "contrast", fixtures.condition.contrast),
        KEY_S("generator", "type", generator.type),
        KEY_S("generator", "command", generator.command),
        KEY_D("generator", "gain", generator.toy.gain),
        KEY_D("generator", "mix", generator.toy.mix),
        KEY_D("generator", "detail", generator.toy.detail),
        KEY_B("generator", "residual", generator.toy.residual),
        Key{"attack", "method", [](const ExperimentConfig& c) { return attack_method_name(c.attack.method); },
            [](ExperimentConfig& c, const std::string& v) { c.attack.method = parse_attack_method(v); }},
        KEY_D("attack", "eps", attack.eps),
        KEY_D("attack", "alpha", attack.alpha),
        KEY_I("attack", "iterations", attack.iterations),
        KEY_S("attack", "loss", attack.loss),
        KEY_B("attack", "random_start", attack.random_start),
        KEY_D("attack", "kappa", attack.kappa),
        KEY_U("attack", "seed", attack.seed),
        Key{"attack", "defense_set", [](const ExperimentConfig& c) { return join_specs(c.attack.defense_specs); },
            [](ExperimentConfig& c, const std::string& v) { c.attack.defense_specs = parse_spec_list(v); }},
        KEY_D("detector", "lambda", detector.lambda),
        Key{"detector", "weights",
            [](const ExperimentConfig& c) {
                std::string s;
                for (int m = 0; m < DistanceVector::kSize; ++m) s += (m ? "," : "") + num(c.detector.w[m]);
                return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
                const auto w = to_list("weights", v);
                if (static_cast<int>(w.size()) != DistanceVector::kSize)
                    throw ValidationError("config key 'weights': expected " + std::to_string(DistanceVector::kSize) +
                                          " values");
                std::copy(w.begin(), w.end(), c.detector.w.begin());
            }},
        KEY_I("detector", "tau_regions", detector.tau_regions),
        KEY_D("detector", "tau_cons", detector.tau_cons),
        KEY_D("detector", "target_fpr", target_fpr),
        Key{"detector", "consistency_set",
            [](const ExperimentConfig& c) { return join_specs(c.detector.consistency_specs); },
            [](ExperimentConfig& c, const std::string& v) { c.detector.consistency_specs = parse_spec_list(v); }},
        KEY_U("detector", "feature_seed", detector.metrics.feature_seed),
        KEY_D("detector", "lp", detector.metrics.lp),
        KEY_I("detector", "ssim_window", detector.metrics.ssim_window),
        KEY_I("recnet", "layers", recnet.defense.L_rec),
        KEY_I("recnet", "max_rounds", recnet.defense.max_rounds),
        KEY_I("recnet", "shortlist", recnet.defense.shortlist),
        KEY_I("recnet", "train_count", recnet.train_count),
        KEY_U("recnet", "train_seed", recnet.train_seed),
        KEY_S("recnet", "catalog", recnet.catalog_path),
        KEY_S("recnet", "grid_config", recnet.grid_config_path),
        KEY_S("eval", "output_dir", eval.output_dir),
        KEY_I("eval", "workers", eval.workers),
        Key{"eval", "adaptive_iterations",
            [](const ExperimentConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.eval.adaptive_iterations.size(); ++i)
                    s += (i ? "," : "") + std::to_string(c.eval.adaptive_iterations[i]);
                return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
                c.eval.adaptive_iterations.clear();
                for (double d : to_list("adaptive_iterations", v)) {
                    if (d != std::floor(d)) throw ValidationError("adaptive_iterations must be integers");
                    c.eval.adaptive_iterations.push_back(static_cast<int>(d));
                }
            }},
        KEY_I("eval", "adaptive_count", eval.adaptive_count),
        Key{"eval", "baselines", [](const ExperimentConfig& c) { return join_specs(c.eval.baselines); },
            [](ExperimentConfig& c, const std::string& v) { c.eval.baselines = parse_spec_list(v); }},
    };
    return k;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_ini_string(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ValidationError("config key '" + section + "' must live inside a [section]");
        for (const auto& [key, value] : body) {
            const auto& table = keys();
            auto it = std::find_if(table.begin(), table.end(),
                                   [&](const Key& k) { return section == k.section && key == k.name; });
            if (it == table.end()) throw ValidationError("unknown config key [" + section + "] " + key);
            it->set(cfg, value.get_value<std::string>());
        }
    }
    cfg.fixtures.condition.attribute_index = cfg.fixtures.spec.target_index;
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_ini_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config file not found: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_ini_string(ss.str());
}

std::string ExperimentConfig::to_ini() const {
    std::string out, section;
    for (const auto& k : keys()) {
        if (section != k.section) {
            section = k.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(k.name) + " = " + k.get(*this) + "\n";
    }
    return out;
}

std::string ExperimentConfig::hash() const {
    // worker count and output location cannot change report contents
    ExperimentConfig c = *this;
    c.eval.workers = 1;
    c.eval.output_dir.clear();
    return sha256_hex(c.to_ini()).substr(0, 16);
}

void ExperimentConfig::validate() const {
    if (fixtures.count < 1) throw ValidationError("[fixtures] count must be >= 1");
    if (fixtures.calibration_count < 0) throw ValidationError("[fixtures] calibration_count must be >= 0");
    const auto lo = fixtures.spec.seed, hi = fixtures.spec.seed + static_cast<std::uint64_t>(fixtures.count);
    const auto clo = fixtures.calibration_seed,
               chi = fixtures.calibration_seed + static_cast<std::uint64_t>(fixtures.calibration_count);
    if (fixtures.calibration_count > 0 && clo < hi && lo < chi)
        throw ValidationError("[fixtures] calibration seeds overlap the test seeds");
    const auto tlo = recnet.train_seed, thi = recnet.train_seed + static_cast<std::uint64_t>(recnet.train_count);
    if ((tlo < hi && lo < thi) || (fixtures.calibration_count > 0 && tlo < chi && clo < thi))
        throw ValidationError("[recnet] train seeds overlap test or calibration seeds");
    if (generator.type != "toy" && generator.type != "external")
        throw ValidationError("[generator] type must be toy or external");
    if (generator.type == "external" && generator.command.empty())
        throw ValidationError("[generator] external generator needs a command");
    if (!(target_fpr > 0 && target_fpr < 0.5)) throw ValidationError("[detector] target_fpr must be in (0, 0.5)");
    if (recnet.defense.L_rec < 1) throw ValidationError("[recnet] layers must be >= 1");
    if (recnet.defense.max_rounds < 1) throw ValidationError("[recnet] max_rounds must be >= 1");
    if (recnet.defense.shortlist < 1) throw ValidationError("[recnet] shortlist must be >= 1");
    if (recnet.train_count < 1) throw ValidationError("[recnet] train_count must be >= 1");
    if (eval.workers < 1) throw ValidationError("[eval] workers must be >= 1");
    if (eval.adaptive_count < 1) throw ValidationError("[eval] adaptive_count must be >= 1");
    if (fixtures.spec.target_index < 0 || fixtures.spec.target_index >= fixtures.spec.n_regions)
        throw ValidationError("[fixtures] target_index out of range");
    ToyEditGenerator probe_params_check(MaskTensor(1, 1, {{1.0}}, {"all"}, 0), generator.toy);
    AttackConfig a = attack;
    if (a.method == AttackMethod::Adaptive && a.defense_specs.empty()) a.defense_specs = detector.consistency_specs;
    if (a.method == AttackMethod::Targeted) a.method = AttackMethod::Pgd;  // target supplied at run time
    a.validate();
    detector.validate();
}

}  // namespace magdr
