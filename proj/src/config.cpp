#include "turbidspike/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace turbidspike::cfg {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// strips a trailing comment that is not inside a quoted string
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

}  // namespace

KvMap parse_toml(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty section name");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": empty key or value");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        kv[section.empty() ? key : section + "." + key] = value;
    }
    return kv;
}

KvMap parse_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml(ss.str());
}

void apply_override(KvMap& kv, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == assignment.size())
        throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    std::string key = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
    kv[key] = value;
}

namespace {

struct KvReader {
    const KvMap& kv;
    std::set<std::string> seen;

    bool has(const std::string& key) {
        seen.insert(key);
        return kv.count(key) != 0;
    }
    std::string str(const std::string& key, const std::string& def) {
        seen.insert(key);
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    }
    double num(const std::string& key, double def) {
        seen.insert(key);
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        try {
            size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not a number: '" +
                              it->second + "'");
        }
    }
    uint64_t u64(const std::string& key, uint64_t def) {
        const double v = num(key, static_cast<double>(def));
        if (v < 0 || v != std::floor(v))
            throw ConfigError("config key '" + key + "': expected a non-negative integer");
        return static_cast<uint64_t>(v);
    }
    bool flag(const std::string& key, bool def) {
        seen.insert(key);
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw ConfigError("config key '" + key + "': expected true or false");
    }
    void reject_unknown() const {
        for (const auto& [key, value] : kv)
            if (!seen.count(key))
                throw ConfigError("unknown config key '" + key + "'");
    }
};

std::string fmt_num(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

PipelineConfig PipelineConfig::from_kv(const KvMap& kv) {
    PipelineConfig c;
    KvReader r{kv, {}};

    c.phantom.mu_s = r.num("phantom.mu_s", c.phantom.mu_s);
    c.phantom.mu_a = r.num("phantom.mu_a", c.phantom.mu_a);
    c.phantom.g = r.num("phantom.g", c.phantom.g);
    c.phantom.thickness_mm = r.num("phantom.thickness_mm", c.phantom.thickness_mm);
    c.phantom.refractive_index =
        r.num("phantom.refractive_index", c.phantom.refractive_index);
    c.phantom.fresnel = r.flag("phantom.fresnel", c.phantom.fresnel);

    const std::string geom = r.str("scene.geometry", "transmission");
    if (geom == "transmission")
        c.scene.geometry = mc::Geometry::transmission;
    else if (geom == "reflection")
        c.scene.geometry = mc::Geometry::reflection;
    else
        throw ConfigError("scene.geometry must be transmission or reflection");
    c.scene.source.beam_radius_mm =
        r.num("scene.beam_radius_mm", c.scene.source.beam_radius_mm);
    const std::string profile = r.str("scene.beam_profile", "disk");
    if (profile == "disk")
        c.scene.source.profile = mc::SourceSpec::Profile::disk;
    else if (profile == "pencil")
        c.scene.source.profile = mc::SourceSpec::Profile::pencil;
    else
        throw ConfigError("scene.beam_profile must be disk or pencil");
    c.scene.source.wavelength_nm =
        r.num("scene.wavelength_nm", c.scene.source.wavelength_nm);
    c.scene.source.fluence_mw_mm2 =
        r.num("scene.fluence_mw_mm2", c.scene.source.fluence_mw_mm2);
    c.scene.detector_w = static_cast<uint32_t>(r.u64("scene.detector_w", c.scene.detector_w));
    c.scene.detector_h = static_cast<uint32_t>(r.u64("scene.detector_h", c.scene.detector_h));
    c.scene.detector_pitch_mm =
        r.num("scene.detector_pitch_mm", c.scene.detector_pitch_mm);
    c.scene.target_pitch_mm = r.num("scene.target_pitch_mm", c.scene.target_pitch_mm);
    c.scene.target_plane_mm = r.num("scene.target_plane_mm", c.scene.target_plane_mm);
    c.scene.transition_us = r.u64("scene.transition_us", c.scene.transition_us);
    c.scene.settle_us = r.u64("scene.settle_us", c.scene.settle_us);
    c.photons_per_frame = r.u64("scene.photons_per_frame", c.photons_per_frame);
    c.flash_us = r.u64("scene.flash_us", c.flash_us);

    c.dvs_threshold_percent = r.num("dvs.threshold_percent", c.dvs_threshold_percent);
    c.dvs = dvs::set_threshold_percent(c.dvs, c.dvs_threshold_percent);
    c.dvs.threshold_mismatch_sigma =
        r.num("dvs.mismatch_sigma", c.dvs.threshold_mismatch_sigma);
    c.dvs.background_rate_hz = r.num("dvs.background_rate_hz", c.dvs.background_rate_hz);
    c.dvs.refractory_us = r.u64("dvs.refractory_us", c.dvs.refractory_us);
    c.dvs.intensity_floor = r.num("dvs.intensity_floor", c.dvs.intensity_floor);

    c.roi.x0 = static_cast<uint16_t>(r.u64("preprocess.roi_x", c.roi.x0));
    c.roi.y0 = static_cast<uint16_t>(r.u64("preprocess.roi_y", c.roi.y0));
    c.roi.w = static_cast<uint16_t>(r.u64("preprocess.roi_w", c.roi.w));
    c.roi.h = static_cast<uint16_t>(r.u64("preprocess.roi_h", c.roi.h));
    c.activity_enabled = r.flag("preprocess.activity_filter", c.activity_enabled);
    c.filters.activity_dt_us =
        r.u64("preprocess.activity_dt_us", c.filters.activity_dt_us);
    c.filters.activity_radius = static_cast<int>(
        r.u64("preprocess.activity_radius", c.filters.activity_radius));
    c.stc_enabled = r.flag("preprocess.stc_filter", c.stc_enabled);
    c.filters.stc_dt_us = r.u64("preprocess.stc_dt_us", c.filters.stc_dt_us);
    c.filters.stc_count =
        static_cast<int>(r.u64("preprocess.stc_count", c.filters.stc_count));
    c.antiflicker_enabled =
        r.flag("preprocess.antiflicker_filter", c.antiflicker_enabled);
    c.filters.flicker_fmin_hz =
        r.num("preprocess.flicker_fmin_hz", c.filters.flicker_fmin_hz);
    c.filters.flicker_fmax_hz =
        r.num("preprocess.flicker_fmax_hz", c.filters.flicker_fmax_hz);
    c.filters.flicker_min_cycles = static_cast<int>(
        r.u64("preprocess.flicker_min_cycles", c.filters.flicker_min_cycles));
    c.bin_w = static_cast<uint32_t>(r.u64("preprocess.bin_w", c.bin_w));
    c.bin_h = static_cast<uint32_t>(r.u64("preprocess.bin_h", c.bin_h));
    c.bin_t = static_cast<uint32_t>(r.u64("preprocess.bin_t", c.bin_t));
    const std::string mode = r.str("preprocess.bin_mode", "binary");
    if (mode == "binary")
        c.bin_mode = events::SpikeTensor::Mode::binary;
    else if (mode == "count")
        c.bin_mode = events::SpikeTensor::Mode::count;
    else
        throw ConfigError("preprocess.bin_mode must be binary or count");

    const uint64_t input_size = r.u64("sae.input_size", c.bin_w);
    c.sae = snn::sae_default(static_cast<int>(input_size));
    c.sae.latent_dim = static_cast<int>(r.u64("sae.latent_dim", c.sae.latent_dim));
    c.sae.lif.alpha = r.num("sae.alpha", c.sae.lif.alpha);
    c.sae.lif.beta = r.num("sae.beta", c.sae.lif.beta);
    c.sae.lif.theta = r.num("sae.theta", c.sae.lif.theta);
    const std::string reset = r.str("sae.reset", "subtract");
    if (reset == "subtract")
        c.sae.lif.reset = snn::LifConfig::Reset::subtract;
    else if (reset == "zero")
        c.sae.lif.reset = snn::LifConfig::Reset::zero;
    else
        throw ConfigError("sae.reset must be subtract or zero");

    const std::string loss = r.str("train.loss", "membrane_mse");
    if (loss == "membrane_mse")
        c.train.loss = train::LossMode::membrane_mse;
    else if (loss == "van_rossum")
        c.train.loss = train::LossMode::van_rossum;
    else
        throw ConfigError("train.loss must be membrane_mse or van_rossum");
    const double theta_out = r.num("sae.theta_out", 0.0);
    c.sae.theta_out =
        theta_out > 0.0
            ? theta_out
            : (c.train.loss == train::LossMode::membrane_mse ? 1e6 : 1.0);

    c.train.surrogate_slope = r.num("train.surrogate_slope", c.train.surrogate_slope);
    c.sae.surrogate_slope = c.train.surrogate_slope;
    c.train.learning_rate = r.num("train.learning_rate", c.train.learning_rate);
    c.train.batch_size = static_cast<int>(r.u64("train.batch_size", c.train.batch_size));
    c.train.epochs = static_cast<int>(r.u64("train.epochs", c.train.epochs));
    c.train.tau_vr_us = r.num("train.tau_vr_us", c.train.tau_vr_us);
    c.train.seed = r.u64("train.seed", c.train.seed);
    const std::string persistence = r.str("train.persistence", "reset_per_sample");
    if (persistence == "reset_per_sample")
        c.train.persistence = train::Persistence::reset_per_sample;
    else if (persistence == "persist_across_samples")
        c.train.persistence = train::Persistence::persist_across_samples;
    else
        throw ConfigError(
            "train.persistence must be reset_per_sample or persist_across_samples");
    c.train.time_steps = static_cast<int>(c.bin_t);

    c.dataset_dir = r.str("paths.dataset_dir", c.dataset_dir.string());
    c.images_file = r.str("paths.images_file", c.images_file);
    c.labels_file = r.str("paths.labels_file", c.labels_file);
    c.out_dir = r.str("paths.out_dir", c.out_dir.string());
    c.sample_count = static_cast<uint32_t>(r.u64("data.count", c.sample_count));
    c.sample_offset = static_cast<uint32_t>(r.u64("data.offset", c.sample_offset));
    c.val_count = static_cast<uint32_t>(r.u64("data.val_count", c.val_count));

    r.reject_unknown();
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    phantom.validate();
    scene.validate();
    dvs.validate();
    train.validate();
    sae.validate();
    if (photons_per_frame == 0) throw ConfigError("photons_per_frame must be >= 1");
    if (flash_us == 0) throw ConfigError("flash duration must be positive");
    const uint32_t roi_w = roi.w ? roi.w : scene.detector_w;
    const uint32_t roi_h = roi.h ? roi.h : scene.detector_h;
    if (roi.x0 + roi_w > scene.detector_w || roi.y0 + roi_h > scene.detector_h)
        throw ConfigError("ROI exceeds the detector grid");
    if (roi_w % bin_w != 0 || roi_h % bin_h != 0)
        throw ConfigError("ROI extent not divisible by the bin grid");
    if (static_cast<int>(bin_w) != sae.in_w || static_cast<int>(bin_h) != sae.in_h)
        throw ConfigError("bin grid must match the SAE input shape");
    if (static_cast<int>(bin_t) != train.time_steps)
        throw ConfigError("bin_t must match the training time steps");
    if (val_count > sample_count)
        throw ConfigError("val_count cannot exceed the sample count");
}

std::string PipelineConfig::dump() const {
    std::ostringstream out;
    auto sec = [&](const char* name) { out << "[" << name << "]\n"; };
    auto num = [&](const char* key, double v) { out << key << " = " << fmt_num(v) << "\n"; };
    auto str = [&](const char* key, const std::string& v) {
        out << key << " = \"" << v << "\"\n";
    };
    auto flag = [&](const char* key, bool v) {
        out << key << " = " << (v ? "true" : "false") << "\n";
    };

    sec("data");
    num("count", sample_count);
    num("offset", sample_offset);
    num("val_count", val_count);

    sec("dvs");
    num("background_rate_hz", dvs.background_rate_hz);
    num("intensity_floor", dvs.intensity_floor);
    num("mismatch_sigma", dvs.threshold_mismatch_sigma);
    num("refractory_us", static_cast<double>(dvs.refractory_us));
    num("threshold_percent", dvs_threshold_percent);

    sec("paths");
    str("dataset_dir", dataset_dir.string());
    str("images_file", images_file);
    str("labels_file", labels_file);
    str("out_dir", out_dir.string());

    sec("phantom");
    flag("fresnel", phantom.fresnel);
    num("g", phantom.g);
    num("mu_a", phantom.mu_a);
    num("mu_s", phantom.mu_s);
    num("refractive_index", phantom.refractive_index);
    num("thickness_mm", phantom.thickness_mm);

    sec("preprocess");
    num("activity_dt_us", static_cast<double>(filters.activity_dt_us));
    flag("activity_filter", activity_enabled);
    num("activity_radius", filters.activity_radius);
    flag("antiflicker_filter", antiflicker_enabled);
    num("bin_h", bin_h);
    str("bin_mode", bin_mode == events::SpikeTensor::Mode::binary ? "binary" : "count");
    num("bin_t", bin_t);
    num("bin_w", bin_w);
    num("flicker_fmax_hz", filters.flicker_fmax_hz);
    num("flicker_fmin_hz", filters.flicker_fmin_hz);
    num("flicker_min_cycles", filters.flicker_min_cycles);
    num("roi_h", roi.h);
    num("roi_w", roi.w);
    num("roi_x", roi.x0);
    num("roi_y", roi.y0);
    num("stc_count", filters.stc_count);
    num("stc_dt_us", static_cast<double>(filters.stc_dt_us));
    flag("stc_filter", stc_enabled);

    sec("sae");
    num("alpha", sae.lif.alpha);
    num("beta", sae.lif.beta);
    num("input_size", sae.in_w);
    num("latent_dim", sae.latent_dim);
    str("reset",
        sae.lif.reset == snn::LifConfig::Reset::subtract ? "subtract" : "zero");
    num("theta", sae.lif.theta);
    num("theta_out", sae.theta_out);

    sec("scene");
    str("beam_profile",
        scene.source.profile == mc::SourceSpec::Profile::disk ? "disk" : "pencil");
    num("beam_radius_mm", scene.source.beam_radius_mm);
    num("detector_h", scene.detector_h);
    num("detector_pitch_mm", scene.detector_pitch_mm);
    num("detector_w", scene.detector_w);
    num("flash_us", static_cast<double>(flash_us));
    num("fluence_mw_mm2", scene.source.fluence_mw_mm2);
    str("geometry",
        scene.geometry == mc::Geometry::transmission ? "transmission" : "reflection");
    num("photons_per_frame", static_cast<double>(photons_per_frame));
    num("settle_us", static_cast<double>(scene.settle_us));
    num("target_pitch_mm", scene.target_pitch_mm);
    num("target_plane_mm", scene.target_plane_mm);
    num("transition_us", static_cast<double>(scene.transition_us));
    num("wavelength_nm", scene.source.wavelength_nm);

    sec("train");
    num("batch_size", train.batch_size);
    num("epochs", train.epochs);
    num("learning_rate", train.learning_rate);
    str("loss", train.loss == train::LossMode::membrane_mse ? "membrane_mse"
                                                            : "van_rossum");
    str("persistence", train.persistence == train::Persistence::reset_per_sample
                           ? "reset_per_sample"
                           : "persist_across_samples");
    num("seed", static_cast<double>(train.seed));
    num("surrogate_slope", train.surrogate_slope);
    num("tau_vr_us", train.tau_vr_us);
    return out.str();
}

std::string PipelineConfig::digest() const {
    const std::string text = dump();
    return sha256_hex(text.data(), text.size());
}

std::string sha256_hex(const void* data, size_t size) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    if (EVP_Digest(data, size, md, &md_len, EVP_sha256(), nullptr) != 1)
        throw NumericError("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * md_len);
    for (unsigned i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for digest: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return sha256_hex(bytes.data(), bytes.size());
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    json j{{"config_digest", m.config_digest},
           {"tool_version", m.tool_version},
           {"seed", m.seed},
           {"jobs", m.jobs},
           {"created", m.created}};
    j["inputs"] = json::object();
    for (const auto& [file, digest] : m.input_digests) j["inputs"][file] = digest;
    j["samples"] = json::array();
    for (const auto& s : m.samples)
        j["samples"].push_back({{"id", s.id},
                                {"source_index", s.source_index},
                                {"label", s.label},
                                {"scattered", s.scattered_file},
                                {"clear", s.clear_file}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot open manifest for writing: " + path.string());
    out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());
    json j = json::parse(in, nullptr, true, true);
    RunManifest m;
    m.config_digest = j.at("config_digest");
    m.tool_version = j.at("tool_version");
    m.seed = j.at("seed");
    m.jobs = j.at("jobs");
    m.created = j.at("created");
    for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it)
        m.input_digests.emplace_back(it.key(), it.value());
    for (const auto& s : j.at("samples"))
        m.samples.push_back({s.at("id"), s.at("source_index"), s.at("label"),
                             s.at("scattered"), s.at("clear")});
    return m;
}

}  // namespace turbidspike::cfg
