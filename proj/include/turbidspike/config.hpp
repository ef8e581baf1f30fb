#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "turbidspike/common.hpp"
#include "turbidspike/dvs.hpp"
#include "turbidspike/preprocess.hpp"
#include "turbidspike/scatter.hpp"
#include "turbidspike/snn.hpp"
#include "turbidspike/training.hpp"

namespace turbidspike::cfg {

// Flat `section.key -> raw value` view of a TOML-style config file
// ([section] headers, `key = value` lines, # comments; values are integers,
// floats, booleans or quoted strings).
using KvMap = std::map<std::string, std::string>;

KvMap parse_toml(const std::string& text);
KvMap parse_toml_file(const std::filesystem::path& path);

// Applies a `--set section.key=value` override.
void apply_override(KvMap& kv, const std::string& assignment);

// Everything one pipeline run needs, with documented defaults for every key.
struct PipelineConfig {
    mc::PhantomSpec phantom;
    mc::SceneSpec scene;  // target_frames filled per sample by the pipeline
    uint64_t photons_per_frame = 30000;
    uint64_t flash_us = 1000;

    dvs::DvsConfig dvs;
    double dvs_threshold_percent = 25.0;  // dvs.contrast_threshold kept in sync

    preprocess::RoiRect roi;  // w==0 -> full detector
    bool activity_enabled = true;
    bool stc_enabled = false;
    bool antiflicker_enabled = false;
    preprocess::FilterParams filters;
    uint32_t bin_w = 32;
    uint32_t bin_h = 32;
    uint32_t bin_t = 50;
    events::SpikeTensor::Mode bin_mode = events::SpikeTensor::Mode::binary;

    snn::SaeConfig sae = snn::sae_default(32);
    train::TrainConfig train;

    std::filesystem::path dataset_dir = ".";
    std::string images_file = "train-images-idx3-ubyte";
    std::string labels_file = "train-labels-idx1-ubyte";
    std::filesystem::path out_dir = "out";
    uint32_t sample_count = 16;
    uint32_t sample_offset = 0;
    uint32_t val_count = 4;

    // Cross-section consistency (bin grid vs SAE input, ROI vs detector,
    // time steps vs bins). Throws ConfigError.
    void validate() const;

    // Canonical `section.key = value` text, sorted by key; `config dump`
    // prints it and the digest hashes it.
    std::string dump() const;

    // SHA-256 of the canonical dump; stable under key reordering in the
    // source file.
    std::string digest() const;

    static PipelineConfig from_kv(const KvMap& kv);
    static PipelineConfig defaults() { return {}; }
};

std::string sha256_hex(const void* data, size_t size);
std::string sha256_file(const std::filesystem::path& path);

// Reproducibility sidecar written next to every artifact directory.
struct RunManifest {
    std::string config_digest;
    std::string tool_version;
    uint64_t seed = 0;
    int jobs = 1;
    std::string created;  // wall-clock; informational only
    std::vector<std::pair<std::string, std::string>> input_digests;
    // per-sample bookkeeping for simulate outputs
    struct Sample {
        uint32_t id = 0;
        uint32_t source_index = 0;
        uint32_t label = 0;
        std::string scattered_file;
        std::string clear_file;
    };
    std::vector<Sample> samples;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace turbidspike::cfg
