#pragma once

#include <filesystem>

#include "turbidspike/config.hpp"
#include "turbidspike/metrics.hpp"
#include "turbidspike/training.hpp"

namespace turbidspike::pipeline {

// Tensor archive: magic `SPT1`, u32 version, length-prefixed config digest,
// u32 sample count, then per sample label u32, source index u32, mode u8,
// dims u32 T/H/W, duration u64, and a packed bitset (binary mode) or u16
// counts (count mode).
struct SpikeArchive {
    std::string config_digest;
    struct Item {
        uint32_t label = 0;
        uint32_t source_index = 0;
        events::SpikeTensor tensor;
    };
    std::vector<Item> items;
};

void write_archive(const SpikeArchive& archive, const std::filesystem::path& path);
SpikeArchive read_archive(const std::filesystem::path& path);

// For each selected dataset image: binarize into a target mask, flash it
// through the phantom (scattered) and through a zero-thickness phantom
// (clear ground truth), run the DVS emulator on both, and write one event
// file per path plus the run manifest. Identical (config, seed) reruns are
// byte-identical.
void cmd_simulate(const cfg::PipelineConfig& c, const std::filesystem::path& out_dir,
                  uint64_t seed, int jobs);

// Reads the simulate manifest, applies segment -> ROI -> filter chain ->
// binning to every event file, and writes scat.spt / clear.spt archives.
void cmd_preprocess(const cfg::PipelineConfig& c, const std::filesystem::path& in_dir,
                    const std::filesystem::path& out_dir);

// Trains the SAE on the scattered archive (targets: dataset images for
// membrane_mse, clear archive for van_rossum); writes per-epoch checkpoints,
// final.nci and loss.csv. `resume` continues from the newest checkpoint and
// reproduces the uninterrupted history bit-exactly.
void cmd_train(const cfg::PipelineConfig& c, const std::filesystem::path& tensor_dir,
               const std::filesystem::path& out_dir, bool resume, int jobs);

// Inference + metrics over archive samples [offset, offset+count); writes
// report.csv, grid.pgm, raster.csv and latent.csv. Returns the report.
metrics::EvalReport cmd_evaluate(const cfg::PipelineConfig& c,
                                 const std::filesystem::path& checkpoint_path,
                                 const std::filesystem::path& tensor_dir,
                                 const std::filesystem::path& out_dir,
                                 uint32_t offset, uint32_t count);

// Dataset image -> binary display mask (white where the pixel exceeds the
// threshold).
mc::TargetMask mask_from_image(const float* pixels, uint32_t h, uint32_t w,
                               float threshold = 0.5f);

}  // namespace turbidspike::pipeline
