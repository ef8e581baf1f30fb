#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "turbidspike/common.hpp"
#include "turbidspike/events.hpp"

namespace turbidspike::img {

// Mean of squared per-pixel differences; the single definition behind
// training::membrane_mse and metrics::mse_metric.
double mean_squared_error(std::span<const float> a, std::span<const float> b);

// Min-max normalization to [0,1]; a flat input maps to all zeros.
std::vector<float> minmax_normalize(std::span<const float> v);

// Sums the positive-polarity channel over all time steps ("time integrated
// spikes") and min-max normalizes; the raw-input column of the result grids.
std::vector<float> integrate_tensor(const events::SpikeTensor& t);

// Fits a source image into (out_h, out_w): integer upscale by the largest
// factor that fits, then centered zero padding. Used to turn 28x28 dataset
// images into bin-sized targets.
std::vector<float> fit_image(const float* src, uint32_t src_h, uint32_t src_w,
                             uint32_t out_h, uint32_t out_w);

// Plain-text PGM (P2, 8 bit) for dependency-free inspection.
void write_pgm(std::span<const float> pixels, uint32_t h, uint32_t w,
               const std::filesystem::path& path);

// One row per sample, columns separated by a 1-px white rule:
// target | input | reconstruction.
void write_image_grid(const std::vector<std::array<std::vector<float>, 3>>& rows,
                      uint32_t h, uint32_t w, const std::filesystem::path& path);

}  // namespace turbidspike::img
