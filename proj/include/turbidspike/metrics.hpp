#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "turbidspike/events.hpp"
#include "turbidspike/image.hpp"

namespace turbidspike::metrics {

struct SsimConfig {
    int window = 7;          // odd, >= 3
    double sigma = 1.5;      // Gaussian window weight
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

// Gaussian-windowed SSIM, averaged over every window position that fits
// fully inside the image. Result is in [-1, 1]; identical images give 1.
double ssim(std::span<const float> a, std::span<const float> b, uint32_t h,
            uint32_t w, const SsimConfig& cfg = {});

// Same definition as training::membrane_mse; housed once in img and
// re-exported here.
inline double mse_metric(std::span<const float> a, std::span<const float> b) {
    return img::mean_squared_error(a, b);
}

// (neuron, step) pairs of one named spike set for the raster CSV.
struct RasterSet {
    std::string name;
    std::vector<std::pair<uint32_t, uint32_t>> points;  // (neuron, step)
};

// Row-major flattening: neuron = y*W + x.
RasterSet raster_from_tensor(const std::string& name, const events::SpikeTensor& t);
RasterSet raster_from_stream(const std::string& name, const events::EventStream& s,
                             uint32_t steps, uint64_t duration_us = 0);

// CSV with header set_name,neuron,step; scripts/plot_raster.py renders the
// overlay plot.
void raster_export(const std::vector<RasterSet>& sets,
                   const std::filesystem::path& path);

struct SampleMetrics {
    uint32_t sample_id = 0;
    double ssim_input = 0.0;
    double mse_input = 0.0;
    double ssim_recon = 0.0;
    double mse_recon = 0.0;
};

struct EvalReport {
    std::vector<SampleMetrics> samples;
    double mean_ssim_input = 0.0;
    double mean_mse_input = 0.0;
    double mean_ssim_recon = 0.0;
    double mean_mse_recon = 0.0;
    std::string config_digest;

    void finalize();  // recomputes the means from the per-sample rows
};

// CSV: sample_id,ssim_input,mse_input,ssim_recon,mse_recon plus a final
// `mean` row.
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace turbidspike::metrics
