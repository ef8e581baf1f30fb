#include "turbidspike/metrics.hpp"

#include <cmath>
#include <fstream>

namespace turbidspike::metrics {

void SsimConfig::validate() const {
    if (window < 3 || window % 2 == 0)
        throw ConfigError("SSIM window must be odd and >= 3");
    if (!(k1 > 0.0) || !(k2 > 0.0))
        throw ConfigError("SSIM stabilization constants must be positive");
    if (!(sigma > 0.0) || !(dynamic_range > 0.0))
        throw ConfigError("SSIM sigma and dynamic range must be positive");
}

double ssim(std::span<const float> a, std::span<const float> b, uint32_t h,
            uint32_t w, const SsimConfig& cfg) {
    cfg.validate();
    if (a.size() != b.size() || a.size() != static_cast<size_t>(h) * w)
        throw DataError("image shape mismatch in SSIM");
    const int win = cfg.window;
    if (static_cast<uint32_t>(win) > h || static_cast<uint32_t>(win) > w)
        throw DataError("SSIM window larger than image");

    // normalized Gaussian window
    std::vector<double> weight(static_cast<size_t>(win) * win);
    const int half = win / 2;
    double wsum = 0.0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            const double g =
                std::exp(-(dx * dx + dy * dy) / (2.0 * cfg.sigma * cfg.sigma));
            weight[static_cast<size_t>(dy + half) * win + (dx + half)] = g;
            wsum += g;
        }
    for (double& v : weight) v /= wsum;

    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

    double total = 0.0;
    size_t windows = 0;
    for (uint32_t y = half; y + half < h; ++y) {
        for (uint32_t x = half; x + half < w; ++x) {
            double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    const double wt =
                        weight[static_cast<size_t>(dy + half) * win + (dx + half)];
                    const double va = a[(y + dy) * static_cast<size_t>(w) + (x + dx)];
                    const double vb = b[(y + dy) * static_cast<size_t>(w) + (x + dx)];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

RasterSet raster_from_tensor(const std::string& name, const events::SpikeTensor& t) {
    RasterSet set;
    set.name = name;
    for (uint32_t s = 0; s < t.steps; ++s)
        for (uint32_t y = 0; y < t.height; ++y)
            for (uint32_t x = 0; x < t.width; ++x)
                for (uint32_t c = 0; c < 2; ++c)
                    if (t.at(c, s, y, x))
                        set.points.emplace_back(y * t.width + x, s);
    return set;
}

RasterSet raster_from_stream(const std::string& name, const events::EventStream& s,
                             uint32_t steps, uint64_t duration_us) {
    RasterSet set;
    set.name = name;
    const uint64_t duration = duration_us ? duration_us : s.duration_us();
    if (duration == 0) return set;
    for (const events::Event& e : s.events) {
        const uint32_t step = static_cast<uint32_t>(
            std::min<uint64_t>(e.t * steps / duration, steps - 1));
        set.points.emplace_back(static_cast<uint32_t>(e.y) * s.width + e.x, step);
    }
    return set;
}

void raster_export(const std::vector<RasterSet>& sets,
                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open raster CSV for writing: " + path.string());
    out << "set_name,neuron,step\n";
    for (const RasterSet& s : sets)
        for (auto [neuron, step] : s.points)
            out << s.name << "," << neuron << "," << step << "\n";
}

void EvalReport::finalize() {
    mean_ssim_input = mean_mse_input = mean_ssim_recon = mean_mse_recon = 0.0;
    if (samples.empty()) return;
    for (const SampleMetrics& m : samples) {
        mean_ssim_input += m.ssim_input;
        mean_mse_input += m.mse_input;
        mean_ssim_recon += m.ssim_recon;
        mean_mse_recon += m.mse_recon;
    }
    const double n = static_cast<double>(samples.size());
    mean_ssim_input /= n;
    mean_mse_input /= n;
    mean_ssim_recon /= n;
    mean_mse_recon /= n;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open report CSV for writing: " + path.string());
    out << "sample_id,ssim_input,mse_input,ssim_recon,mse_recon\n";
    out.precision(9);
    for (const SampleMetrics& m : report.samples)
        out << m.sample_id << "," << m.ssim_input << "," << m.mse_input << ","
            << m.ssim_recon << "," << m.mse_recon << "\n";
    out << "mean," << report.mean_ssim_input << "," << report.mean_mse_input << ","
        << report.mean_ssim_recon << "," << report.mean_mse_recon << "\n";
}

}  // namespace turbidspike::metrics
