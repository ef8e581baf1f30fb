#include "turbidspike/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace turbidspike::img {

double mean_squared_error(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DataError("image shape mismatch in MSE");
    if (a.empty()) throw DataError("empty images in MSE");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

std::vector<float> minmax_normalize(std::span<const float> v) {
    std::vector<float> out(v.size(), 0.0f);
    if (v.empty()) return out;
    auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const float mn = *mn_it, mx = *mx_it;
    if (mx == mn) return out;  // flat trace carries no structure
    const float inv = 1.0f / (mx - mn);
    for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mn) * inv;
    return out;
}

std::vector<float> integrate_tensor(const events::SpikeTensor& t) {
    std::vector<float> acc(static_cast<size_t>(t.height) * t.width, 0.0f);
    for (uint32_t s = 0; s < t.steps; ++s)
        for (uint32_t y = 0; y < t.height; ++y)
            for (uint32_t x = 0; x < t.width; ++x)
                acc[static_cast<size_t>(y) * t.width + x] +=
                    static_cast<float>(t.at(0, s, y, x));
    return minmax_normalize(acc);
}

std::vector<float> fit_image(const float* src, uint32_t src_h, uint32_t src_w,
                             uint32_t out_h, uint32_t out_w) {
    if (src_h == 0 || src_w == 0 || out_h == 0 || out_w == 0)
        throw DataError("fit_image requires non-empty shapes");
    uint32_t scale = std::max<uint32_t>(1, std::min(out_h / src_h, out_w / src_w));
    const uint32_t sh = src_h * scale;
    const uint32_t sw = src_w * scale;
    if (sh > out_h || sw > out_w)
        throw DataError("source image larger than target frame");
    const uint32_t oy = (out_h - sh) / 2;
    const uint32_t ox = (out_w - sw) / 2;
    std::vector<float> out(static_cast<size_t>(out_h) * out_w, 0.0f);
    for (uint32_t y = 0; y < sh; ++y)
        for (uint32_t x = 0; x < sw; ++x)
            out[static_cast<size_t>(oy + y) * out_w + ox + x] =
                src[static_cast<size_t>(y / scale) * src_w + x / scale];
    return out;
}

void write_pgm(std::span<const float> pixels, uint32_t h, uint32_t w,
               const std::filesystem::path& path) {
    if (pixels.size() != static_cast<size_t>(h) * w)
        throw DataError("pixel count does not match PGM dimensions");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open PGM for writing: " + path.string());
    out << "P2\n" << w << " " << h << "\n255\n";
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            const float v = std::clamp(pixels[static_cast<size_t>(y) * w + x], 0.0f, 1.0f);
            out << static_cast<int>(std::lround(v * 255.0f));
            out << (x + 1 == w ? '\n' : ' ');
        }
    }
}

void write_image_grid(const std::vector<std::array<std::vector<float>, 3>>& rows,
                      uint32_t h, uint32_t w, const std::filesystem::path& path) {
    if (rows.empty()) throw DataError("image grid needs at least one row");
    const uint32_t gw = 3 * w + 2;
    const uint32_t gh = static_cast<uint32_t>(rows.size()) * (h + 1) - 1;
    std::vector<float> grid(static_cast<size_t>(gw) * gh, 1.0f);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int col = 0; col < 3; ++col) {
            const auto& im = rows[r][col];
            if (im.size() != static_cast<size_t>(h) * w)
                throw DataError("grid cell has wrong shape");
            for (uint32_t y = 0; y < h; ++y)
                for (uint32_t x = 0; x < w; ++x)
                    grid[(r * (h + 1) + y) * static_cast<size_t>(gw) +
                         static_cast<uint32_t>(col) * (w + 1) + x] =
                        im[static_cast<size_t>(y) * w + x];
        }
    }
    write_pgm(grid, gh, gw, path);
}

}  // namespace turbidspike::img
