#include "turbidspike/snn.hpp"

#include <fstream>
#include <sstream>

#include "turbidspike/image.hpp"

namespace turbidspike::snn {

void LifConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0))
        throw ConfigError("LIF decay factors must be in [0,1]");
    if (!(theta > 0.0)) throw ConfigError("LIF threshold must be positive");
}

void SaeConfig::validate() const {
    lif.validate();
    if (in_channels <= 0 || in_h <= 0 || in_w <= 0)
        throw ConfigError("SAE input shape must be positive");
    if (encoder.empty()) throw ConfigError("SAE needs at least one encoder stage");
    if (latent_dim <= 0) throw ConfigError("latent dimension must be positive");
    if (!(theta_out > 0.0)) throw ConfigError("output threshold must be positive");
    if (!(surrogate_slope > 0.0)) throw ConfigError("surrogate slope must be positive");
    build_layers(*this);  // throws if the mirror does not close
}

SaeConfig sae_default(int input_size) {
    SaeConfig cfg;
    cfg.in_h = cfg.in_w = input_size;
    if (input_size == 64) {
        cfg.encoder = {{32}, {64}, {128}};
    } else if (input_size == 32) {
        cfg.encoder = {{64}, {128}};
    } else {
        throw ConfigError("sae_default supports input sizes 32 and 64");
    }
    return cfg;
}

int LayerDesc::w_rows() const {
    switch (kind) {
        case Kind::conv:
            return out_c;
        case Kind::dense:
            return out_features();
        case Kind::deconv:
            return in_c;
    }
    return 0;
}

int LayerDesc::w_cols() const {
    switch (kind) {
        case Kind::conv:
            return in_c * kernel * kernel;
        case Kind::dense:
            return in_features();
        case Kind::deconv:
            return out_c * kernel * kernel;
    }
    return 0;
}

std::vector<LayerDesc> build_layers(const SaeConfig& cfg) {
    std::vector<LayerDesc> layers;
    int c = cfg.in_channels, h = cfg.in_h, w = cfg.in_w;
    for (size_t i = 0; i < cfg.encoder.size(); ++i) {
        const ConvSpec& spec = cfg.encoder[i];
        if (spec.out_channels <= 0 || spec.kernel <= 0 || spec.stride <= 0)
            throw ConfigError("invalid encoder conv spec");
        LayerDesc d;
        d.kind = LayerDesc::Kind::conv;
        d.name = "enc" + std::to_string(i);
        d.in_c = c;
        d.in_h = h;
        d.in_w = w;
        d.out_c = spec.out_channels;
        d.kernel = spec.kernel;
        d.stride = spec.stride;
        d.pad = spec.pad;
        d.out_h = (h + 2 * spec.pad - spec.kernel) / spec.stride + 1;
        d.out_w = (w + 2 * spec.pad - spec.kernel) / spec.stride + 1;
        if (d.out_h <= 0 || d.out_w <= 0)
            throw ConfigError("encoder collapses the spatial extent");
        d.theta = cfg.lif.theta;
        layers.push_back(d);
        c = d.out_c;
        h = d.out_h;
        w = d.out_w;
    }
    const int flat = c * h * w;

    LayerDesc to_latent;
    to_latent.kind = LayerDesc::Kind::dense;
    to_latent.name = "latent_in";
    to_latent.in_c = flat;
    to_latent.in_h = to_latent.in_w = 1;
    to_latent.out_c = cfg.latent_dim;
    to_latent.out_h = to_latent.out_w = 1;
    to_latent.theta = cfg.lif.theta;
    layers.push_back(to_latent);

    LayerDesc from_latent;
    from_latent.kind = LayerDesc::Kind::dense;
    from_latent.name = "latent_out";
    from_latent.in_c = cfg.latent_dim;
    from_latent.in_h = from_latent.in_w = 1;
    from_latent.out_c = flat;
    from_latent.out_h = from_latent.out_w = 1;
    from_latent.theta = cfg.lif.theta;
    layers.push_back(from_latent);

    // decoder mirrors the encoder in reverse
    for (size_t i = cfg.encoder.size(); i-- > 0;) {
        const LayerDesc& enc = layers[i];
        LayerDesc d;
        d.kind = LayerDesc::Kind::deconv;
        d.name = "dec" + std::to_string(cfg.encoder.size() - 1 - i);
        d.in_c = enc.out_c;
        d.in_h = enc.out_h;
        d.in_w = enc.out_w;
        d.out_c = enc.in_c;
        d.out_h = enc.in_h;
        d.out_w = enc.in_w;
        d.kernel = enc.kernel;
        d.stride = enc.stride;
        d.pad = enc.pad;
        const int base_h = (d.in_h - 1) * d.stride - 2 * d.pad + d.kernel;
        const int base_w = (d.in_w - 1) * d.stride - 2 * d.pad + d.kernel;
        d.out_pad = d.out_h - base_h;
        if (d.out_pad < 0 || d.out_pad >= d.stride || d.out_w - base_w != d.out_pad)
            throw ConfigError("decoder mirror does not close for layer " + d.name);
        d.theta = (i == 0) ? cfg.theta_out : cfg.lif.theta;
        layers.push_back(d);
    }
    return layers;
}

MatF tensor_to_matrix(const events::SpikeTensor& t) {
    const Eigen::Index feat = static_cast<Eigen::Index>(2) * t.height * t.width;
    MatF m(feat, t.steps);
    for (uint32_t s = 0; s < t.steps; ++s)
        for (uint32_t c = 0; c < 2; ++c)
            for (uint32_t y = 0; y < t.height; ++y)
                for (uint32_t x = 0; x < t.width; ++x)
                    m((static_cast<Eigen::Index>(c) * t.height + y) * t.width + x, s) =
                        static_cast<float>(t.at(c, s, y, x));
    return m;
}

std::vector<float> accumulate_membrane(const MatF& out_membrane, uint32_t h,
                                       uint32_t w) {
    const size_t n = static_cast<size_t>(h) * w;
    if (out_membrane.rows() < static_cast<Eigen::Index>(n))
        throw DataError("membrane trace smaller than the requested image");
    std::vector<float> acc(n, 0.0f);
    for (Eigen::Index t = 0; t < out_membrane.cols(); ++t)
        for (size_t i = 0; i < n; ++i)
            acc[i] += out_membrane(static_cast<Eigen::Index>(i), t);
    return img::minmax_normalize(acc);
}

void export_latent(const MatF& latent_spikes, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open latent CSV for writing: " + path.string());
    for (Eigen::Index n = 0; n < latent_spikes.rows(); ++n)
        out << (n ? "," : "") << "neuron_" << n;
    out << "\n";
    for (Eigen::Index t = 0; t < latent_spikes.cols(); ++t) {
        for (Eigen::Index n = 0; n < latent_spikes.rows(); ++n)
            out << (n ? "," : "") << static_cast<int>(latent_spikes(n, t));
        out << "\n";
    }
}

MatF read_latent_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open latent CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("latent CSV empty");
    Eigen::Index neurons = 1;
    for (char ch : line)
        if (ch == ',') ++neurons;
    std::vector<std::vector<float>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
        if (static_cast<Eigen::Index>(row.size()) != neurons)
            throw DataError("latent CSV row width mismatch");
        rows.push_back(std::move(row));
    }
    MatF m(neurons, static_cast<Eigen::Index>(rows.size()));
    for (size_t t = 0; t < rows.size(); ++t)
        for (Eigen::Index n = 0; n < neurons; ++n)
            m(n, static_cast<Eigen::Index>(t)) = rows[t][n];
    return m;
}

}  // namespace turbidspike::snn
