#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "turbidspike/common.hpp"
#include "turbidspike/events.hpp"

namespace turbidspike::snn {

// Current-based leaky integrate-and-fire update, per step:
//   i' = alpha*i + input
//   u_pre = beta*u + i'
//   spike = u_pre >= theta
//   u' = u_pre - theta*spike   (subtract)  or  u_pre*(1-spike)  (zero)
struct LifConfig {
    double alpha = 0.8;
    double beta = 0.9;
    double theta = 1.0;
    enum class Reset : uint8_t { subtract = 0, zero = 1 } reset = Reset::subtract;

    void validate() const;
};

struct ConvSpec {
    int out_channels = 0;
    int kernel = 3;
    int stride = 2;
    int pad = 1;
};

// Autoencoder shape: spiking convolutions down to the pre-latent block, a
// dense spiking bottleneck, and a mirrored deconvolution decoder whose
// output matches the input shape. The output layer runs at theta_out; a
// very high value turns it into a pure membrane accumulator.
struct SaeConfig {
    int in_channels = 2;
    int in_h = 64;
    int in_w = 64;
    std::vector<ConvSpec> encoder = {{32}, {64}, {128}};
    int latent_dim = 128;
    LifConfig lif;
    double theta_out = 1e6;
    double surrogate_slope = 2.0;

    void validate() const;
};

// 64 -> three encoder stages (2:32:64:128); 32 -> two stages (2:64:128).
// Both meet the decoder at a 128 x 8 x 8 pre-latent block.
SaeConfig sae_default(int input_size);

struct LayerDesc {
    enum class Kind : uint8_t { conv = 0, dense = 1, deconv = 2 };
    Kind kind = Kind::dense;
    std::string name;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    int kernel = 0, stride = 0, pad = 0, out_pad = 0;
    double theta = 1.0;

    int in_features() const { return in_c * in_h * in_w; }
    int out_features() const { return out_c * out_h * out_w; }
    // weight matrix shape
    int w_rows() const;
    int w_cols() const;
};

// Full layer stack (encoder convs, dense bottleneck pair, decoder deconvs)
// with shapes resolved; throws ConfigError if the mirror does not close.
std::vector<LayerDesc> build_layers(const SaeConfig& cfg);

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = MatX<float>;

// Flattens [2,T,H,W] into the network input layout: rows are c*H*W + y*W + x,
// one column per time step.
MatF tensor_to_matrix(const events::SpikeTensor& t);

// Sums the positive-polarity channel of the output membrane trace over all
// steps and min-max normalizes to [0,1].
std::vector<float> accumulate_membrane(const MatF& out_membrane, uint32_t h,
                                       uint32_t w);

// Latent spike table, one row per step, header neuron_0..neuron_{N-1}.
void export_latent(const MatF& latent_spikes, const std::filesystem::path& path);
MatF read_latent_csv(const std::filesystem::path& path);

}  // namespace turbidspike::snn
