#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "turbidspike/sae_net.hpp"
#include "turbidspike/snn.hpp"

namespace turbidspike::train {

enum class LossMode : uint8_t { membrane_mse = 0, van_rossum = 1 };
enum class Persistence : uint8_t { reset_per_sample = 0, persist_across_samples = 1 };

struct TrainConfig {
    LossMode loss = LossMode::membrane_mse;
    double surrogate_slope = 2.0;
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 10;
    int time_steps = 50;
    double tau_vr_us = 0.0;  // 0 -> 5 time steps
    uint64_t seed = 1;
    Persistence persistence = Persistence::reset_per_sample;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    // van Rossum kernel in grid steps, resolving the 0 -> 5-step default.
    double tau_vr_steps(double dt_us) const;
};

// The spec-named scalar forms (the templated versions live in surrogate.hpp).
double surrogate_sigma(double u, double theta, double k);
double surrogate_grad(double u, double theta, double k);

// van Rossum distance between two spike-train sets on a common T-step grid
// (rows = neurons, columns = steps). Each train is filtered with the causal
// kernel exp(-t/tau); D^2 = (1/tau) * integral of the squared filtered
// difference, summed over neurons, evaluated exactly per grid segment (the
// filtered difference is piecewise exponential, so no quadrature error).
// tau is in grid-step units.
double van_rossum(const snn::MatF& a, const snn::MatF& b, double tau_steps);

// Spike-time-list convenience: times in the same unit as `tau`; trains are
// laid on a `grid_steps` grid spanning [0, horizon).
double van_rossum(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b, double tau,
                  double horizon, int grid_steps);

// Mean of squared per-pixel differences (shared definition with
// metrics::mse_metric).
double membrane_mse(std::span<const float> accumulated, std::span<const float> target);

struct TrainSample {
    events::SpikeTensor input;                 // [2,T,H,W], binary
    std::vector<float> target_image;           // H*W in [0,1] (membrane_mse)
    std::optional<events::SpikeTensor> target_spikes;  // (van_rossum)
};

struct AdamState {
    std::vector<snn::MatF> m_w, v_w;
    std::vector<snn::VecX<float>> m_b, v_b;
    uint64_t step = 0;

    static AdamState init_for(const snn::SaeNetF& net);
};

struct LossHistory {
    std::vector<double> train;
    std::vector<double> val;
};

// Per-epoch hook: (epoch just finished, history so far).
using EpochCallback = std::function<void(int, const LossHistory&)>;

// Surrogate-gradient BPTT over the sample set. Per batch: forward all T
// steps carrying LIF state, compute the loss on the accumulated output,
// backpropagate through every step, Adam-update. Per-sample gradients are
// reduced in sample order, so results do not depend on the worker count.
// Returns per-epoch train/validation losses; `start_epoch` > 0 resumes a
// checkpointed run (the shuffle stream is derived from (seed, epoch), so a
// resumed run replays the uninterrupted history bit-exactly).
LossHistory bptt_train(snn::SaeNetF& net, AdamState& adam,
                       const std::vector<TrainSample>& train_set,
                       const std::vector<TrainSample>& val_set,
                       const TrainConfig& cfg, int start_epoch = 0,
                       const EpochCallback& on_epoch = {}, int jobs = 1);

// Loss of one sample under `cfg.loss`, forward only.
double sample_loss(const snn::SaeNetF& net, const TrainSample& sample,
                   const TrainConfig& cfg);

// Runs the tiny smooth-mode network (input [2,4,4], one conv, latent 4,
// T=3) in double precision and compares backprop against central finite
// differences (step 1e-4) on every parameter. Returns the max relative
// error.
double gradcheck(LossMode loss, double surrogate_slope = 2.0, uint64_t seed = 7);

// Checkpoint codec: magic `NCI1`, u32 version, length-prefixed config JSON,
// named tensor records (u8 rank, u32 dims, little-endian f32 data) for
// parameters and Adam moments, u64 epoch, length-prefixed RNG state blob.
struct Checkpoint {
    snn::SaeConfig sae;
    TrainConfig train;
    std::vector<snn::MatF> weights;
    std::vector<snn::VecX<float>> biases;
    AdamState adam;
    uint64_t epoch = 0;
    uint64_t rng_seed = 0;
    std::string config_digest;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const snn::SaeNetF& net, const AdamState& adam,
                           const TrainConfig& cfg, uint64_t epoch,
                           const std::string& digest);
snn::SaeNetF restore_net(const Checkpoint& ckpt);

void write_loss_csv(const LossHistory& history, const std::filesystem::path& path);

}  // namespace turbidspike::train
