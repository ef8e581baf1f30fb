#include "turbidspike/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "turbidspike/image.hpp"
#include "turbidspike/rng.hpp"
#include "turbidspike/surrogate.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace turbidspike::train {

using json = nlohmann::json;
using snn::MatF;
using snn::MatX;
using snn::SaeNetF;
using snn::VecX;

void TrainConfig::validate() const {
    if (!(surrogate_slope > 0.0)) throw ConfigError("surrogate slope must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epoch count must be >= 0");
    if (time_steps < 1) throw ConfigError("time steps must be >= 1");
    if (tau_vr_us < 0.0) throw ConfigError("van Rossum tau must be non-negative");
}

double TrainConfig::tau_vr_steps(double dt_us) const {
    if (tau_vr_us <= 0.0) return 5.0;
    if (!(dt_us > 0.0)) throw ConfigError("cannot convert tau to steps without dt");
    return tau_vr_us / dt_us;
}

double surrogate_sigma(double u, double theta, double k) {
    if (!(k > 0.0)) throw ConfigError("surrogate slope must be positive");
    return snn::surrogate_sigma<double>(u, theta, k);
}

double surrogate_grad(double u, double theta, double k) {
    if (!(k > 0.0)) throw ConfigError("surrogate slope must be positive");
    return snn::surrogate_grad<double>(u, theta, k);
}

namespace {

// Exact van Rossum D^2 on the grid; optionally the gradient wrt `a`.
// The filtered difference is piecewise exponential between grid points, so
// each segment integrates in closed form; `tail` covers the free decay past
// the last step.
template <typename S>
double vr_squared(const MatX<S>& a, const MatX<S>& b, double tau_steps,
                  MatX<S>* grad_a) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DataError("van Rossum trains must share shape");
    if (!(tau_steps > 0.0)) throw ConfigError("van Rossum tau must be positive");
    const Eigen::Index N = a.rows(), T = a.cols();
    if (T == 0) return 0.0;
    const double lambda = std::exp(-1.0 / tau_steps);
    const double q = lambda * lambda;
    const double w_mid = 0.5 * (1.0 - q);
    if (grad_a) grad_a->setZero(N, T);

    double total = 0.0;
    std::vector<double> d(static_cast<size_t>(T));
    for (Eigen::Index n = 0; n < N; ++n) {
        double f = 0.0;
        double acc = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
            f = lambda * f + (static_cast<double>(a(n, t)) - static_cast<double>(b(n, t)));
            d[static_cast<size_t>(t)] = f;
            acc += (t + 1 == T ? 0.5 : w_mid) * f * f;
        }
        total += acc;
        if (grad_a) {
            double g = 0.0;
            for (Eigen::Index t = T - 1; t >= 0; --t) {
                const double w = (t + 1 == T) ? 0.5 : w_mid;
                g = 2.0 * w * d[static_cast<size_t>(t)] + lambda * g;
                (*grad_a)(n, t) = static_cast<S>(g);
            }
        }
    }
    return total;
}

// Membrane objective: MSE between the per-step mean of the positive-channel
// membrane trace and the target image. Linear in the trace, so the gradient
// is uniform across steps.
template <typename S>
double membrane_loss(const MatX<S>& out_membrane, std::span<const float> target,
                     MatX<S>* grad) {
    const Eigen::Index hw = static_cast<Eigen::Index>(target.size());
    const Eigen::Index T = out_membrane.cols();
    if (out_membrane.rows() < hw)
        throw DataError("membrane trace smaller than the target image");
    if (grad) grad->setZero(out_membrane.rows(), T);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < hw; ++i) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) acc += out_membrane(i, t);
        const double diff = acc / T - target[static_cast<size_t>(i)];
        loss += diff * diff;
        if (grad) {
            const S g = static_cast<S>(2.0 * diff / (static_cast<double>(hw) * T));
            for (Eigen::Index t = 0; t < T; ++t) (*grad)(i, t) = g;
        }
    }
    return loss / static_cast<double>(hw);
}

template <typename S>
double vr_loss(const MatX<S>& out_spikes, const MatX<S>& target, double tau_steps,
               MatX<S>* grad) {
    const double n = static_cast<double>(out_spikes.rows());
    double loss = vr_squared<S>(out_spikes, target, tau_steps, grad) / n;
    if (grad) *grad *= static_cast<S>(1.0 / n);
    return loss;
}

}  // namespace

double van_rossum(const MatF& a, const MatF& b, double tau_steps) {
    return std::sqrt(vr_squared<float>(a, b, tau_steps, nullptr));
}

double van_rossum(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b, double tau,
                  double horizon, int grid_steps) {
    if (a.size() != b.size()) throw DataError("van Rossum trains must share neurons");
    if (!(horizon > 0.0) || grid_steps < 1)
        throw ConfigError("van Rossum grid requires positive horizon and steps");
    MatF ma = MatF::Zero(static_cast<Eigen::Index>(a.size()), grid_steps);
    MatF mb = MatF::Zero(static_cast<Eigen::Index>(b.size()), grid_steps);
    auto deposit = [&](const std::vector<std::vector<double>>& trains, MatF& m) {
        for (size_t n = 0; n < trains.size(); ++n)
            for (double t : trains[n]) {
                auto step = static_cast<Eigen::Index>(t / horizon * grid_steps);
                step = std::clamp<Eigen::Index>(step, 0, grid_steps - 1);
                m(static_cast<Eigen::Index>(n), step) += 1.0f;
            }
    };
    deposit(a, ma);
    deposit(b, mb);
    return van_rossum(ma, mb, tau * grid_steps / horizon);
}

double membrane_mse(std::span<const float> accumulated, std::span<const float> target) {
    return img::mean_squared_error(accumulated, target);
}

AdamState AdamState::init_for(const SaeNetF& net) {
    AdamState s;
    const size_t L = net.layer_count();
    s.m_w.resize(L);
    s.v_w.resize(L);
    s.m_b.resize(L);
    s.v_b.resize(L);
    for (size_t l = 0; l < L; ++l) {
        s.m_w[l] = MatF::Zero(net.weight(l).rows(), net.weight(l).cols());
        s.v_w[l] = MatF::Zero(net.weight(l).rows(), net.weight(l).cols());
        s.m_b[l] = VecX<float>::Zero(net.bias(l).size());
        s.v_b[l] = VecX<float>::Zero(net.bias(l).size());
    }
    return s;
}

namespace {

void adam_update(SaeNetF& net, AdamState& adam, const SaeNetF::Grads& grads,
                 const TrainConfig& cfg) {
    ++adam.step;
    const float b1 = static_cast<float>(cfg.adam_beta1);
    const float b2 = static_cast<float>(cfg.adam_beta2);
    const float eps = static_cast<float>(cfg.adam_eps);
    const float lr = static_cast<float>(cfg.learning_rate);
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(adam.step));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(adam.step));
    for (size_t l = 0; l < net.layer_count(); ++l) {
        adam.m_w[l] = b1 * adam.m_w[l] + (1.0f - b1) * grads.w[l];
        adam.v_w[l] =
            b2 * adam.v_w[l] + (1.0f - b2) * grads.w[l].cwiseProduct(grads.w[l]);
        net.weight(l).array() -= lr * (adam.m_w[l].array() / bc1) /
                                 ((adam.v_w[l].array() / bc2).sqrt() + eps);
        adam.m_b[l] = b1 * adam.m_b[l] + (1.0f - b1) * grads.b[l];
        adam.v_b[l] =
            b2 * adam.v_b[l] + (1.0f - b2) * grads.b[l].cwiseProduct(grads.b[l]);
        net.bias(l).array() -= lr * (adam.m_b[l].array() / bc1) /
                               ((adam.v_b[l].array() / bc2).sqrt() + eps);
    }
}

struct LossGrads {
    double loss = 0.0;
    MatF g_spikes;    // empty unless van_rossum
    MatF g_membrane;  // empty unless membrane_mse
};

LossGrads compute_loss(const SaeNetF::Output& out, const TrainSample& sample,
                       const TrainConfig& cfg, bool want_grads) {
    LossGrads lg;
    if (cfg.loss == LossMode::membrane_mse) {
        if (sample.target_image.empty())
            throw DataError("membrane_mse training needs image targets");
        lg.loss = membrane_loss<float>(out.out_membrane, sample.target_image,
                                       want_grads ? &lg.g_membrane : nullptr);
    } else {
        if (!sample.target_spikes)
            throw DataError("van_rossum training needs spike-train targets");
        const MatF target = snn::tensor_to_matrix(*sample.target_spikes);
        if (target.rows() != out.out_spikes.rows() ||
            target.cols() != out.out_spikes.cols())
            throw DataError("target spike tensor shape mismatch");
        const double tau = cfg.tau_vr_steps(sample.input.dt_us());
        lg.loss = vr_loss<float>(out.out_spikes, target, tau,
                                 want_grads ? &lg.g_spikes : nullptr);
    }
    if (!std::isfinite(lg.loss))
        throw NumericError("non-finite training loss; diverging run");
    return lg;
}

void check_sample(const TrainSample& s, const SaeNetF& net, const TrainConfig& cfg) {
    const auto& c = net.config();
    if (static_cast<int>(s.input.steps) != cfg.time_steps)
        throw DataError("sample time steps disagree with the training config");
    if (static_cast<int>(s.input.height) != c.in_h ||
        static_cast<int>(s.input.width) != c.in_w)
        throw DataError("sample spatial shape disagrees with the network input");
}

}  // namespace

double sample_loss(const SaeNetF& net, const TrainSample& sample,
                   const TrainConfig& cfg) {
    auto state = net.make_state();
    const MatF input = snn::tensor_to_matrix(sample.input);
    const auto out = net.forward(input, state, nullptr);
    return compute_loss(out, sample, cfg, false).loss;
}

LossHistory bptt_train(SaeNetF& net, AdamState& adam,
                       const std::vector<TrainSample>& train_set,
                       const std::vector<TrainSample>& val_set,
                       const TrainConfig& cfg, int start_epoch,
                       const EpochCallback& on_epoch, int jobs) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    for (const auto& s : train_set) check_sample(s, net, cfg);
    for (const auto& s : val_set) check_sample(s, net, cfg);

    const size_t n = train_set.size();
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(n));
    const bool persist = cfg.persistence == Persistence::persist_across_samples;
    const uint64_t shuffle_key = seed_hash(cfg.seed, "shuffle");

    LossHistory history;
    std::vector<SaeNetF::Grads> grad_pool(batch);
    std::vector<double> loss_pool(batch);
    for (auto& g : grad_pool) g = net.make_grads();
    auto persistent_state = net.make_state();

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<uint32_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);
        CounterRng shuffle_rng(shuffle_key, static_cast<uint64_t>(epoch));
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        for (size_t begin = 0; begin < n; begin += batch) {
            const int bs = static_cast<int>(std::min<size_t>(batch, n - begin));

            auto run_sample = [&](int s) {
                const TrainSample& sample = train_set[order[begin + s]];
                const MatF input = snn::tensor_to_matrix(sample.input);
                auto state = persist ? persistent_state : net.make_state();
                SaeNetF::Trace trace;
                const auto out = net.forward(input, state, &trace);
                if (persist) persistent_state = state;  // carried as constants
                LossGrads lg = compute_loss(out, sample, cfg, true);
                loss_pool[s] = lg.loss;
                for (auto& m : grad_pool[s].w) m.setZero();
                for (auto& v : grad_pool[s].b) v.setZero();
                net.backward(trace, lg.g_spikes, lg.g_membrane, grad_pool[s]);
            };

            if (persist || jobs == 1 || bs == 1) {
                for (int s = 0; s < bs; ++s) run_sample(s);
            } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs > 0 ? jobs : omp_get_max_threads())
#endif
                for (int s = 0; s < bs; ++s) run_sample(s);
            }

            // fixed-order reduction: independent of worker count
            SaeNetF::Grads& total = grad_pool[0];
            for (int s = 1; s < bs; ++s) total.add(grad_pool[s]);
            total.scale(1.0f / static_cast<float>(bs));
            adam_update(net, adam, total, cfg);
            for (int s = 0; s < bs; ++s) loss_sum += loss_pool[s];
        }
        history.train.push_back(loss_sum / static_cast<double>(n));

        double val_sum = 0.0;
        for (const auto& s : val_set) val_sum += sample_loss(net, s, cfg);
        history.val.push_back(val_set.empty() ? 0.0
                                              : val_sum / static_cast<double>(val_set.size()));

        if (on_epoch) on_epoch(epoch, history);
    }
    return history;
}

double gradcheck(LossMode loss, double surrogate_slope, uint64_t seed) {
    snn::SaeConfig cfg;
    cfg.in_channels = 2;
    cfg.in_h = cfg.in_w = 4;
    cfg.encoder = {{4, 3, 2, 1}};
    cfg.latent_dim = 4;
    cfg.surrogate_slope = surrogate_slope;
    cfg.theta_out = loss == LossMode::membrane_mse ? 25.0 : 1.0;
    const int T = 3;

    snn::SaeNet<double> net(cfg);
    net.init_params(seed);
    net.set_smooth_mode(true);

    CounterRng rng(seed_hash(seed, "gradcheck"), 0);
    MatX<double> input(2 * 4 * 4, T);
    for (Eigen::Index i = 0; i < input.size(); ++i)
        input.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    std::vector<float> target_image(16);
    for (auto& v : target_image) v = static_cast<float>(rng.uniform());
    MatX<double> target_spikes(2 * 4 * 4, T);
    for (Eigen::Index i = 0; i < target_spikes.size(); ++i)
        target_spikes.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double tau = 5.0;

    auto loss_of = [&]() {
        auto state = net.make_state();
        auto out = net.forward(input, state, nullptr);
        if (loss == LossMode::membrane_mse)
            return membrane_loss<double>(out.out_membrane, target_image, nullptr);
        return vr_loss<double>(out.out_spikes, target_spikes, tau, nullptr);
    };

    // analytic gradients
    auto state = net.make_state();
    snn::SaeNet<double>::Trace trace;
    auto out = net.forward(input, state, &trace);
    MatX<double> g_spikes, g_membrane;
    if (loss == LossMode::membrane_mse)
        membrane_loss<double>(out.out_membrane, target_image, &g_membrane);
    else
        vr_loss<double>(out.out_spikes, target_spikes, tau, &g_spikes);
    auto grads = net.make_grads();
    net.backward(trace, g_spikes, g_membrane, grads);

    const double h = 1e-4;
    double max_rel = 0.0;
    auto probe = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = loss_of();
        param = keep - h;
        const double down = loss_of();
        param = keep;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - analytic) / denom);
    };
    for (size_t l = 0; l < net.layer_count(); ++l) {
        auto& w = net.weight(l);
        for (Eigen::Index i = 0; i < w.size(); ++i)
            probe(w.data()[i], grads.w[l].data()[i]);
        auto& b = net.bias(l);
        for (Eigen::Index i = 0; i < b.size(); ++i)
            probe(b.data()[i], grads.b[l].data()[i]);
    }
    return max_rel;
}

// --- checkpoint codec -------------------------------------------------------

namespace {

json sae_to_json(const snn::SaeConfig& c) {
    json enc = json::array();
    for (const auto& e : c.encoder)
        enc.push_back({e.out_channels, e.kernel, e.stride, e.pad});
    return json{{"in_channels", c.in_channels},
                {"in_h", c.in_h},
                {"in_w", c.in_w},
                {"encoder", enc},
                {"latent_dim", c.latent_dim},
                {"lif",
                 {{"alpha", c.lif.alpha},
                  {"beta", c.lif.beta},
                  {"theta", c.lif.theta},
                  {"reset", c.lif.reset == snn::LifConfig::Reset::subtract
                                ? "subtract"
                                : "zero"}}},
                {"theta_out", c.theta_out},
                {"surrogate_slope", c.surrogate_slope}};
}

snn::SaeConfig sae_from_json(const json& j) {
    snn::SaeConfig c;
    c.in_channels = j.at("in_channels");
    c.in_h = j.at("in_h");
    c.in_w = j.at("in_w");
    c.encoder.clear();
    for (const auto& e : j.at("encoder"))
        c.encoder.push_back({e.at(0), e.at(1), e.at(2), e.at(3)});
    c.latent_dim = j.at("latent_dim");
    const auto& lif = j.at("lif");
    c.lif.alpha = lif.at("alpha");
    c.lif.beta = lif.at("beta");
    c.lif.theta = lif.at("theta");
    c.lif.reset = lif.at("reset") == "zero" ? snn::LifConfig::Reset::zero
                                            : snn::LifConfig::Reset::subtract;
    c.theta_out = j.at("theta_out");
    c.surrogate_slope = j.at("surrogate_slope");
    return c;
}

json train_to_json(const TrainConfig& c) {
    return json{{"loss", c.loss == LossMode::membrane_mse ? "membrane_mse" : "van_rossum"},
                {"surrogate_slope", c.surrogate_slope},
                {"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"time_steps", c.time_steps},
                {"tau_vr_us", c.tau_vr_us},
                {"seed", c.seed},
                {"persistence", c.persistence == Persistence::reset_per_sample
                                    ? "reset_per_sample"
                                    : "persist_across_samples"},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.loss = j.at("loss") == "van_rossum" ? LossMode::van_rossum : LossMode::membrane_mse;
    c.surrogate_slope = j.at("surrogate_slope");
    c.learning_rate = j.at("learning_rate");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.time_steps = j.at("time_steps");
    c.tau_vr_us = j.at("tau_vr_us");
    c.seed = j.at("seed");
    c.persistence = j.at("persistence") == "persist_across_samples"
                        ? Persistence::persist_across_samples
                        : Persistence::reset_per_sample;
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.adam_eps = j.at("adam_eps");
    return c;
}

template <typename T>
void put_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>(static_cast<uint64_t>(v) >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw DataError("checkpoint truncated");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

void put_f32(std::ostream& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le<uint32_t>(out, bits);
}

float get_f32(std::istream& in) {
    const uint32_t bits = get_le<uint32_t>(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void put_string(std::ostream& out, const std::string& s) {
    put_le<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const uint64_t n = get_le<uint64_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw DataError("checkpoint truncated");
    return s;
}

void put_tensor(std::ostream& out, const std::string& name, const float* data,
                std::initializer_list<uint32_t> dims) {
    put_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<uint8_t>(out, static_cast<uint8_t>(dims.size()));
    size_t n = 1;
    for (uint32_t d : dims) {
        put_le<uint32_t>(out, d);
        n *= d;
    }
    for (size_t i = 0; i < n; ++i) put_f32(out, data[i]);
}

struct TensorRecord {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

TensorRecord get_tensor(std::istream& in) {
    TensorRecord r;
    const uint16_t name_len = get_le<uint16_t>(in);
    r.name.resize(name_len);
    in.read(r.name.data(), name_len);
    const uint8_t rank = get_le<uint8_t>(in);
    size_t n = 1;
    for (uint8_t d = 0; d < rank; ++d) {
        r.dims.push_back(get_le<uint32_t>(in));
        n *= r.dims.back();
    }
    r.data.resize(n);
    for (size_t i = 0; i < n; ++i) r.data[i] = get_f32(in);
    return r;
}

void load_mat(const TensorRecord& r, MatF& m) {
    if (r.dims.size() != 2 || static_cast<Eigen::Index>(r.dims[0]) != m.rows() ||
        static_cast<Eigen::Index>(r.dims[1]) != m.cols())
        throw DataError("checkpoint tensor '" + r.name + "' shape mismatch");
    std::copy(r.data.begin(), r.data.end(), m.data());
}

void load_vec(const TensorRecord& r, VecX<float>& v) {
    if (r.dims.size() != 1 || static_cast<Eigen::Index>(r.dims[0]) != v.size())
        throw DataError("checkpoint tensor '" + r.name + "' shape mismatch");
    std::copy(r.data.begin(), r.data.end(), v.data());
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
    out.write("NCI1", 4);
    put_le<uint32_t>(out, kCheckpointVersion);
    json cfg{{"sae", sae_to_json(ckpt.sae)},
             {"train", train_to_json(ckpt.train)},
             {"config_digest", ckpt.config_digest}};
    put_string(out, cfg.dump());

    const auto layers = snn::build_layers(ckpt.sae);
    put_le<uint32_t>(out, static_cast<uint32_t>(layers.size()));
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& name = layers[l].name;
        put_tensor(out, "w." + name, ckpt.weights[l].data(),
                   {static_cast<uint32_t>(ckpt.weights[l].rows()),
                    static_cast<uint32_t>(ckpt.weights[l].cols())});
        put_tensor(out, "b." + name, ckpt.biases[l].data(),
                   {static_cast<uint32_t>(ckpt.biases[l].size())});
        put_tensor(out, "adam.mw." + name, ckpt.adam.m_w[l].data(),
                   {static_cast<uint32_t>(ckpt.adam.m_w[l].rows()),
                    static_cast<uint32_t>(ckpt.adam.m_w[l].cols())});
        put_tensor(out, "adam.vw." + name, ckpt.adam.v_w[l].data(),
                   {static_cast<uint32_t>(ckpt.adam.v_w[l].rows()),
                    static_cast<uint32_t>(ckpt.adam.v_w[l].cols())});
        put_tensor(out, "adam.mb." + name, ckpt.adam.m_b[l].data(),
                   {static_cast<uint32_t>(ckpt.adam.m_b[l].size())});
        put_tensor(out, "adam.vb." + name, ckpt.adam.v_b[l].data(),
                   {static_cast<uint32_t>(ckpt.adam.v_b[l].size())});
    }
    put_le<uint64_t>(out, ckpt.adam.step);
    put_le<uint64_t>(out, ckpt.epoch);
    // RNG state: the whole training stream is derived from (seed, epoch)
    put_string(out, std::to_string(ckpt.rng_seed));
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "NCI1", 4) != 0)
        throw DataError("bad checkpoint magic");
    const uint32_t version = get_le<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    json cfg = json::parse(get_string(in));

    Checkpoint ckpt;
    ckpt.sae = sae_from_json(cfg.at("sae"));
    ckpt.train = train_from_json(cfg.at("train"));
    ckpt.config_digest = cfg.at("config_digest");

    const auto layers = snn::build_layers(ckpt.sae);
    const uint32_t n_layers = get_le<uint32_t>(in);
    if (n_layers != layers.size()) throw DataError("checkpoint layer count mismatch");

    SaeNetF net(ckpt.sae);
    ckpt.weights.resize(layers.size());
    ckpt.biases.resize(layers.size());
    ckpt.adam = AdamState::init_for(net);
    for (size_t l = 0; l < layers.size(); ++l) {
        ckpt.weights[l] = net.weight(l);
        ckpt.biases[l] = net.bias(l);
        load_mat(get_tensor(in), ckpt.weights[l]);
        load_vec(get_tensor(in), ckpt.biases[l]);
        load_mat(get_tensor(in), ckpt.adam.m_w[l]);
        load_mat(get_tensor(in), ckpt.adam.v_w[l]);
        load_vec(get_tensor(in), ckpt.adam.m_b[l]);
        load_vec(get_tensor(in), ckpt.adam.v_b[l]);
    }
    ckpt.adam.step = get_le<uint64_t>(in);
    ckpt.epoch = get_le<uint64_t>(in);
    ckpt.rng_seed = std::stoull(get_string(in));
    return ckpt;
}

Checkpoint make_checkpoint(const SaeNetF& net, const AdamState& adam,
                           const TrainConfig& cfg, uint64_t epoch,
                           const std::string& digest) {
    Checkpoint ckpt;
    ckpt.sae = net.config();
    ckpt.train = cfg;
    for (size_t l = 0; l < net.layer_count(); ++l) {
        ckpt.weights.push_back(net.weight(l));
        ckpt.biases.push_back(net.bias(l));
    }
    ckpt.adam = adam;
    ckpt.epoch = epoch;
    ckpt.rng_seed = cfg.seed;
    ckpt.config_digest = digest;
    return ckpt;
}

SaeNetF restore_net(const Checkpoint& ckpt) {
    SaeNetF net(ckpt.sae);
    for (size_t l = 0; l < net.layer_count(); ++l) {
        net.weight(l) = ckpt.weights[l];
        net.bias(l) = ckpt.biases[l];
    }
    return net;
}

void write_loss_csv(const LossHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open loss CSV for writing: " + path.string());
    out << "epoch,train_loss,val_loss\n";
    out.precision(12);
    for (size_t e = 0; e < history.train.size(); ++e)
        out << e << "," << history.train[e] << "," << history.val[e] << "\n";
}

}  // namespace turbidspike::train
