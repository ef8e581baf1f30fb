#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_helpers.hpp"
#include "turbidspike/training.hpp"

using namespace turbidspike;
using namespace turbidspike::train;
using snn::MatF;

namespace {

// fine-grid Riemann oracle for the van Rossum distance: filter both trains
// with exp(-t/tau) on a grid `sub` times finer, integrate numerically, and
// add the analytic tail after the last sample
double vr_bruteforce(const MatF& a, const MatF& b, double tau, int sub = 400) {
    const double dt = 1.0 / sub;
    double total = 0.0;
    for (Eigen::Index n = 0; n < a.rows(); ++n) {
        double fa = 0.0, fb = 0.0, acc = 0.0;
        for (Eigen::Index t = 0; t < a.cols(); ++t) {
            fa += a(n, t);
            fb += b(n, t);
            for (int s = 0; s < sub; ++s) {
                // midpoint rule inside each sub-interval
                const double decay = std::exp(-(s + 0.5) * dt / tau);
                const double d = (fa - fb) * decay;
                acc += d * d * dt;
                if (s + 1 == sub) {
                    fa *= std::exp(-1.0 / tau);
                    fb *= std::exp(-1.0 / tau);
                }
            }
        }
        const double d_end = fa - fb;
        acc += d_end * d_end * tau / 2.0;  // analytic free-decay tail
        total += acc / tau;
    }
    return std::sqrt(total);
}

MatF random_trains(uint64_t seed, Eigen::Index neurons, Eigen::Index steps,
                   double p = 0.2) {
    CounterRng rng(seed, 0);
    MatF m(neurons, steps);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform() < p ? 1.0f : 0.0f;
    return m;
}

TrainSample toy_sample(const snn::SaeConfig& cfg, int T, uint64_t seed) {
    TrainSample s;
    s.input.mode = events::SpikeTensor::Mode::binary;
    s.input.steps = T;
    s.input.height = cfg.in_h;
    s.input.width = cfg.in_w;
    s.input.duration_us = 1000;
    s.input.data.assign(static_cast<size_t>(2) * T * cfg.in_h * cfg.in_w, 0);
    CounterRng rng(seed, 1);
    for (auto& v : s.input.data) v = rng.uniform() < 0.25 ? 1 : 0;
    s.target_image.assign(static_cast<size_t>(cfg.in_h) * cfg.in_w, 0.0f);
    for (size_t i = 0; i < s.target_image.size(); ++i)
        s.target_image[i] = (i % 3 == 0) ? 0.8f : 0.1f;
    s.target_spikes = s.input;
    for (auto& v : s.target_spikes->data) v = rng.uniform() < 0.15 ? 1 : 0;
    return s;
}

snn::SaeConfig tiny_config() {
    snn::SaeConfig cfg;
    cfg.in_channels = 2;
    cfg.in_h = cfg.in_w = 8;
    cfg.encoder = {{8, 3, 2, 1}, {16, 3, 2, 1}};  // 8 -> 4 -> 2
    cfg.latent_dim = 8;
    return cfg;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("surrogate: peak, symmetry, limits, unit mass") {
    const double k = 2.0, theta = 1.0;
    CHECK(surrogate_grad(theta, theta, k) == doctest::Approx(k));
    for (double d : {0.1, 0.7, 3.0})
        CHECK(surrogate_grad(theta + d, theta, k) ==
              doctest::Approx(surrogate_grad(theta - d, theta, k)));
    CHECK(surrogate_sigma(theta + 1e5, theta, k) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(surrogate_sigma(theta - 1e5, theta, k) == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(surrogate_grad(theta + 100.0, theta, k) > 0.0);  // no dead plateaus

    // trapezoid quadrature of the pseudo-derivative integrates to ~1
    double mass = 0.0;
    const double h = 1e-3;
    for (double u = -60.0; u < 60.0; u += h)
        mass += 0.5 * h * (surrogate_grad(u, 0.0, k) + surrogate_grad(u + h, 0.0, k));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("van Rossum: identical trains give zero") {
    auto a = random_trains(4, 5, 20);
    CHECK(van_rossum(a, a, 5.0) == doctest::Approx(0.0));
}

TEST_CASE("van Rossum: single spike vs empty equals 1/sqrt(2)") {
    MatF a = MatF::Zero(1, 64), b = MatF::Zero(1, 64);
    a(0, 10) = 1.0f;
    CHECK(van_rossum(a, b, 6.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(vr_bruteforce(a, b, 6.0) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-4));
}

TEST_CASE("van Rossum: offset pair follows sqrt(1 - exp(-dt/tau))") {
    const double tau = 8.0;
    for (int delta : {1, 3, 7, 15}) {
        MatF a = MatF::Zero(1, 80), b = MatF::Zero(1, 80);
        a(0, 5) = 1.0f;
        b(0, 5 + delta) = 1.0f;
        const double want = std::sqrt(1.0 - std::exp(-delta / tau));
        CHECK(van_rossum(a, b, tau) == doctest::Approx(want).epsilon(1e-9));
        CHECK(vr_bruteforce(a, b, tau) == doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("van Rossum: implementation matches the fine-grid oracle on random trains") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto a = random_trains(seed * 2, 3, 24);
        auto b = random_trains(seed * 2 + 1, 3, 24);
        const double tau = 4.0;
        CHECK(van_rossum(a, b, tau) ==
              doctest::Approx(vr_bruteforce(a, b, tau)).epsilon(2e-3));
    }
}

TEST_CASE("van Rossum: metric axioms on random train pairs") {
    const double tau = 5.0;
    for (uint64_t seed = 0; seed < 60; ++seed) {
        auto a = random_trains(seed * 3, 2, 16);
        auto b = random_trains(seed * 3 + 1, 2, 16);
        auto c = random_trains(seed * 3 + 2, 2, 16);
        const double ab = van_rossum(a, b, tau);
        const double ba = van_rossum(b, a, tau);
        CHECK(ab == doctest::Approx(ba));
        CHECK(ab >= 0.0);
        if (a == b)
            CHECK(ab == doctest::Approx(0.0));
        else
            CHECK(ab > 0.0);
        CHECK(van_rossum(a, c, tau) <= ab + van_rossum(b, c, tau) + 1e-9);
    }
}

TEST_CASE("van Rossum: spike-time-list interface") {
    std::vector<std::vector<double>> a{{100.0}}, b{{}};
    CHECK(van_rossum(a, b, 50.0, 1000.0, 500) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("membrane_mse closed forms") {
    std::vector<float> z{0.0f, 0.0f}, o{1.0f, 1.0f}, h{0.0f, 0.5f}, t{0.0f, 1.0f};
    CHECK(membrane_mse(z, z) == doctest::Approx(0.0));
    CHECK(membrane_mse(z, o) == doctest::Approx(1.0));
    CHECK(membrane_mse(h, t) == doctest::Approx(0.125));
    CHECK_THROWS_AS(membrane_mse(z, std::vector<float>{1.0f}), DataError);
}

TEST_CASE("gradcheck: smooth-mode backprop matches finite differences") {
    CHECK(gradcheck(LossMode::membrane_mse) < 1e-4);
    CHECK(gradcheck(LossMode::van_rossum) < 1e-4);
}

TEST_CASE("gradcheck: finite and continuous across the surrogate slope sweep") {
    // the tight 1e-4 bound holds at the default slope; steeper slopes only
    // inflate the finite-difference truncation term, so the sweep asserts
    // finiteness and a loose envelope
    double prev = -1.0;
    for (double k : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        const double err = gradcheck(LossMode::membrane_mse, k);
        CHECK(std::isfinite(err));
        CHECK(err < 0.05);
        prev = err;
    }
    CHECK(prev >= 0.0);
}

TEST_CASE("zero input with zero params leaves all weight gradients zero") {
    auto cfg = tiny_config();
    snn::SaeNetF net(cfg);  // zero-initialized weights and biases
    const int T = 3;
    MatF input = MatF::Zero(2 * 8 * 8, T);
    auto state = net.make_state();
    snn::SaeNetF::Trace trace;
    auto out = net.forward(input, state, &trace);
    MatF g_mem = MatF::Ones(out.out_membrane.rows(), T);  // any loss pull
    auto grads = net.make_grads();
    net.backward(trace, MatF(), g_mem, grads);
    for (size_t l = 0; l < net.layer_count(); ++l)
        CHECK(grads.w[l].cwiseAbs().maxCoeff() == 0.0f);
    // bias gradient of the output layer is alive
    CHECK(grads.b.back().cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
    auto cfg = tiny_config();
    snn::SaeNetF net(cfg);
    net.init_params(3);
    const MatF before = net.weight(1);
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 2;
    tc.time_steps = 4;
    tc.batch_size = 2;
    std::vector<TrainSample> set{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2)};
    auto adam = AdamState::init_for(net);
    bptt_train(net, adam, set, {}, tc);
    CHECK(net.weight(1) == before);
}

TEST_CASE("fixed seed reproduces the loss history bit-exactly") {
    auto cfg = tiny_config();
    TrainConfig tc;
    tc.epochs = 3;
    tc.time_steps = 4;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    std::vector<TrainSample> set{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2),
                                 toy_sample(cfg, 4, 3)};
    auto run = [&]() {
        snn::SaeNetF net(cfg);
        net.init_params(tc.seed);
        auto adam = AdamState::init_for(net);
        return bptt_train(net, adam, set, {set[0]}, tc, 0, {}, 2);
    };
    auto h1 = run();
    auto h2 = run();
    CHECK(h1.train == h2.train);
    CHECK(h1.val == h2.val);
}

TEST_CASE("worker count does not change the training result") {
    auto cfg = tiny_config();
    TrainConfig tc;
    tc.epochs = 2;
    tc.time_steps = 4;
    tc.batch_size = 4;
    std::vector<TrainSample> set{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2),
                                 toy_sample(cfg, 4, 3), toy_sample(cfg, 4, 4)};
    auto run = [&](int jobs) {
        snn::SaeNetF net(cfg);
        net.init_params(tc.seed);
        auto adam = AdamState::init_for(net);
        return bptt_train(net, adam, set, {}, tc, 0, {}, jobs);
    };
    CHECK(run(1).train == run(2).train);
}

TEST_CASE("resume from a checkpoint replays the uninterrupted history") {
    auto cfg = tiny_config();
    TrainConfig tc;
    tc.epochs = 4;
    tc.time_steps = 4;
    tc.batch_size = 2;
    std::vector<TrainSample> set{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2),
                                 toy_sample(cfg, 4, 3)};

    snn::SaeNetF full(cfg);
    full.init_params(tc.seed);
    auto adam_full = AdamState::init_for(full);
    auto h_full = bptt_train(full, adam_full, set, {}, tc);

    snn::SaeNetF part(cfg);
    part.init_params(tc.seed);
    auto adam_part = AdamState::init_for(part);
    TrainConfig tc_half = tc;
    tc_half.epochs = 2;
    auto h1 = bptt_train(part, adam_part, set, {}, tc_half);

    auto dir = testutil::tmp_dir("resume");
    save_checkpoint(dir / "ck.nci", make_checkpoint(part, adam_part, tc, 2, "d"));
    auto ckpt = load_checkpoint(dir / "ck.nci");
    auto resumed = restore_net(ckpt);
    auto adam_res = ckpt.adam;
    auto h2 = bptt_train(resumed, adam_res, set, {}, tc, 2);

    REQUIRE(h_full.train.size() == 4);
    REQUIRE(h1.train.size() == 2);
    REQUIRE(h2.train.size() == 2);
    CHECK(h_full.train[0] == h1.train[0]);
    CHECK(h_full.train[1] == h1.train[1]);
    CHECK(h_full.train[2] == h2.train[0]);
    CHECK(h_full.train[3] == h2.train[1]);
    CHECK(full.weight(0) == resumed.weight(0));
}

TEST_CASE("checkpoint: identity round trip and corruption errors") {
    auto cfg = tiny_config();
    snn::SaeNetF net(cfg);
    net.init_params(8);
    auto adam = AdamState::init_for(net);
    adam.step = 17;
    TrainConfig tc;
    tc.time_steps = 4;
    auto dir = testutil::tmp_dir("ckpt");
    save_checkpoint(dir / "a.nci", make_checkpoint(net, adam, tc, 3, "digest123"));
    auto back = load_checkpoint(dir / "a.nci");
    CHECK(back.epoch == 3);
    CHECK(back.adam.step == 17);
    CHECK(back.config_digest == "digest123");
    auto restored = restore_net(back);
    for (size_t l = 0; l < net.layer_count(); ++l) {
        CHECK(restored.weight(l) == net.weight(l));
        CHECK(restored.bias(l) == net.bias(l));
    }

    std::ofstream bad(dir / "bad.nci", std::ios::binary);
    bad << "XXXX____garbage";
    bad.close();
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.nci"), DataError);
}

TEST_CASE("reset-per-sample: isolated sample loss ignores training order") {
    auto cfg = tiny_config();
    TrainConfig tc;
    tc.epochs = 1;
    tc.time_steps = 4;
    tc.batch_size = 1;
    std::vector<TrainSample> fwd{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2)};
    std::vector<TrainSample> rev{fwd[1], fwd[0]};
    // identical nets trained on permuted epochs end with different params,
    // but a given net evaluates a sample identically regardless of order
    snn::SaeNetF net(cfg);
    net.init_params(4);
    const double a = sample_loss(net, fwd[0], tc);
    sample_loss(net, fwd[1], tc);
    const double b = sample_loss(net, fwd[0], tc);
    CHECK(a == b);
}

TEST_CASE("persist-across-samples mode trains and stays finite") {
    auto cfg = tiny_config();
    TrainConfig tc;
    tc.epochs = 2;
    tc.time_steps = 4;
    tc.batch_size = 2;
    tc.persistence = Persistence::persist_across_samples;
    std::vector<TrainSample> set{toy_sample(cfg, 4, 1), toy_sample(cfg, 4, 2)};
    snn::SaeNetF net(cfg);
    net.init_params(5);
    auto adam = AdamState::init_for(net);
    auto h = bptt_train(net, adam, set, {}, tc);
    for (double v : h.train) CHECK(std::isfinite(v));
}

TEST_CASE("single-sample overfit reaches a tenth of the initial loss") {
    auto cfg = tiny_config();
    const int T = 6;
    for (LossMode mode : {LossMode::membrane_mse, LossMode::van_rossum}) {
        TrainConfig tc;
        tc.loss = mode;
        tc.epochs = 200;  // one sample per epoch = 200 update steps
        tc.time_steps = T;
        tc.batch_size = 1;
        tc.learning_rate = mode == LossMode::membrane_mse ? 2e-3 : 5e-3;
        snn::SaeConfig c2 = cfg;
        c2.theta_out = mode == LossMode::membrane_mse ? 1e6 : 1.0;
        std::vector<TrainSample> set{toy_sample(c2, T, 11)};
        // denoising-autoencoder smoke: reproduce the input spikes
        set[0].target_spikes = set[0].input;
        snn::SaeNetF net(c2);
        net.init_params(tc.seed);
        auto adam = AdamState::init_for(net);
        const double initial = sample_loss(net, set[0], tc);
        auto h = bptt_train(net, adam, set, {}, tc);
        CHECK(h.train.back() < 0.1 * initial);
    }
}

TEST_CASE("loss csv writes one row per epoch") {
    auto dir = testutil::tmp_dir("losscsv");
    LossHistory h;
    h.train = {0.5, 0.25};
    h.val = {0.6, 0.3};
    write_loss_csv(h, dir / "loss.csv");
    std::ifstream in(dir / "loss.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);  // header + 2 epochs
}

}  // TEST_SUITE
