#include <doctest.h>

#include "test_helpers.hpp"
#include "turbidspike/sae_net.hpp"

using namespace turbidspike;
using namespace turbidspike::snn;

namespace {

// minimal config exposing a single 1x1 spiking conv as the first layer
SaeConfig one_conv_config() {
    SaeConfig cfg;
    cfg.in_channels = 1;
    cfg.in_h = cfg.in_w = 2;
    cfg.encoder = {{1, 1, 1, 0}};
    cfg.latent_dim = 2;
    return cfg;
}

MatF random_binary(Eigen::Index rows, Eigen::Index cols, uint64_t seed,
                   double p = 0.3) {
    CounterRng rng(seed, 0);
    MatF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform() < p ? 1.0f : 0.0f;
    return m;
}

}  // namespace

TEST_SUITE("snn_core") {

TEST_CASE("lif dynamics: integration to threshold and subtract reset") {
    // alpha=0, beta=1, theta=1, constant drive 0.3: u = .3 .6 .9 1.2 -> spike
    SaeConfig cfg = one_conv_config();
    cfg.lif.alpha = 0.0;
    cfg.lif.beta = 1.0;
    cfg.lif.theta = 1.0;
    SaeNetF net(cfg);
    net.weight(0)(0, 0) = 0.3f;  // input spike of 1 injects 0.3
    auto state = net.make_state();
    SaeNetF::Trace trace;
    MatF input = MatF::Ones(4, 6);  // all pixels drive every step
    net.forward(input, state, &trace);
    const auto& u = trace.u_pre[0];
    const auto& s = trace.spikes[0];
    CHECK(u(0, 0) == doctest::Approx(0.3));
    CHECK(u(0, 1) == doctest::Approx(0.6));
    CHECK(u(0, 2) == doctest::Approx(0.9));
    CHECK(u(0, 3) == doctest::Approx(1.2));
    CHECK(s(0, 2) == 0.0f);
    CHECK(s(0, 3) == 1.0f);                   // first spike at step 4
    CHECK(u(0, 4) == doctest::Approx(0.5));   // 0.2 residual + 0.3 drive
}

TEST_CASE("lif dynamics: memoryless degenerate and zero input") {
    SaeConfig cfg = one_conv_config();
    cfg.lif.alpha = 0.0;
    cfg.lif.beta = 0.0;
    cfg.lif.theta = 1.0;
    SaeNetF net(cfg);
    net.weight(0)(0, 0) = 1.5f;
    auto state = net.make_state();
    SaeNetF::Trace trace;
    MatF input(4, 3);
    input.setZero();
    input(2, 1) = 1.0f;  // single pixel fires at step 1
    net.forward(input, state, &trace);
    CHECK(trace.spikes[0].col(0).sum() == 0.0f);
    CHECK(trace.spikes[0](2, 1) == 1.0f);  // spike iff input >= theta
    CHECK(trace.spikes[0].col(2).sum() == 0.0f);

    auto zero_state = net.make_state();
    auto out = net.forward(MatF::Zero(4, 3), zero_state);
    CHECK(out.out_membrane.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("conv layer: identity kernel at threshold fires once per active pixel") {
    SaeConfig cfg = one_conv_config();
    SaeNetF net(cfg);
    net.weight(0)(0, 0) = static_cast<float>(cfg.lif.theta);
    auto state = net.make_state();
    SaeNetF::Trace trace;
    MatF input = MatF::Zero(4, 1);
    input(3, 0) = 1.0f;
    net.forward(input, state, &trace);
    CHECK(trace.spikes[0](3, 0) == 1.0f);
    CHECK(trace.spikes[0].col(0).sum() == 1.0f);
}

TEST_CASE("default 64 config composes 64->32->16->8 and closes the mirror") {
    auto layers = build_layers(sae_default(64));
    REQUIRE(layers.size() == 8);
    CHECK(layers[0].out_h == 32);
    CHECK(layers[1].out_h == 16);
    CHECK(layers[2].out_h == 8);
    CHECK(layers[2].out_c == 128);
    CHECK(layers[3].in_features() == 8192);   // flatten [128,8,8]
    CHECK(layers[3].out_features() == 128);   // latent
    CHECK(layers[4].out_features() == 8192);
    CHECK(layers.back().out_c == 2);
    CHECK(layers.back().out_h == 64);
    CHECK(layers.back().out_w == 64);

    auto layers32 = build_layers(sae_default(32));
    REQUIRE(layers32.size() == 6);
    CHECK(layers32[1].out_features() == 8192);
    CHECK(layers32.back().out_h == 32);
}

TEST_CASE("forward pass: latent is 128 wide, output shape equals input") {
    auto cfg = sae_default(32);
    SaeNetF net(cfg);
    net.init_params(3);
    auto state = net.make_state();
    auto out = net.forward(random_binary(2 * 32 * 32, 5, 21), state);
    CHECK(out.latent_spikes.rows() == 128);
    CHECK(out.latent_spikes.cols() == 5);
    CHECK(out.out_membrane.rows() == 2 * 32 * 32);
    CHECK(out.out_spikes.rows() == 2 * 32 * 32);
}

TEST_CASE("all spike values are exactly zero or one") {
    auto cfg = sae_default(32);
    SaeNetF net(cfg);
    net.init_params(5);
    auto state = net.make_state();
    SaeNetF::Trace trace;
    net.forward(random_binary(2 * 32 * 32, 4, 33), state, &trace);
    for (const auto& s : trace.spikes)
        for (Eigen::Index i = 0; i < s.size(); ++i)
            CHECK((s.data()[i] == 0.0f || s.data()[i] == 1.0f));
}

TEST_CASE("state persistence: one block equals two carried half blocks") {
    auto cfg = sae_default(32);
    SaeNetF net(cfg);
    net.init_params(11);
    MatF input = random_binary(2 * 32 * 32, 6, 77);

    auto s1 = net.make_state();
    auto full = net.forward(input, s1);

    auto s2 = net.make_state();
    auto first = net.forward(input.leftCols(3), s2);
    auto second = net.forward(input.rightCols(3), s2);

    CHECK(full.out_membrane.leftCols(3) == first.out_membrane);
    CHECK(full.out_membrane.rightCols(3) == second.out_membrane);
    CHECK(full.latent_spikes.rightCols(3) == second.latent_spikes);
}

TEST_CASE("forward determinism and seeded init") {
    auto cfg = sae_default(32);
    SaeNetF a(cfg), b(cfg), c(cfg);
    a.init_params(1);
    b.init_params(1);
    c.init_params(2);
    CHECK(a.weight(0) == b.weight(0));
    CHECK(a.weight(3) == b.weight(3));
    CHECK(a.weight(0) != c.weight(0));
    MatF input = random_binary(2 * 32 * 32, 3, 5);
    auto sa = a.make_state();
    auto sb = b.make_state();
    CHECK(a.forward(input, sa).out_membrane == b.forward(input, sb).out_membrane);
}

TEST_CASE("membrane bounded under subtract reset") {
    auto cfg = one_conv_config();
    cfg.lif.theta = 1.0;
    SaeNetF net(cfg);
    net.init_params(9);
    auto state = net.make_state();
    SaeNetF::Trace trace;
    net.forward(MatF::Ones(4, 200), state, &trace);
    // envelope: |c| <= max abs weight, |i| <= c/(1-alpha), |u_pre| <= i/(1-beta)
    const float c_max = net.weight(0).cwiseAbs().maxCoeff();
    const float bound = c_max / ((1.0f - 0.8f) * (1.0f - 0.9f)) + 1e-4f;
    CHECK(trace.u_pre[0].cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("accumulate_membrane: endpoints and scale invariance") {
    MatF m = MatF::Zero(2 * 4, 3);  // 2x2 image, 2 channels
    CHECK(accumulate_membrane(m, 2, 2) == std::vector<float>{0, 0, 0, 0});

    m(1, 0) = 1.0f;  // positive channel pixel accumulating
    m(1, 2) = 2.0f;
    auto img1 = accumulate_membrane(m, 2, 2);
    CHECK(img1[1] == doctest::Approx(1.0));
    CHECK(img1[0] == doctest::Approx(0.0));

    auto img2 = accumulate_membrane(3.0f * m, 2, 2);
    for (size_t i = 0; i < 4; ++i) CHECK(img1[i] == doctest::Approx(img2[i]));
}

TEST_CASE("latent export: csv round trip and dimensions") {
    auto dir = testutil::tmp_dir("latent");
    MatF latent = MatF::Zero(128, 10);
    latent(0, 0) = 1.0f;
    latent(127, 9) = 1.0f;
    export_latent(latent, dir / "latent.csv");
    auto back = read_latent_csv(dir / "latent.csv");
    CHECK(back.rows() == 128);
    CHECK(back.cols() == 10);
    CHECK(back == latent);

    export_latent(MatF::Zero(128, 4), dir / "zero.csv");
    CHECK(read_latent_csv(dir / "zero.csv").cwiseAbs().sum() == 0.0f);
}

TEST_CASE("tensor_to_matrix layout") {
    events::SpikeTensor t;
    t.mode = events::SpikeTensor::Mode::binary;
    t.steps = 2;
    t.height = 2;
    t.width = 3;
    t.duration_us = 100;
    t.data.assign(2 * 2 * 2 * 3, 0);
    t.data[t.index(1, 1, 0, 2)] = 1;  // negative channel, step 1, (y0,x2)
    auto m = tensor_to_matrix(t);
    CHECK(m.rows() == 12);
    CHECK(m.sum() == 1.0f);
    CHECK(m(1 * 6 + 0 * 3 + 2, 1) == 1.0f);
}

}  // TEST_SUITE
