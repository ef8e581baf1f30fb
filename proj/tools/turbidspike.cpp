#include <CLI11.hpp>
#include <iostream>

#include "turbidspike/pipeline.hpp"

using namespace turbidspike;

namespace {

cfg::PipelineConfig load_config(const std::string& config_path,
                                const std::vector<std::string>& overrides,
                                uint64_t seed_flag) {
    cfg::KvMap kv;
    if (!config_path.empty()) kv = cfg::parse_toml_file(config_path);
    for (const auto& o : overrides) cfg::apply_override(kv, o);
    if (seed_flag) kv["train.seed"] = std::to_string(seed_flag);
    return cfg::PipelineConfig::from_kv(kv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuromorphic imaging-through-turbid-media pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = 1;
    uint64_t seed = 0;  // 0 -> use train.seed from the config
    app.add_option("--config", config_path, "pipeline config file (TOML)");
    app.add_option("--set", overrides, "override: section.key=value")->take_all();
    app.add_option("--jobs", jobs, "parallel workers");
    app.add_option("--seed", seed, "master seed (overrides train.seed)");

    auto* sim = app.add_subcommand("simulate", "scattering + DVS event generation");
    std::string sim_out;
    sim->add_option("--out", sim_out, "output directory (default <out_dir>/events)");

    auto* prep = app.add_subcommand("preprocess", "events -> spike tensors");
    std::string prep_in, prep_out;
    prep->add_option("--in", prep_in, "event directory (default <out_dir>/events)");
    prep->add_option("--out", prep_out, "archive directory (default <out_dir>/tensors)");

    auto* tr = app.add_subcommand("train", "surrogate-gradient BPTT training");
    std::string tr_tensors, tr_out;
    bool tr_resume = false;
    tr->add_option("--tensors", tr_tensors, "tensor directory (default <out_dir>/tensors)");
    tr->add_option("--out", tr_out, "model directory (default <out_dir>/model)");
    tr->add_flag("--resume", tr_resume, "continue from the newest checkpoint");

    auto* ev = app.add_subcommand("evaluate", "inference + SSIM/MSE report");
    std::string ev_ckpt, ev_tensors, ev_out;
    uint32_t ev_offset = 0, ev_count = UINT32_MAX;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint (default <out_dir>/model/final.nci)");
    ev->add_option("--tensors", ev_tensors, "tensor directory (default <out_dir>/tensors)");
    ev->add_option("--out", ev_out, "report directory (default <out_dir>/eval)");
    ev->add_option("--offset", ev_offset, "first archive sample");
    ev->add_option("--count", ev_count, "sample count (default: rest)");

    auto* dump = app.add_subcommand("config", "print the canonical config and digest");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto c = load_config(config_path, overrides, seed);
        const uint64_t run_seed = seed ? seed : c.train.seed;

        if (dump->parsed()) {
            std::cout << c.dump();
            std::cout << "# digest " << c.digest() << "\n";
            return 0;
        }
        if (sim->parsed()) {
            pipeline::cmd_simulate(
                c, sim_out.empty() ? c.out_dir / "events" : std::filesystem::path(sim_out),
                run_seed, jobs);
            return 0;
        }
        if (prep->parsed()) {
            pipeline::cmd_preprocess(
                c, prep_in.empty() ? c.out_dir / "events" : std::filesystem::path(prep_in),
                prep_out.empty() ? c.out_dir / "tensors"
                                 : std::filesystem::path(prep_out));
            return 0;
        }
        if (tr->parsed()) {
            pipeline::cmd_train(
                c, tr_tensors.empty() ? c.out_dir / "tensors"
                                  : std::filesystem::path(tr_tensors),
                tr_out.empty() ? c.out_dir / "model" : std::filesystem::path(tr_out),
                tr_resume, jobs);
            return 0;
        }
        if (ev->parsed()) {
            const auto report = pipeline::cmd_evaluate(
                c,
                ev_ckpt.empty() ? c.out_dir / "model" / "final.nci"
                                : std::filesystem::path(ev_ckpt),
                ev_tensors.empty() ? c.out_dir / "tensors"
                                   : std::filesystem::path(ev_tensors),
                ev_out.empty() ? c.out_dir / "eval" : std::filesystem::path(ev_out),
                ev_offset, ev_count);
            std::cout << "samples " << report.samples.size() << " | input ssim "
                      << report.mean_ssim_input << " mse " << report.mean_mse_input
                      << " | reconstruction ssim " << report.mean_ssim_recon
                      << " mse " << report.mean_mse_recon << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
