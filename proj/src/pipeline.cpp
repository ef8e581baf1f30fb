#include "turbidspike/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>

#include "turbidspike/dvs.hpp"
#include "turbidspike/event_io.hpp"
#include "turbidspike/idx.hpp"
#include "turbidspike/image.hpp"
#include "turbidspike/preprocess.hpp"
#include "turbidspike/sae_net.hpp"

namespace turbidspike::pipeline {

namespace fs = std::filesystem;
using events::SpikeTensor;

namespace {

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
    if (!in) throw DataError("tensor archive truncated");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

constexpr uint32_t kArchiveVersion = 1;

}  // namespace

void write_archive(const SpikeArchive& archive, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open tensor archive for writing: " + path.string());
    out.write("SPT1", 4);
    put_le<uint32_t>(out, kArchiveVersion);
    put_le<uint16_t>(out, static_cast<uint16_t>(archive.config_digest.size()));
    out.write(archive.config_digest.data(),
              static_cast<std::streamsize>(archive.config_digest.size()));
    put_le<uint32_t>(out, static_cast<uint32_t>(archive.items.size()));
    for (const auto& item : archive.items) {
        const SpikeTensor& t = item.tensor;
        put_le<uint32_t>(out, item.label);
        put_le<uint32_t>(out, item.source_index);
        put_le<uint8_t>(out, static_cast<uint8_t>(t.mode));
        put_le<uint32_t>(out, t.steps);
        put_le<uint32_t>(out, t.height);
        put_le<uint32_t>(out, t.width);
        put_le<uint64_t>(out, t.duration_us);
        if (t.mode == SpikeTensor::Mode::binary) {
            uint8_t byte = 0;
            int bit = 0;
            for (uint16_t v : t.data) {
                if (v) byte |= static_cast<uint8_t>(1u << bit);
                if (++bit == 8) {
                    put_le<uint8_t>(out, byte);
                    byte = 0;
                    bit = 0;
                }
            }
            if (bit) put_le<uint8_t>(out, byte);
        } else {
            for (uint16_t v : t.data) put_le<uint16_t>(out, v);
        }
    }
    if (!out) throw DataError("failed writing tensor archive: " + path.string());
}

SpikeArchive read_archive(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open tensor archive: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SPT1", 4) != 0)
        throw DataError("bad tensor archive magic");
    const uint32_t version = get_le<uint32_t>(in);
    if (version != kArchiveVersion)
        throw DataError("unsupported tensor archive version");
    SpikeArchive archive;
    const uint16_t digest_len = get_le<uint16_t>(in);
    archive.config_digest.resize(digest_len);
    in.read(archive.config_digest.data(), digest_len);
    const uint32_t count = get_le<uint32_t>(in);
    archive.items.resize(count);
    for (auto& item : archive.items) {
        item.label = get_le<uint32_t>(in);
        item.source_index = get_le<uint32_t>(in);
        SpikeTensor& t = item.tensor;
        t.mode = static_cast<SpikeTensor::Mode>(get_le<uint8_t>(in));
        t.steps = get_le<uint32_t>(in);
        t.height = get_le<uint32_t>(in);
        t.width = get_le<uint32_t>(in);
        t.duration_us = get_le<uint64_t>(in);
        const size_t cells = static_cast<size_t>(2) * t.steps * t.height * t.width;
        t.data.resize(cells);
        if (t.mode == SpikeTensor::Mode::binary) {
            uint8_t byte = 0;
            int bit = 8;
            for (size_t i = 0; i < cells; ++i) {
                if (bit == 8) {
                    byte = get_le<uint8_t>(in);
                    bit = 0;
                }
                t.data[i] = (byte >> bit) & 1u;
                ++bit;
            }
        } else {
            for (size_t i = 0; i < cells; ++i) t.data[i] = get_le<uint16_t>(in);
        }
    }
    return archive;
}

mc::TargetMask mask_from_image(const float* pixels, uint32_t h, uint32_t w,
                               float threshold) {
    mc::TargetMask mask;
    mask.width = w;
    mask.height = h;
    mask.on.resize(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < mask.on.size(); ++i)
        mask.on[i] = pixels[i] > threshold ? 1 : 0;
    return mask;
}

namespace {

std::string sample_name(uint32_t id, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%05u_%s.evt", id, kind);
    return buf;
}

std::string now_string() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

void cmd_simulate(const cfg::PipelineConfig& c, const fs::path& out_dir,
                  uint64_t seed, int jobs) {
    c.validate();
    const fs::path images_path = c.dataset_dir / c.images_file;
    const fs::path labels_path = c.dataset_dir / c.labels_file;
    const auto set = events::load_labeled_images(images_path, labels_path);
    if (c.sample_offset + c.sample_count > set.count)
        throw DataError("dataset holds " + std::to_string(set.count) +
                        " images; requested range exceeds it");
    fs::create_directories(out_dir);

    cfg::RunManifest manifest;
    manifest.config_digest = c.digest();
    manifest.tool_version = kToolVersion;
    manifest.seed = seed;
    manifest.jobs = jobs;
    manifest.created = now_string();
    manifest.input_digests.emplace_back(c.images_file, cfg::sha256_file(images_path));
    manifest.input_digests.emplace_back(c.labels_file, cfg::sha256_file(labels_path));

    mc::PhantomSpec clear_phantom = c.phantom;
    clear_phantom.thickness_mm = 0.0;

    for (uint32_t i = 0; i < c.sample_count; ++i) {
        const uint32_t src = c.sample_offset + i;
        mc::SceneSpec scene = c.scene;
        scene.target_frames = {{mask_from_image(set.image(src), set.height, set.width),
                                scene.settle_us, c.flash_us}};
        const uint64_t sample_seed = seed_hash(seed, src);

        const auto scat_frames =
            mc::simulate_frames(c.phantom, scene, c.photons_per_frame, sample_seed, jobs);
        const auto scat_events = dvs::emulate(scat_frames, c.dvs, sample_seed);
        const std::string scat_file = sample_name(i, "scat");
        events::write_events(scat_events, out_dir / scat_file);

        const auto clear_frames = mc::simulate_frames(clear_phantom, scene,
                                                      c.photons_per_frame, sample_seed,
                                                      jobs);
        const auto clear_events = dvs::emulate(clear_frames, c.dvs, sample_seed);
        const std::string clear_file = sample_name(i, "clear");
        events::write_events(clear_events, out_dir / clear_file);

        manifest.samples.push_back({i, src, set.labels[src], scat_file, clear_file});
    }
    write_manifest(manifest, out_dir / "manifest.json");
}

namespace {

SpikeTensor preprocess_one(const cfg::PipelineConfig& c,
                           const events::EventStream& raw) {
    auto segments = events::segment_by_triggers(raw);
    if (segments.empty()) throw DataError("recording has no trigger-delimited segment");
    events::EventStream s = std::move(segments.front());

    preprocess::RoiRect roi = c.roi;
    if (roi.w == 0) roi.w = static_cast<uint16_t>(c.scene.detector_w);
    if (roi.h == 0) roi.h = static_cast<uint16_t>(c.scene.detector_h);
    s = preprocess::crop_roi(s, roi);
    if (c.activity_enabled)
        s = preprocess::activity_noise_filter(s, c.filters.activity_dt_us,
                                              c.filters.activity_radius);
    if (c.stc_enabled)
        s = preprocess::stc_filter(s, c.filters.stc_dt_us, c.filters.stc_count);
    if (c.antiflicker_enabled)
        s = preprocess::antiflicker_filter(s, c.filters.flicker_fmin_hz,
                                           c.filters.flicker_fmax_hz,
                                           c.filters.flicker_min_cycles);
    return preprocess::bin_events(s, c.bin_h, c.bin_w, c.bin_t, c.bin_mode);
}

}  // namespace

void cmd_preprocess(const cfg::PipelineConfig& c, const fs::path& in_dir,
                    const fs::path& out_dir) {
    c.validate();
    const auto manifest = cfg::read_manifest(in_dir / "manifest.json");
    fs::create_directories(out_dir);

    SpikeArchive scat, clear;
    scat.config_digest = clear.config_digest = c.digest();
    for (const auto& sample : manifest.samples) {
        const auto scat_raw = events::read_events(in_dir / sample.scattered_file);
        scat.items.push_back(
            {sample.label, sample.source_index, preprocess_one(c, scat_raw)});
        const auto clear_raw = events::read_events(in_dir / sample.clear_file);
        clear.items.push_back(
            {sample.label, sample.source_index, preprocess_one(c, clear_raw)});
    }
    write_archive(scat, out_dir / "scat.spt");
    write_archive(clear, out_dir / "clear.spt");

    cfg::RunManifest out_manifest;
    out_manifest.config_digest = c.digest();
    out_manifest.tool_version = kToolVersion;
    out_manifest.seed = manifest.seed;
    out_manifest.jobs = manifest.jobs;
    out_manifest.created = now_string();
    out_manifest.input_digests.emplace_back("manifest.json",
                                            cfg::sha256_file(in_dir / "manifest.json"));
    write_manifest(out_manifest, out_dir / "manifest.json");
}

namespace {

std::vector<train::TrainSample> build_samples(const cfg::PipelineConfig& c,
                                              const SpikeArchive& scat,
                                              const SpikeArchive* clear) {
    std::vector<train::TrainSample> samples;
    samples.reserve(scat.items.size());
    events::LabeledImageSet set;
    if (c.train.loss == train::LossMode::membrane_mse)
        set = events::load_labeled_images(c.dataset_dir / c.images_file,
                                          c.dataset_dir / c.labels_file);
    for (size_t i = 0; i < scat.items.size(); ++i) {
        train::TrainSample s;
        s.input = scat.items[i].tensor;
        if (c.train.loss == train::LossMode::membrane_mse) {
            const uint32_t src = scat.items[i].source_index;
            if (src >= set.count) throw DataError("source index outside the dataset");
            s.target_image =
                img::fit_image(set.image(src), set.height, set.width, c.bin_h, c.bin_w);
        } else {
            if (!clear || i >= clear->items.size())
                throw DataError("van_rossum training needs the clear archive");
            s.target_spikes = clear->items[i].tensor;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string checkpoint_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_ep%03d.nci", epoch);
    return buf;
}

train::LossHistory read_loss_csv(const fs::path& path) {
    train::LossHistory h;
    std::ifstream in(path);
    if (!in) return h;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t c1 = line.find(',');
        const size_t c2 = line.find(',', c1 + 1);
        h.train.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        h.val.push_back(std::stod(line.substr(c2 + 1)));
    }
    return h;
}

}  // namespace

void cmd_train(const cfg::PipelineConfig& c, const fs::path& tensor_dir,
               const fs::path& out_dir, bool resume, int jobs) {
    c.validate();
    const auto scat = read_archive(tensor_dir / "scat.spt");
    if (scat.config_digest != c.digest())
        throw DataError("tensor archive was preprocessed under a different config");
    std::optional<SpikeArchive> clear;
    if (c.train.loss == train::LossMode::van_rossum)
        clear = read_archive(tensor_dir / "clear.spt");

    auto samples = build_samples(c, scat, clear ? &*clear : nullptr);
    if (samples.size() < c.val_count)
        throw DataError("fewer samples than the requested validation count");
    std::vector<train::TrainSample> val(samples.end() - c.val_count, samples.end());
    samples.resize(samples.size() - c.val_count);

    fs::create_directories(out_dir);

    snn::SaeNetF net(c.sae);
    auto adam = train::AdamState::init_for(net);
    int start_epoch = 0;
    train::LossHistory prior;
    if (resume) {
        int newest = -1;
        for (int e = c.train.epochs; e >= 1; --e)
            if (fs::exists(out_dir / checkpoint_name(e - 1))) {
                newest = e - 1;
                break;
            }
        if (newest >= 0) {
            auto ckpt = train::load_checkpoint(out_dir / checkpoint_name(newest));
            if (ckpt.config_digest != c.digest())
                throw DataError("checkpoint was trained under a different config");
            net = train::restore_net(ckpt);
            adam = ckpt.adam;
            start_epoch = static_cast<int>(ckpt.epoch);
            prior = read_loss_csv(out_dir / "loss.csv");
            prior.train.resize(start_epoch);
            prior.val.resize(start_epoch);
        } else {
            net.init_params(c.train.seed);
        }
    } else {
        net.init_params(c.train.seed);
    }

    const std::string digest = c.digest();
    auto history = prior;
    auto on_epoch = [&](int epoch, const train::LossHistory& h) {
        history.train.resize(start_epoch);
        history.val.resize(start_epoch);
        history.train.insert(history.train.end(), h.train.begin(), h.train.end());
        history.val.insert(history.val.end(), h.val.begin(), h.val.end());
        auto ckpt = train::make_checkpoint(net, adam, c.train,
                                           static_cast<uint64_t>(epoch) + 1, digest);
        train::save_checkpoint(out_dir / checkpoint_name(epoch), ckpt);
        train::write_loss_csv(history, out_dir / "loss.csv");
    };

    train::bptt_train(net, adam, samples, val, c.train, start_epoch, on_epoch, jobs);

    auto final_ckpt = train::make_checkpoint(
        net, adam, c.train, static_cast<uint64_t>(c.train.epochs), digest);
    train::save_checkpoint(out_dir / "final.nci", final_ckpt);
    if (c.train.epochs == 0) train::write_loss_csv(history, out_dir / "loss.csv");
}

metrics::EvalReport cmd_evaluate(const cfg::PipelineConfig& c,
                                 const fs::path& checkpoint_path,
                                 const fs::path& tensor_dir, const fs::path& out_dir,
                                 uint32_t offset, uint32_t count) {
    c.validate();
    const auto archive = read_archive(tensor_dir / "scat.spt");
    auto ckpt = train::load_checkpoint(checkpoint_path);
    if (ckpt.config_digest != archive.config_digest)
        throw DataError(
            "config digest mismatch between checkpoint and test preprocessing");
    const auto net = train::restore_net(ckpt);

    if (offset >= archive.items.size())
        throw DataError("evaluation offset outside the archive");
    count = std::min<uint32_t>(count, static_cast<uint32_t>(archive.items.size()) - offset);
    if (count == 0) throw DataError("no samples selected for evaluation");

    const auto set = events::load_labeled_images(c.dataset_dir / c.images_file,
                                                 c.dataset_dir / c.labels_file);
    fs::create_directories(out_dir);

    metrics::EvalReport report;
    report.config_digest = archive.config_digest;
    std::vector<std::array<std::vector<float>, 3>> grid_rows;
    metrics::SsimConfig ssim_cfg;
    double total_ms = 0.0;

    for (uint32_t i = 0; i < count; ++i) {
        const auto& item = archive.items[offset + i];
        if (item.source_index >= set.count)
            throw DataError("source index outside the dataset");
        const auto target = img::fit_image(set.image(item.source_index), set.height,
                                           set.width, item.tensor.height,
                                           item.tensor.width);
        const auto input_img = img::integrate_tensor(item.tensor);

        const auto t0 = std::chrono::steady_clock::now();
        auto state = net.make_state();
        const auto out = net.forward(snn::tensor_to_matrix(item.tensor), state);
        const auto recon =
            snn::accumulate_membrane(out.out_membrane, item.tensor.height,
                                     item.tensor.width);
        total_ms += std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();

        metrics::SampleMetrics m;
        m.sample_id = offset + i;
        m.ssim_input = metrics::ssim(input_img, target, item.tensor.height,
                                     item.tensor.width, ssim_cfg);
        m.mse_input = metrics::mse_metric(input_img, target);
        m.ssim_recon = metrics::ssim(recon, target, item.tensor.height,
                                     item.tensor.width, ssim_cfg);
        m.mse_recon = metrics::mse_metric(recon, target);
        report.samples.push_back(m);
        grid_rows.push_back({target, input_img, recon});

        if (i == 0) {
            std::vector<metrics::RasterSet> sets;
            sets.push_back(metrics::raster_from_tensor("input", item.tensor));
            events::SpikeTensor recon_spikes;
            recon_spikes.mode = events::SpikeTensor::Mode::binary;
            recon_spikes.steps = item.tensor.steps;
            recon_spikes.height = item.tensor.height;
            recon_spikes.width = item.tensor.width;
            recon_spikes.duration_us = item.tensor.duration_us;
            recon_spikes.data.assign(item.tensor.data.size(), 0);
            const size_t hw =
                static_cast<size_t>(recon_spikes.height) * recon_spikes.width;
            for (uint32_t s = 0; s < recon_spikes.steps; ++s)
                for (Eigen::Index f = 0; f < out.out_spikes.rows(); ++f)
                    if (out.out_spikes(f, s) > 0.0f) {
                        const uint32_t ch = static_cast<uint32_t>(f / hw);
                        const uint32_t pos = static_cast<uint32_t>(f % hw);
                        recon_spikes.data[recon_spikes.index(
                            ch, s, pos / recon_spikes.width,
                            pos % recon_spikes.width)] = 1;
                    }
            sets.push_back(metrics::raster_from_tensor("reconstruction", recon_spikes));
            metrics::raster_export(sets, out_dir / "raster.csv");
            snn::export_latent(out.latent_spikes, out_dir / "latent.csv");
        }
    }

    report.finalize();
    metrics::write_report(report, out_dir / "report.csv");
    img::write_image_grid(grid_rows, archive.items[offset].tensor.height,
                          archive.items[offset].tensor.width, out_dir / "grid.pgm");
    std::cerr << "[evaluate] inference wall-clock per sample: "
              << total_ms / count << " ms (" << count << " samples)\n";
    return report;
}

}  // namespace turbidspike::pipeline
