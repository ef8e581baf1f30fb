#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "turbidspike/events.hpp"

namespace turbidspike::events {

// Decoded IDX payload (big-endian header as published for the MNIST-family
// files): magic 0x00 0x00 <type> <ndims>, then ndims u32 sizes.
struct IdxArray {
    uint8_t type_code = 0;           // 0x08 u8, 0x09 i8, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
    std::vector<uint32_t> dims;      // 1..3 dims
    std::vector<uint8_t> payload;    // raw big-endian element bytes

    size_t element_size() const;
    size_t element_count() const;
    // Element i as a double regardless of type code (integers sign-extended,
    // floats re-assembled from the big-endian bytes).
    double value(size_t i) const;
};

IdxArray parse_idx(std::span<const uint8_t> bytes);
IdxArray parse_idx_file(const std::filesystem::path& path);

// Pairs an images file (N,H,W ubyte) with a labels file (N ubyte); pixels
// are normalized to [0,1] by division by 255.
LabeledImageSet load_labeled_images(const std::filesystem::path& images_path,
                                    const std::filesystem::path& labels_path,
                                    const std::string& source_name = {});

}  // namespace turbidspike::events
