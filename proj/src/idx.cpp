#include "turbidspike/idx.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace turbidspike::events {

size_t IdxArray::element_size() const {
    switch (type_code) {
        case 0x08:
        case 0x09:
            return 1;
        case 0x0B:
            return 2;
        case 0x0C:
        case 0x0D:
            return 4;
        case 0x0E:
            return 8;
    }
    return 0;
}

size_t IdxArray::element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

namespace {

uint64_t be_bytes(const uint8_t* p, size_t n) {
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

double IdxArray::value(size_t i) const {
    const size_t es = element_size();
    const uint8_t* p = payload.data() + i * es;
    switch (type_code) {
        case 0x08:
            return static_cast<double>(p[0]);
        case 0x09:
            return static_cast<double>(static_cast<int8_t>(p[0]));
        case 0x0B:
            return static_cast<double>(static_cast<int16_t>(be_bytes(p, 2)));
        case 0x0C:
            return static_cast<double>(static_cast<int32_t>(be_bytes(p, 4)));
        case 0x0D:
            return std::bit_cast<float>(static_cast<uint32_t>(be_bytes(p, 4)));
        case 0x0E:
            return std::bit_cast<double>(be_bytes(p, 8));
    }
    return 0.0;
}

IdxArray parse_idx(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4) throw DataError("IDX header truncated");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw DataError("IDX magic must start with two zero bytes");
    IdxArray arr;
    arr.type_code = bytes[2];
    if (arr.element_size() == 0)
        throw DataError("unknown IDX type code " + std::to_string(bytes[2]));
    const unsigned ndims = bytes[3];
    if (ndims < 1 || ndims > 3)
        throw DataError("IDX dimension count outside 1-3: " + std::to_string(ndims));
    size_t off = 4;
    if (bytes.size() < off + 4 * ndims) throw DataError("IDX header truncated");
    arr.dims.reserve(ndims);
    for (unsigned d = 0; d < ndims; ++d) {
        arr.dims.push_back(static_cast<uint32_t>(be_bytes(bytes.data() + off, 4)));
        off += 4;
    }
    const size_t payload_size = arr.element_count() * arr.element_size();
    if (bytes.size() - off < payload_size)
        throw DataError("IDX payload truncated: declared " +
                        std::to_string(payload_size) + " bytes, got " +
                        std::to_string(bytes.size() - off));
    arr.payload.assign(bytes.begin() + off, bytes.begin() + off + payload_size);
    return arr;
}

IdxArray parse_idx_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open IDX file: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

LabeledImageSet load_labeled_images(const std::filesystem::path& images_path,
                                    const std::filesystem::path& labels_path,
                                    const std::string& source_name) {
    IdxArray images = parse_idx_file(images_path);
    IdxArray labels = parse_idx_file(labels_path);
    if (images.dims.size() != 3)
        throw DataError("image IDX file must have dims (N,H,W)");
    if (labels.dims.size() != 1)
        throw DataError("label IDX file must have dims (N)");
    if (images.type_code != 0x08 || labels.type_code != 0x08)
        throw DataError("MNIST-family files are expected to hold unsigned bytes");
    if (images.dims[0] != labels.dims[0])
        throw DataError("image/label counts disagree");

    LabeledImageSet set;
    set.count = images.dims[0];
    set.height = images.dims[1];
    set.width = images.dims[2];
    set.source_name = source_name.empty() ? images_path.filename().string() : source_name;
    set.pixels.resize(images.payload.size());
    for (size_t i = 0; i < images.payload.size(); ++i)
        set.pixels[i] = static_cast<float>(images.payload[i]) / 255.0f;
    set.labels.assign(labels.payload.begin(), labels.payload.end());
    return set;
}

}  // namespace turbidspike::events
