#include "turbidspike/event_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace turbidspike::events {

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
    if (!in) throw DataError("event file truncated");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

uint64_t parse_u64(std::string_view s, const char* what) {
    uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError(std::string("malformed ") + what + ": '" + std::string(s) + "'");
    return v;
}

int64_t parse_i64(std::string_view s, const char* what) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw DataError(std::string("malformed ") + what + ": '" + std::string(s) + "'");
    return v;
}

void finish_stream(EventStream& s, bool sort_unordered) {
    if (sort_unordered) s.sort_events();
    s.validate();
}

}  // namespace

EventStream read_events_text(std::istream& in, bool sort_unordered) {
    EventStream s;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty event file");
    {
        std::istringstream hs(line);
        std::string hash, tag, ver;
        unsigned w = 0, h = 0;
        if (!(hs >> hash >> tag >> ver >> w >> h) || hash != "#" || tag != "evt" ||
            ver != "v1")
            throw DataError("bad event text header: '" + line + "'");
        s.width = static_cast<uint16_t>(w);
        s.height = static_cast<uint16_t>(h);
    }
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ts(line);
            std::string hash, tag, edge;
            uint64_t t;
            if (!(ts >> hash >> tag >> t >> edge) || tag != "trig" ||
                (edge != "rise" && edge != "fall"))
                throw DataError("malformed trigger line " + std::to_string(lineno));
            s.triggers.push_back({t, edge == "rise" ? Edge::rising : Edge::falling});
            continue;
        }
        std::string_view sv(line);
        uint64_t fields[4];
        for (int f = 0; f < 4; ++f) {
            size_t comma = sv.find(',');
            std::string_view tok = (f < 3) ? sv.substr(0, comma) : sv;
            if (f < 3 && comma == std::string_view::npos)
                throw DataError("malformed event line " + std::to_string(lineno));
            if (f == 3) {
                int64_t p = parse_i64(tok, "polarity");
                if (p != 1 && p != -1)
                    throw DataError("invalid polarity on line " + std::to_string(lineno));
                fields[3] = static_cast<uint64_t>(static_cast<int8_t>(p));
            } else {
                fields[f] = parse_u64(tok, f == 0 ? "timestamp" : "coordinate");
                sv.remove_prefix(comma + 1);
            }
        }
        s.events.push_back({fields[0], static_cast<uint16_t>(fields[1]),
                            static_cast<uint16_t>(fields[2]),
                            static_cast<int8_t>(fields[3])});
    }
    finish_stream(s, sort_unordered);
    return s;
}

void write_events_text(const EventStream& stream, std::ostream& out) {
    out << "# evt v1 " << stream.width << " " << stream.height << "\n";
    // merge triggers with events in time order; triggers first at equal t
    size_t ti = 0;
    auto put_trigger = [&](const Trigger& tr) {
        out << "# trig " << tr.t << (tr.edge == Edge::rising ? " rise" : " fall")
            << "\n";
    };
    for (const Event& e : stream.events) {
        while (ti < stream.triggers.size() && stream.triggers[ti].t <= e.t)
            put_trigger(stream.triggers[ti++]);
        out << e.t << "," << e.x << "," << e.y << "," << static_cast<int>(e.p) << "\n";
    }
    while (ti < stream.triggers.size()) put_trigger(stream.triggers[ti++]);
}

EventStream read_events_binary(std::istream& in, bool sort_unordered) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "EVT1", 4) != 0)
        throw DataError("bad event binary magic");
    EventStream s;
    s.width = get_le<uint16_t>(in);
    s.height = get_le<uint16_t>(in);
    uint32_t ntrig = get_le<uint32_t>(in);
    s.triggers.reserve(ntrig);
    for (uint32_t i = 0; i < ntrig; ++i) {
        uint64_t t = get_le<uint64_t>(in);
        uint8_t edge = get_le<uint8_t>(in);
        if (edge > 1) throw DataError("invalid trigger edge code");
        s.triggers.push_back({t, static_cast<Edge>(edge)});
    }
    uint64_t nev = get_le<uint64_t>(in);
    s.events.reserve(nev);
    for (uint64_t i = 0; i < nev; ++i) {
        Event e;
        e.t = get_le<uint64_t>(in);
        e.x = get_le<uint16_t>(in);
        e.y = get_le<uint16_t>(in);
        e.p = static_cast<int8_t>(get_le<uint8_t>(in));
        s.events.push_back(e);
    }
    finish_stream(s, sort_unordered);
    return s;
}

void write_events_binary(const EventStream& stream, std::ostream& out) {
    out.write("EVT1", 4);
    put_le<uint16_t>(out, stream.width);
    put_le<uint16_t>(out, stream.height);
    put_le<uint32_t>(out, static_cast<uint32_t>(stream.triggers.size()));
    for (const Trigger& tr : stream.triggers) {
        put_le<uint64_t>(out, tr.t);
        put_le<uint8_t>(out, static_cast<uint8_t>(tr.edge));
    }
    put_le<uint64_t>(out, stream.events.size());
    for (const Event& e : stream.events) {
        put_le<uint64_t>(out, e.t);
        put_le<uint16_t>(out, e.x);
        put_le<uint16_t>(out, e.y);
        put_le<uint8_t>(out, static_cast<uint8_t>(e.p));
    }
}

EventStream read_events(const std::filesystem::path& path, bool sort_unordered) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open event file: " + path.string());
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    in.clear();
    in.seekg(0);
    if (std::memcmp(magic, "EVT1", 4) == 0) return read_events_binary(in, sort_unordered);
    return read_events_text(in, sort_unordered);
}

void write_events(const EventStream& stream, const std::filesystem::path& path,
                  FileFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open event file for writing: " + path.string());
    if (format == FileFormat::binary)
        write_events_binary(stream, out);
    else
        write_events_text(stream, out);
    if (!out) throw DataError("failed writing event file: " + path.string());
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
    write_events(stream, path,
                 path.extension() == ".evt" ? FileFormat::binary : FileFormat::text);
}

}  // namespace turbidspike::events
