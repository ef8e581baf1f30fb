#pragma once

#include <filesystem>
#include <iosfwd>

#include "turbidspike/events.hpp"

namespace turbidspike::events {

enum class FileFormat { text, binary };

// Text format: UTF-8 lines. Header `# evt v1 <width> <height>`, then
// `t,x,y,p` records (decimal) with `# trig <t> <rise|fall>` lines
// interleaved in time order.
//
// Binary format: magic `EVT1`, little-endian u16 width, u16 height,
// u32 trigger count, triggers as (u64 t, u8 edge), u64 event count,
// events packed as (u64 t, u16 x, u16 y, i8 p).

// Picks the format from the file content (binary magic vs. text header).
EventStream read_events(const std::filesystem::path& path, bool sort_unordered = false);

// `.evt` writes binary, anything else text.
void write_events(const EventStream& stream, const std::filesystem::path& path);
void write_events(const EventStream& stream, const std::filesystem::path& path,
                  FileFormat format);

EventStream read_events_text(std::istream& in, bool sort_unordered = false);
void write_events_text(const EventStream& stream, std::ostream& out);
EventStream read_events_binary(std::istream& in, bool sort_unordered = false);
void write_events_binary(const EventStream& stream, std::ostream& out);

}  // namespace turbidspike::events
