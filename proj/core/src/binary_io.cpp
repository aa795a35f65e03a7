#include "scaforge/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace scaforge {

const char* to_string(FormatErrc code) {
    switch (code) {
    case FormatErrc::io_error: return "io error";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::unsupported_version: return "unsupported version";
    case FormatErrc::unsupported_dtype: return "unsupported dtype";
    case FormatErrc::bad_flags: return "bad flags";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::length_mismatch: return "length mismatch";
    case FormatErrc::value_out_of_range: return "value out of range";
    case FormatErrc::label_mismatch: return "label mismatch";
    }
    return "unknown";
}

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatError(FormatErrc::io_error, "read failed for " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::io_error, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw FormatError(FormatErrc::io_error, "write failed for " + path.string());
}

}  // namespace io
}  // namespace scaforge
