#include "diffeo/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <boost/crc.hpp>

#include "diffeo/errors.hpp"

namespace diffeo::io {

namespace {

template <typename U>
U to_little(U bits) {
    if constexpr (std::endian::native == std::endian::big) {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            out = static_cast<U>((out << 8) | (bits & 0xff));
            bits >>= 8;
        }
        return out;
    }
    return bits;
}

}  // namespace

void write_f32(const std::filesystem::path& path, std::span<const double> values) {
    std::string buf(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
        std::memcpy(buf.data() + 4 * i, &bits, 4);
    }
    write_text(path, buf);
}

std::vector<double> read_f32(const std::filesystem::path& path) {
    const std::string buf = read_text(path);
    if (buf.size() % 4 != 0) fail(ErrorCode::Io, path.string() + " is not a float32 array");
    std::vector<double> out(buf.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, buf.data() + 4 * i, 4);
        out[i] = static_cast<double>(std::bit_cast<float>(to_little(bits)));
    }
    return out;
}

void append_f64_le(std::string& out, std::span<const double> values) {
    const std::size_t base = out.size();
    out.resize(base + values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = to_little(std::bit_cast<std::uint64_t>(values[i]));
        std::memcpy(out.data() + base + 8 * i, &bits, 8);
    }
}

void read_f64_le(std::span<const char> bytes, std::span<double> out) {
    if (bytes.size() != out.size() * 8) fail(ErrorCode::Io, "float64 block size mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        out[i] = std::bit_cast<double>(to_little(bits));
    }
}

std::uint32_t crc32(std::span<const char> bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
    const std::string buf = read_text(path);
    return crc32(buf);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) fail(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace diffeo::io
