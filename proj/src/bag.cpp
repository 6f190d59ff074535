#include "vila/bag.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace vila {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, std::size_t& off) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("bag file truncated in header", off);
    off += 4;
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void read_matrix(std::ifstream& in, std::vector<double>& m, std::size_t count,
                 std::size_t& off, const char* which) {
    m.resize(count);
    // f64 LE; this code assumes a little-endian host
    in.read(reinterpret_cast<char*>(m.data()), std::streamsize(count * sizeof(double)));
    if (std::size_t(in.gcount()) != count * sizeof(double))
        throw FormatError(std::string("bag file truncated in ") + which,
                          off + std::size_t(in.gcount()));
    off += count * sizeof(double);
}

}  // namespace

void write_bag(const Bag& bag, const std::filesystem::path& path) {
    if (bag.n_low < 1 || bag.n_high < 1)
        throw std::invalid_argument("write_bag: empty patch matrix in bag '" + bag.id + "'");
    if (bag.dim < 1) throw std::invalid_argument("write_bag: feature dimension must be >= 1");
    if (bag.h_low.size() != std::size_t(bag.n_low) * bag.dim ||
        bag.h_high.size() != std::size_t(bag.n_high) * bag.dim)
        throw std::invalid_argument("write_bag: matrix size does not match declared shape");
    for (double v : bag.h_low)
        if (!std::isfinite(v)) throw std::invalid_argument("write_bag: non-finite value in H_l");
    for (double v : bag.h_high)
        if (!std::isfinite(v)) throw std::invalid_argument("write_bag: non-finite value in H_h");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_bag: cannot open " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, std::uint32_t(bag.label));
    put_u32(out, std::uint32_t(bag.dim));
    put_u32(out, std::uint32_t(bag.n_low));
    put_u32(out, std::uint32_t(bag.n_high));
    out.write(reinterpret_cast<const char*>(bag.h_low.data()),
              std::streamsize(bag.h_low.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(bag.h_high.data()),
              std::streamsize(bag.h_high.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_bag: write failed for " + path.string());
}

Bag read_bag(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_bag: cannot open " + path.string());
    std::size_t off = 0;
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string(), 0);
    off = 4;
    std::uint32_t version = get_u32(in, off);
    if (version != kVersion)
        throw FormatError("unsupported bag version " + std::to_string(version), 4);
    Bag bag;
    bag.label = int(get_u32(in, off));
    bag.dim = int(get_u32(in, off));
    bag.n_low = int(get_u32(in, off));
    bag.n_high = int(get_u32(in, off));
    if (bag.dim < 1 || bag.n_low < 1 || bag.n_high < 1)
        throw FormatError("invalid shape fields in bag header", off);
    read_matrix(in, bag.h_low, std::size_t(bag.n_low) * bag.dim, off, "H_l");
    read_matrix(in, bag.h_high, std::size_t(bag.n_high) * bag.dim, off, "H_h");
    bag.id = path.stem().string();
    return bag;
}

}  // namespace vila
