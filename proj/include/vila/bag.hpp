#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace vila {

// One slide: dual-scale patch-feature matrices plus a class label.
// H_low is N_l x d, H_high is N_h x d, row-major.
struct Bag {
    std::string id;
    int label = 0;
    int dim = 0;
    int n_low = 0;
    int n_high = 0;
    std::vector<double> h_low;
    std::vector<double> h_high;
};

struct FormatError : std::runtime_error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"),
          offset(off) {}
};

// Bag file layout: magic "VLMB" | version u32 LE = 1 | label u32 | d u32 |
// N_l u32 | N_h u32 | H_l as N_l*d f64 LE | H_h as N_h*d f64 LE.
void write_bag(const Bag& bag, const std::filesystem::path& path);
Bag read_bag(const std::filesystem::path& path);

}  // namespace vila
