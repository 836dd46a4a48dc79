#pragma once

// Binary PGM (P5, 8-bit) reading and writing. Images travel through the
// pipeline normalized to [-1,1]; on disk pixel = round((value+1)/2 * 255).

#include <cstdint>
#include <string>
#include <vector>

#include "copdflow/tensor.hpp"

namespace copdflow {

struct PgmImage {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::string& path, const PgmImage& img);
PgmImage read_pgm(const std::string& path);

/// Quantizes a [-1,1] tensor (rank 2 or trailing [h,w] of rank 3/4 with
/// singleton channel) to 8-bit pixels.
PgmImage to_pgm(const Tensor& img);

/// Maps pixels back to [-1,1].
Tensor from_pgm(const PgmImage& img);

}  // namespace copdflow
