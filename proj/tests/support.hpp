#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "geostrata/grid_io.hpp"
#include "geostrata/rng.hpp"
#include "geostrata/spatial_weights.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return GEOSTRATA_SOURCE_DIR; }

/// Fresh, empty scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::path(GEOSTRATA_BINARY_DIR) / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline geostrata::RasterGrid categorical(std::int32_t rows, std::int32_t cols, std::vector<double> v,
                                         double nodata = -9999.0) {
  return {rows, cols, 1.0, 0.0, 0.0, nodata, geostrata::GridKind::Categorical, std::move(v)};
}

inline geostrata::RasterGrid continuous(std::int32_t rows, std::int32_t cols, std::vector<double> v) {
  return {rows, cols, 1.0, 0.0, 0.0, -9999.0, geostrata::GridKind::Continuous, std::move(v)};
}

/// One region per cell, ids "c<row>_<col>", row-major.
inline geostrata::RegionSet cell_regions(std::int32_t rows, std::int32_t cols) {
  geostrata::RegionSet set;
  for (std::int32_t r = 0; r < rows; ++r)
    for (std::int32_t c = 0; c < cols; ++c)
      set.regions.push_back({"c" + std::to_string(r) + "_" + std::to_string(c), {{r, c}}});
  return set;
}

/// Binary rook (or queen) weights of a rows x cols lattice, built directly.
inline geostrata::WeightMatrix lattice(std::int32_t rows, std::int32_t cols, bool queen = false) {
  std::vector<geostrata::WeightEntry> e;
  for (std::int32_t r = 0; r < rows; ++r)
    for (std::int32_t c = 0; c < cols; ++c)
      for (std::int32_t dr = -1; dr <= 1; ++dr)
        for (std::int32_t dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (!queen && dr != 0 && dc != 0) continue;
          const std::int32_t rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          e.push_back({r * cols + c, rr * cols + cc, 1.0});
        }
  return {static_cast<std::size_t>(rows * cols), std::move(e)};
}

inline std::vector<double> uniform_values(geostrata::Stream& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform01();
  return v;
}

} // namespace testing
