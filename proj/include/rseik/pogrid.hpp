#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "rseik/tessellation.hpp"

namespace rseik {

inline constexpr const char* pogrid_magic = "POGRID1";

struct PogridData {
    ProductGrid grid;
    std::string quantity;
    nlohmann::json header;
    std::vector<std::vector<double>> channels;  // each of grid.size() values, float32 precision
};

// Header fields beyond the grid description go in `extra` (variant, epsilon, xi, ...).
std::string encode_pogrid(const ProductGrid& grid, const std::string& quantity,
                          const std::vector<const std::vector<double>*>& channels, const nlohmann::json& extra = {});
PogridData decode_pogrid(const std::string& bytes);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

nlohmann::json grid_descriptor(const ProductGrid& grid);

}  // namespace rseik
