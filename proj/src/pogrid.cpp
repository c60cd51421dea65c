#include "rseik/pogrid.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rseik/errors.hpp"

namespace rseik {

static_assert(std::endian::native == std::endian::little, "POGRID1 IO assumes a little-endian host");

nlohmann::json grid_descriptor(const ProductGrid& grid) {
    const auto& s = grid.spatial;
    nlohmann::json dims = nlohmann::json::array();
    for (int i = 0; i < s.d; ++i) dims.push_back(s.dims[i]);
    dims.push_back(grid.sphere.size());
    nlohmann::json origin = nlohmann::json::array();
    for (int i = 0; i < s.d; ++i) origin.push_back(s.origin(i));
    return {{"d", s.d},
            {"dims", dims},
            {"h", s.h},
            {"origin", origin},
            {"sphere", {{"kind", sphere_kind_name(grid.sphere.kind)}, {"k_or_N", grid.sphere.level_or_count}}}};
}

std::string encode_pogrid(const ProductGrid& grid, const std::string& quantity,
                          const std::vector<const std::vector<double>*>& channels, const nlohmann::json& extra) {
    nlohmann::json hdr = grid_descriptor(grid);
    hdr["magic"] = pogrid_magic;
    hdr["quantity"] = quantity;
    if (channels.size() != 1) hdr["channels"] = channels.size();
    for (auto it = extra.begin(); it != extra.end(); ++it) hdr[it.key()] = it.value();
    std::string out = hdr.dump() + "\n";
    const std::size_t n = grid.size();
    std::size_t base = out.size();
    out.resize(base + 4 * n * channels.size());
    char* dst = out.data() + base;
    for (const auto* ch : channels) {
        if (ch->size() != n) throw DomainError("channel length does not match the grid");
        for (double v : *ch) {
            float f = static_cast<float>(v);
            std::memcpy(dst, &f, 4);
            dst += 4;
        }
    }
    return out;
}

PogridData decode_pogrid(const std::string& bytes) {
    auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw ParseError("byte 0: no newline-terminated header found");
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("header JSON malformed at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    auto require = [&](const char* key) -> const nlohmann::json& {
        if (!hdr.is_object() || !hdr.contains(key)) throw ParseError(std::string("header (bytes 0-") + std::to_string(nl) + ") lacks field '" + key + "'");
        return hdr.at(key);
    };
    try {
        if (require("magic") != pogrid_magic)
            throw ParseError("byte 0: wrong magic " + require("magic").dump() + ", expected \"POGRID1\"");
        int d = require("d").get<int>();
        auto dims = require("dims").get<std::vector<int>>();
        double h = require("h").get<double>();
        auto origin = require("origin").get<std::vector<double>>();
        const auto& sph = require("sphere");
        std::string kind = sph.at("kind").get<std::string>();
        int kn = sph.at("k_or_N").get<int>();
        if (d != 2 && d != 3) throw ParseError("header: d must be 2 or 3");
        if (static_cast<int>(dims.size()) != d + 1 || static_cast<int>(origin.size()) != d)
            throw ParseError("header: dims must have d+1 entries and origin d entries");
        ProductGrid grid;
        std::array<int, 3> sd{1, 1, 1};
        Vec3 o = Vec3::Zero();
        for (int i = 0; i < d; ++i) {
            sd[i] = dims[i];
            o(i) = origin[i];
        }
        grid.spatial = SpatialGrid::make(d, sd, h, o);
        if (kind == "s1_uniform") {
            if (d != 2) throw ParseError("header: s1_uniform sphere requires d = 2");
            grid.sphere = build_s1(kn);
        } else if (kind == "s2_icosphere") {
            if (d != 3) throw ParseError("header: s2_icosphere sphere requires d = 3");
            if (kn < 0 || kn > 8) throw ParseError("header: icosphere level out of range");
            grid.sphere = build_s2_icosphere(kn);
        } else {
            throw ParseError("header: unknown sphere kind '" + kind + "'");
        }
        if (grid.sphere.size() != dims[d])
            throw ParseError("header: orientation count " + std::to_string(dims[d]) + " does not match sphere with " +
                             std::to_string(grid.sphere.size()) + " vertices");
        int nch = hdr.contains("channels") ? hdr.at("channels").get<int>() : 1;
        if (nch < 1) throw ParseError("header: channels must be positive");
        const std::size_t n = grid.size();
        const std::size_t expected = n * nch;
        const std::size_t payload = bytes.size() - (nl + 1);
        if (payload != 4 * expected)
            throw ParseError("payload starting at byte " + std::to_string(nl + 1) + " holds " + std::to_string(payload) +
                             " bytes (" + std::to_string(payload / 4) + " values) but header dims imply " +
                             std::to_string(expected) + " values (" + std::to_string(4 * expected) + " bytes)");
        PogridData out;
        out.grid = std::move(grid);
        out.quantity = require("quantity").get<std::string>();
        out.header = hdr;
        const char* src = bytes.data() + nl + 1;
        out.channels.resize(nch);
        for (int c = 0; c < nch; ++c) {
            out.channels[c].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                float f;
                std::memcpy(&f, src, 4);
                src += 4;
                out.channels[c][i] = f;
            }
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("header (bytes 0-") + std::to_string(nl) + ") has a field of the wrong type: " + e.what());
    } catch (const ParseError&) {
        throw;
    } catch (const DomainError& e) {
        throw ParseError(std::string("header (bytes 0-") + std::to_string(nl) + "): " + e.what());
    }
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DomainError("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace rseik
