#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "omega_map/grid.hpp"
#include "omega_map/model.hpp"

namespace omap {

struct GridSpec {
    double x_min = 0.0;
    double x_max = 1.0;
    double h = 1e-3;
};

struct Config {
    MapModel model;
    OmegaFn omega = OmegaFn::constant(0.0);
    GridSpec grid;
    std::optional<std::uint64_t> seed;
};

/// Parses the JSON configuration document; collects every violated
/// invariant into one ConfigError.
Config load_config(const std::string& text);
Config load_config_file(const std::string& path);

std::string serialize_config(const Config& cfg);

}  // namespace omap
