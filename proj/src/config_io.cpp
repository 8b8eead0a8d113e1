#include "omega_map/config_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace omap {

using nlohmann::json;

namespace {

Vector to_vector(const json& j) {
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

Matrix to_matrix(const json& j) {
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j[0].size() : 0;
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) throw ConfigError("Q rows must all have the same length");
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

OmegaFn parse_omega(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return OmegaFn::constant(j.at("beta").get<double>());
    if (kind == "per_state") return OmegaFn::per_state(to_vector(j.at("values")));
    if (kind == "step")
        return OmegaFn::step(j.at("levels").get<std::vector<double>>(),
                             j.at("values").get<std::vector<double>>());
    if (kind == "affine_band")
        return OmegaFn::affine_band(j.at("gamma0").get<double>(),
                                    j.at("gamma1").get<double>(), j.at("d").get<double>());
    if (kind == "tabulated") {
        std::vector<Vector> rows;
        for (const auto& row : j.at("values")) rows.push_back(to_vector(row));
        return OmegaFn::tabulated(j.at("x").get<std::vector<double>>(), std::move(rows));
    }
    throw ConfigError("unknown omega kind: " + kind);
}

json omega_to_json(const OmegaFn& om) {
    json j;
    switch (om.kind()) {
        case OmegaFn::Kind::Constant:
            j["kind"] = "constant";
            j["beta"] = om.beta();
            break;
        case OmegaFn::Kind::PerState: {
            j["kind"] = "per_state";
            std::vector<double> v(om.values().data(), om.values().data() + om.values().size());
            j["values"] = v;
            break;
        }
        case OmegaFn::Kind::Step:
            j["kind"] = "step";
            j["levels"] = om.levels();
            j["values"] = om.step_values();
            break;
        case OmegaFn::Kind::AffineBand:
            j["kind"] = "affine_band";
            j["gamma0"] = om.gamma0();
            j["gamma1"] = om.gamma1();
            j["d"] = om.band_d();
            break;
        case OmegaFn::Kind::Tabulated: {
            j["kind"] = "tabulated";
            j["x"] = om.tab_x();
            json rows = json::array();
            for (const auto& row : om.tab_values()) {
                std::vector<double> v(row.data(), row.data() + row.size());
                rows.push_back(v);
            }
            j["values"] = rows;
            break;
        }
    }
    return j;
}

}  // namespace

Config load_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }

    std::vector<std::string> bad;
    Matrix q;
    Vector sigma, mu;
    try {
        q = to_matrix(j.at("Q"));
        sigma = to_vector(j.at("sigma"));
        mu = to_vector(j.at("mu"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("missing or malformed model fields: ") + e.what());
    }
    if (j.contains("n_states")) {
        auto n = j["n_states"].get<Eigen::Index>();
        if (n != sigma.size())
            bad.push_back("n_states does not match the sigma length");
    }
    auto model_bad = MapModel::check(q, sigma, mu);
    bad.insert(bad.end(), model_bad.begin(), model_bad.end());

    OmegaFn omega = OmegaFn::constant(0.0);
    if (j.contains("omega")) {
        try {
            omega = parse_omega(j["omega"]);
        } catch (const ConfigError& e) {
            for (const auto& v : e.violations()) bad.push_back(v);
        } catch (const json::exception& e) {
            bad.push_back(std::string("malformed omega: ") + e.what());
        }
    }
    for (const auto& v : omega.check(static_cast<int>(sigma.size()))) bad.push_back(v);

    GridSpec grid;
    if (j.contains("grid")) {
        try {
            grid.x_min = j["grid"].at("x_min").get<double>();
            grid.x_max = j["grid"].at("x_max").get<double>();
            grid.h = j["grid"].at("h").get<double>();
        } catch (const json::exception& e) {
            bad.push_back(std::string("malformed grid: ") + e.what());
        }
        if (!(grid.h > 0)) bad.push_back("grid.h must be > 0");
        if (!(grid.x_max > grid.x_min)) bad.push_back("grid.x_max must exceed grid.x_min");
    }

    if (!bad.empty()) throw ConfigError(std::move(bad));

    Config cfg{MapModel{std::move(q), std::move(sigma), std::move(mu)}, std::move(omega),
               grid, std::nullopt};
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config_not_found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str());
}

std::string serialize_config(const Config& cfg) {
    json j;
    const int n = cfg.model.n_states();
    j["n_states"] = n;
    json q = json::array();
    for (int i = 0; i < n; ++i) {
        json row = json::array();
        for (int k = 0; k < n; ++k) row.push_back(cfg.model.q_gen(i, k));
        q.push_back(row);
    }
    j["Q"] = q;
    j["sigma"] = std::vector<double>(cfg.model.sigma.data(), cfg.model.sigma.data() + n);
    j["mu"] = std::vector<double>(cfg.model.mu.data(), cfg.model.mu.data() + n);
    j["omega"] = omega_to_json(cfg.omega);
    j["grid"] = {{"x_min", cfg.grid.x_min}, {"x_max", cfg.grid.x_max}, {"h", cfg.grid.h}};
    if (cfg.seed) j["seed"] = *cfg.seed;
    return j.dump(2);
}

}  // namespace omap
