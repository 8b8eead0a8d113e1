#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace omap {

/// Invalid input data: malformed documents, violated model invariants.
/// Carries the full list of violations so callers can report all of them.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}
    explicit ConfigError(const std::string& msg)
        : std::invalid_argument(msg), violations_{msg} {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }
    std::vector<std::string> violations_;
};

/// Numerical failure: non-convergence, conditioning past threshold,
/// eigenvalue splitting problems. Distinct from bad input.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace omap
