#include "omega_map/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace omap {

namespace {

constexpr double kRowSumTol = 1e-12;

bool strongly_connected(const Matrix& q) {
    const int n = static_cast<int>(q.rows());
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v = 0; v < n; ++v) {
                if (v == u || seen[v]) continue;
                double rate = transpose ? q(v, u) : q(u, v);
                if (rate > 0.0) {
                    seen[v] = 1;
                    ++count;
                    stack.push_back(v);
                }
            }
        }
        return count == n;
    };
    return reach_all(false) && reach_all(true);
}

}  // namespace

std::vector<std::string> MapModel::check(const Matrix& q_gen, const Vector& sigma,
                                         const Vector& mu) {
    std::vector<std::string> bad;
    const auto n = sigma.size();
    if (n < 1) bad.push_back("model must have at least one state");
    if (q_gen.rows() != q_gen.cols())
        bad.push_back("Q must be square");
    else if (q_gen.rows() != n)
        bad.push_back("Q dimension does not match sigma length");
    if (mu.size() != n) bad.push_back("mu length does not match sigma length");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(sigma(i) > 0.0)) {
            std::ostringstream os;
            os << "sigma[" << i << "] must be > 0, got " << sigma(i);
            bad.push_back(os.str());
        }
    if (q_gen.rows() == n && q_gen.cols() == n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i != j && q_gen(i, j) < -kRowSumTol) {
                    std::ostringstream os;
                    os << "Q[" << i << "][" << j << "] off-diagonal entry is negative";
                    bad.push_back(os.str());
                }
            }
            double rs = q_gen.row(i).sum();
            if (std::abs(rs) > kRowSumTol) {
                std::ostringstream os;
                os << "Q row " << i << " sums to " << rs << " (must be 0 within 1e-12)";
                bad.push_back(os.str());
            }
        }
        if (n > 1 && !strongly_connected(q_gen))
            bad.push_back("Q is not irreducible");
    }
    return bad;
}

MapModel MapModel::validated(Matrix q_gen, Vector sigma, Vector mu) {
    auto bad = check(q_gen, sigma, mu);
    if (!bad.empty()) throw ConfigError(std::move(bad));
    return MapModel{std::move(q_gen), std::move(sigma), std::move(mu)};
}

Matrix laplace_exponent(const MapModel& model, double alpha) {
    const auto s2 = model.sigma2();
    Matrix f = model.q_gen;
    f.diagonal() += (0.5 * alpha * alpha) * s2 + alpha * model.mu;
    return f;
}

Vector stationary_distribution(const MapModel& model) {
    const int n = model.n_states();
    if (n == 1) return Vector::Ones(1);
    Matrix a = model.q_gen.transpose();
    a.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b(n - 1) = 1.0;
    Vector pi = a.fullPivLu().solve(b);
    return pi;
}

double mean_drift(const MapModel& model) {
    return stationary_distribution(model).dot(model.mu);
}

// ---------------------------------------------------------------------------
// OmegaFn

OmegaFn OmegaFn::constant(double beta) {
    OmegaFn f;
    f.kind_ = Kind::Constant;
    f.beta_ = beta;
    f.finalize();
    return f;
}

OmegaFn OmegaFn::per_state(Vector values) {
    OmegaFn f;
    f.kind_ = Kind::PerState;
    f.values_ = std::move(values);
    f.finalize();
    return f;
}

OmegaFn OmegaFn::step(std::vector<double> levels, std::vector<double> values) {
    OmegaFn f;
    f.kind_ = Kind::Step;
    f.levels_ = std::move(levels);
    f.step_values_ = std::move(values);
    if (f.step_values_.size() != f.levels_.size() + 1)
        throw ConfigError("step omega needs exactly one more value than levels");
    for (std::size_t j = 1; j < f.levels_.size(); ++j)
        if (!(f.levels_[j] > f.levels_[j - 1]))
            throw ConfigError("step omega levels must be strictly increasing");
    f.finalize();
    return f;
}

OmegaFn OmegaFn::affine_band(double gamma0, double gamma1, double d) {
    OmegaFn f;
    f.kind_ = Kind::AffineBand;
    f.gamma0_ = gamma0;
    f.gamma1_ = gamma1;
    f.band_d_ = d;
    if (!(d >= 0.0)) throw ConfigError("affine band width d must be >= 0");
    if (gamma0 < 0.0 || gamma0 + gamma1 * d < 0.0)
        throw ConfigError("affine band omega is negative somewhere on [-d, 0]");
    f.finalize();
    return f;
}

OmegaFn OmegaFn::tabulated(std::vector<double> x, std::vector<Vector> values) {
    OmegaFn f;
    f.kind_ = Kind::Tabulated;
    f.tab_x_ = std::move(x);
    f.tab_values_ = std::move(values);
    if (f.tab_x_.size() != f.tab_values_.size() || f.tab_x_.empty())
        throw ConfigError("tabulated omega needs one value row per x node");
    for (std::size_t j = 1; j < f.tab_x_.size(); ++j)
        if (!(f.tab_x_[j] > f.tab_x_[j - 1]))
            throw ConfigError("tabulated omega x grid must be strictly increasing");
    const auto n = f.tab_values_.front().size();
    for (const auto& row : f.tab_values_)
        if (row.size() != n)
            throw ConfigError("tabulated omega value rows must all have the same length");
    f.finalize();
    return f;
}

void OmegaFn::finalize() {
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    switch (kind_) {
        case Kind::Constant:
            hi = beta_;
            lo = beta_;
            break;
        case Kind::PerState:
            hi = values_.maxCoeff();
            lo = values_.minCoeff();
            break;
        case Kind::Step:
            for (double p : step_values_) {
                hi = std::max(hi, p);
                lo = std::min(lo, p);
            }
            break;
        case Kind::AffineBand:
            hi = std::max({0.0, gamma0_, gamma0_ + gamma1_ * band_d_});
            lo = 0.0;
            break;
        case Kind::Tabulated:
            for (const auto& row : tab_values_) {
                hi = std::max(hi, row.maxCoeff());
                lo = std::min(lo, row.minCoeff());
            }
            break;
    }
    if (lo < 0.0) throw ConfigError("omega must be nonnegative everywhere");
    bound_ = hi;
}

int OmegaFn::n_states_hint() const {
    if (kind_ == Kind::PerState) return static_cast<int>(values_.size());
    if (kind_ == Kind::Tabulated) return static_cast<int>(tab_values_.front().size());
    return 0;
}

double OmegaFn::eval(int state, double x) const {
    const double z = x + shift_;
    switch (kind_) {
        case Kind::Constant:
            return beta_;
        case Kind::PerState:
            if (state < 0 || state >= values_.size())
                throw ConfigError("omega state index out of range");
            return values_(state);
        case Kind::Step: {
            std::size_t idx = 0;
            while (idx < levels_.size() && z > levels_[idx]) ++idx;
            return step_values_[idx];
        }
        case Kind::AffineBand:
            if (z < -band_d_ || z > 0.0) return 0.0;
            return gamma0_ + gamma1_ * (z + band_d_);
        case Kind::Tabulated: {
            if (state < 0 || state >= tab_values_.front().size())
                throw ConfigError("omega state index out of range");
            if (z <= tab_x_.front()) return tab_values_.front()(state);
            if (z >= tab_x_.back()) return tab_values_.back()(state);
            auto it = std::upper_bound(tab_x_.begin(), tab_x_.end(), z);
            std::size_t j = static_cast<std::size_t>(it - tab_x_.begin());
            double w = (z - tab_x_[j - 1]) / (tab_x_[j] - tab_x_[j - 1]);
            return (1.0 - w) * tab_values_[j - 1](state) + w * tab_values_[j](state);
        }
    }
    return 0.0;
}

double OmegaFn::quadrature_value(int state, double x) const {
    auto near = [](double a, double b) {
        return std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b));
    };
    const double z = x + shift_;
    if (kind_ == Kind::Step) {
        for (std::size_t j = 0; j < levels_.size(); ++j)
            if (near(z, levels_[j]))
                return 0.5 * (step_values_[j] + step_values_[j + 1]);
    } else if (kind_ == Kind::AffineBand) {
        if (near(z, -band_d_)) return 0.5 * gamma0_;
        if (near(z, 0.0)) return 0.5 * (gamma0_ + gamma1_ * band_d_);
    }
    return eval(state, x);
}

double OmegaFn::lower_bound() const {
    switch (kind_) {
        case Kind::Constant:
            return beta_;
        case Kind::PerState:
            return values_.minCoeff();
        case Kind::Step:
            return *std::min_element(step_values_.begin(), step_values_.end());
        case Kind::AffineBand:
            return 0.0;
        case Kind::Tabulated: {
            double lo = std::numeric_limits<double>::infinity();
            for (const auto& row : tab_values_) lo = std::min(lo, row.minCoeff());
            return lo;
        }
    }
    return 0.0;
}

bool OmegaFn::is_constant_in_x() const {
    if (kind_ == Kind::Constant || kind_ == Kind::PerState) return true;
    if (kind_ == Kind::Step && levels_.empty()) return true;
    return bound_ == 0.0;
}

Vector OmegaFn::constant_vector(int n_states) const {
    if (!is_constant_in_x()) throw NumericalError("omega is not constant in x");
    Vector v(n_states);
    for (int i = 0; i < n_states; ++i) v(i) = eval(i, 0.0);
    return v;
}

double OmegaFn::tail_start() const {
    const double lowest = -std::numeric_limits<double>::infinity();
    switch (kind_) {
        case Kind::Constant:
        case Kind::PerState:
            return lowest;
        case Kind::Step:
            return levels_.empty() ? lowest : levels_.back() - shift_;
        case Kind::AffineBand:
            return bound_ == 0.0 ? lowest : -shift_;
        case Kind::Tabulated:
            return tab_x_.back() - shift_;
    }
    return lowest;
}

Vector OmegaFn::tail_values(int n_states) const {
    double t = tail_start();
    double probe = std::isfinite(t) ? t + 1.0 : 0.0;
    Vector v(n_states);
    for (int i = 0; i < n_states; ++i) v(i) = eval(i, probe);
    return v;
}

std::optional<double> OmegaFn::left_constant() const {
    switch (kind_) {
        case Kind::Constant:
            return beta_;
        case Kind::PerState: {
            double v = values_(0);
            for (Eigen::Index i = 1; i < values_.size(); ++i)
                if (values_(i) != v) return std::nullopt;
            return v;
        }
        case Kind::Step:
            if (levels_.empty() || levels_.front() - shift_ >= 0.0)
                return step_values_.front();
            return std::nullopt;
        case Kind::AffineBand:
            if (bound_ == 0.0) return 0.0;
            return (-band_d_ - shift_ >= 0.0) ? std::optional<double>(0.0) : std::nullopt;
        case Kind::Tabulated: {
            if (tab_x_.front() - shift_ < 0.0) return std::nullopt;
            const Vector& row = tab_values_.front();
            double v = row(0);
            for (Eigen::Index i = 1; i < row.size(); ++i)
                if (row(i) != v) return std::nullopt;
            return v;
        }
    }
    return std::nullopt;
}

std::vector<double> OmegaFn::jump_points() const {
    std::vector<double> pts;
    if (kind_ == Kind::Step) {
        for (double l : levels_) pts.push_back(l - shift_);
    } else if (kind_ == Kind::AffineBand && bound_ > 0.0) {
        pts.push_back(-band_d_ - shift_);
        if (gamma0_ + gamma1_ * band_d_ != 0.0) pts.push_back(-shift_);
    }
    return pts;
}

OmegaFn OmegaFn::shifted(double y) const {
    OmegaFn f = *this;
    f.shift_ += y;
    return f;
}

const std::vector<std::string>& OmegaFn::check(int n_states) const {
    check_cache_.clear();
    int hint = n_states_hint();
    if (hint != 0 && hint != n_states)
        check_cache_.push_back("omega value rows do not match the model state count");
    return check_cache_;
}

}  // namespace omap
