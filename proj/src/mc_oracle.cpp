#include "omega_map/mc_oracle.hpp"

#include <atomic>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <thread>

namespace omap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- RNG: per-path xoshiro256++ streams seeded through splitmix64 ---------

struct SplitMix64 {
    std::uint64_t s;
    std::uint64_t next() {
        s += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = s;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

struct Xoshiro256pp {
    std::uint64_t s[4];

    static Xoshiro256pp for_path(std::uint64_t seed, std::uint64_t path_index) {
        SplitMix64 sm{seed ^ (0x9E3779B97F4A7C15ULL * (path_index + 1))};
        Xoshiro256pp r;
        do {
            for (auto& si : r.s) si = sm.next();
        } while ((r.s[0] | r.s[1] | r.s[2] | r.s[3]) == 0);
        return r;
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t next() {
        std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    double uniform() { return (next() >> 11) * 0x1.0p-53; }          // [0, 1)
    double uniform_open() { return ((next() >> 11) + 0.5) * 0x1.0p-53; }  // (0, 1)
    double exponential() { return -std::log(uniform_open()); }
};

// --- Ziggurat standard normal (Marsaglia-Tsang, 128 layers) ---------------

struct Ziggurat {
    std::uint32_t kn[128];
    double wn[128];
    double fn[128];
    static constexpr double kR = 3.442619855899;

    Ziggurat() {
        const double m1 = 2147483648.0;
        double dn = kR, tn = kR;
        const double vn = 9.91256303526217e-3;
        double q = vn / std::exp(-0.5 * dn * dn);
        kn[0] = static_cast<std::uint32_t>((dn / q) * m1);
        kn[1] = 0;
        wn[0] = q / m1;
        wn[127] = dn / m1;
        fn[0] = 1.0;
        fn[127] = std::exp(-0.5 * dn * dn);
        for (int i = 126; i >= 1; --i) {
            dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
            kn[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
            tn = dn;
            fn[i] = std::exp(-0.5 * dn * dn);
            wn[i] = dn / m1;
        }
    }

    double sample(Xoshiro256pp& rng) const {
        for (;;) {
            std::int32_t hz = static_cast<std::int32_t>(rng.next() >> 32);
            std::uint32_t iz = static_cast<std::uint32_t>(hz) & 127u;
            if (static_cast<std::uint32_t>(std::abs(hz)) < kn[iz]) return hz * wn[iz];
            // slow path
            if (iz == 0) {
                double x, y;
                do {
                    x = -std::log(rng.uniform_open()) / kR;
                    y = -std::log(rng.uniform_open());
                } while (y + y < x * x);
                return hz > 0 ? kR + x : -(kR + x);
            }
            double x = hz * wn[iz];
            if (fn[iz] + rng.uniform() * (fn[iz - 1] - fn[iz]) < std::exp(-0.5 * x * x))
                return x;
        }
    }
};

const Ziggurat& ziggurat() {
    static const Ziggurat z;
    return z;
}

// --- shared stepping context ----------------------------------------------

struct StepCtx {
    const MapModel* model = nullptr;
    const OmegaFn* om = nullptr;
    double dt = 1e-3;
    double t_max = 200.0;
    bool bridge = true;
    double lambda = 0.0;
    int n = 0;
    std::vector<double> mu_dt, sig_sdt;  // per state, full-step drift and stdev

    StepCtx(const MapModel& m, const OmegaFn& o, const PathConfig& cfg)
        : model(&m), om(&o), dt(cfg.dt), t_max(cfg.t_max), bridge(cfg.bridge_correction),
          lambda(o.bound()), n(m.n_states()) {
        mu_dt.resize(n);
        sig_sdt.resize(n);
        const double sdt = std::sqrt(dt);
        for (int i = 0; i < n; ++i) {
            mu_dt[i] = m.mu(i) * dt;
            sig_sdt[i] = m.sigma(i) * sdt;
        }
    }

    int next_state(Xoshiro256pp& rng, int j) const {
        const double rate = -model->q_gen(j, j);
        double u = rng.uniform() * rate;
        double acc = 0.0;
        int last = j == 0 ? 1 : 0;
        for (int k = 0; k < n; ++k) {
            if (k == j) continue;
            acc += model->q_gen(j, k);
            last = k;
            if (u < acc) return k;
        }
        return last;
    }
};

int thread_count(const PathConfig& cfg) {
    int t = cfg.n_threads;
    if (t <= 0) {
        t = static_cast<int>(std::thread::hardware_concurrency());
        if (t <= 0) t = 1;
    }
    if (const char* env = std::getenv("OMEGA_MAP_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) t = std::min(t, cap);
    }
    return t;
}

// Runs fn(path_index, rng) over all paths on a worker pool; per-chunk
// outputs are folded by the caller in chunk order, so estimates do not
// depend on the thread count.
template <class ChunkFn>
void run_chunked(long n_paths, int threads, long chunk_size, ChunkFn&& fn) {
    const long n_chunks = (n_paths + chunk_size - 1) / chunk_size;
    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            long c = next.fetch_add(1);
            if (c >= n_chunks) return;
            long lo = c * chunk_size;
            long hi = std::min(n_paths, lo + chunk_size);
            fn(c, lo, hi);
        }
    };
    if (threads <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

// --- exit paths ------------------------------------------------------------

// Outcome codes: [0, n)   up-crossing in state j
//                [n, 2n)  down-crossing in state j
//                2n       killed
//                2n + 1   censored at t_max
int run_exit_path(Xoshiro256pp& rng, const StepCtx& cx, double d, double x0, double c,
                  int j0) {
    const auto& zig = ziggurat();
    const int n = cx.n;
    double t = 0.0, x = x0, kint = 0.0;
    int j = j0;
    const double e_kill = cx.lambda > 0.0 ? rng.exponential() : kInf;
    double w_here = cx.om->eval(j, x);

    while (t < cx.t_max) {
        const double rate = -cx.model->q_gen(j, j);
        const double hold = rate > 0.0 ? rng.exponential() / rate : kInf;
        const double t_switch = std::min(t + hold, cx.t_max);
        while (t < t_switch - 1e-15) {
            const double dt_i = std::min(cx.dt, t_switch - t);
            const bool full = dt_i == cx.dt;
            const double sdt = full ? cx.sig_sdt[j] : cx.model->sigma(j) * std::sqrt(dt_i);
            const double drift = full ? cx.mu_dt[j] : cx.model->mu(j) * dt_i;
            const double xn = x + drift + sdt * zig.sample(rng);
            const double w_next = cx.om->eval(j, xn);
            const double kinc = 0.5 * (w_here + w_next) * dt_i;

            double u_kill = 2.0, u_up = 2.0, u_dn = 2.0;
            if (kint + kinc >= e_kill) u_kill = kinc > 0 ? (e_kill - kint) / kinc : 0.0;
            if (xn >= c) {
                u_up = xn > x ? std::max(0.0, (c - x) / (xn - x)) : 0.0;
            } else if (cx.bridge && x < c) {
                const double expo = -2.0 * (c - x) * (c - xn) / (sdt * sdt);
                if (expo > -40.0 && rng.uniform() < std::exp(expo)) u_up = 0.5;
            }
            if (xn < d) {
                u_dn = xn < x ? std::max(0.0, (x - d) / (x - xn)) : 0.0;
            } else if (cx.bridge && x > d) {
                const double expo = -2.0 * (x - d) * (xn - d) / (sdt * sdt);
                if (expo > -40.0 && rng.uniform() < std::exp(expo)) u_dn = 0.5;
            }
            const double umin = std::min({u_kill, u_up, u_dn});
            if (umin <= 1.0) {
                if (u_kill == umin) return 2 * n;
                return u_up <= u_dn ? j : n + j;
            }
            x = xn;
            kint += kinc;
            w_here = w_next;
            t += dt_i;
        }
        if (t_switch >= cx.t_max) break;
        t = t_switch;
        j = cx.next_state(rng, j);
        w_here = cx.om->eval(j, x);
    }
    return 2 * n + 1;
}

McEstimate binomial_estimate(int n, int j0, const std::vector<long>& counts, long total,
                             long censored, int offset) {
    McEstimate e;
    e.mean = Matrix::Zero(n, n);
    e.std_err = Matrix::Zero(n, n);
    e.n_paths = total;
    e.n_censored = censored;
    for (int j = 0; j < n; ++j) {
        double p = static_cast<double>(counts[offset + j]) / total;
        e.mean(j0, j) = p;
        e.std_err(j0, j) = std::sqrt(std::max(0.0, p * (1.0 - p) / total));
    }
    return e;
}

}  // namespace

ExitEstimates simulate_exit(const MapModel& model, const OmegaFn& om, double d,
                            double x0, double c, int j0, const PathConfig& cfg) {
    if (!(d <= x0 && x0 <= c)) throw ConfigError("exit simulation needs d <= x0 <= c");
    if (j0 < 0 || j0 >= model.n_states()) throw ConfigError("start state out of range");
    if (!(cfg.dt > 0) || cfg.n_paths < 1) throw ConfigError("bad path configuration");
    const StepCtx cx(model, om, cfg);
    const int n = cx.n;

    const long chunk = 4096;
    const long n_chunks = (cfg.n_paths + chunk - 1) / chunk;
    std::vector<std::vector<long>> counts(n_chunks, std::vector<long>(2 * n + 2, 0));
    run_chunked(cfg.n_paths, thread_count(cfg), chunk, [&](long ci, long lo, long hi) {
        auto& slot = counts[ci];
        for (long p = lo; p < hi; ++p) {
            auto rng = Xoshiro256pp::for_path(cfg.seed, static_cast<std::uint64_t>(p));
            ++slot[run_exit_path(rng, cx, d, x0, c, j0)];
        }
    });
    std::vector<long> total(2 * n + 2, 0);
    for (const auto& slot : counts)
        for (std::size_t i = 0; i < slot.size(); ++i) total[i] += slot[i];

    ExitEstimates out;
    out.up = binomial_estimate(n, j0, total, cfg.n_paths, total[2 * n + 1], 0);
    out.down = binomial_estimate(n, j0, total, cfg.n_paths, total[2 * n + 1], n);
    return out;
}

ExitEstimates simulate_exit_matrix(const MapModel& model, const OmegaFn& om, double d,
                                   double x0, double c, const PathConfig& cfg) {
    const int n = model.n_states();
    ExitEstimates all;
    all.up.mean = Matrix::Zero(n, n);
    all.up.std_err = Matrix::Zero(n, n);
    all.down.mean = Matrix::Zero(n, n);
    all.down.std_err = Matrix::Zero(n, n);
    all.up.n_paths = all.down.n_paths = cfg.n_paths * n;
    for (int j0 = 0; j0 < n; ++j0) {
        PathConfig sub = cfg;
        sub.seed = cfg.seed + 0x100000001ULL * static_cast<std::uint64_t>(j0 + 1);
        ExitEstimates one = simulate_exit(model, om, d, x0, c, j0, sub);
        all.up.mean.row(j0) = one.up.mean.row(j0);
        all.up.std_err.row(j0) = one.up.std_err.row(j0);
        all.down.mean.row(j0) = one.down.mean.row(j0);
        all.down.std_err.row(j0) = one.down.std_err.row(j0);
        all.up.n_censored += one.up.n_censored;
        all.down.n_censored += one.down.n_censored;
    }
    return all;
}

// --- dividends --------------------------------------------------------------

namespace {

struct DivPathOut {
    double total = 0.0;
    int terminal = 0;  // 0..n-1 ruin state, n censored
};

DivPathOut run_dividend_path(Xoshiro256pp& rng, const StepCtx& cx, double floor_d,
                             double x0, double c, int j0, double discount) {
    const auto& zig = ziggurat();
    const int n = cx.n;
    const double d = -floor_d;
    DivPathOut out;
    double t = 0.0, x = std::min(x0, c), kint = 0.0, disc = 1.0;
    if (x0 > c) out.total = x0 - c;  // immediate lump
    int j = j0;
    const double e_kill = cx.lambda > 0.0 ? rng.exponential() : kInf;
    double w_here = cx.om->eval(j, x);
    const double fac_full = std::exp(-discount * cx.dt);

    while (t < cx.t_max) {
        const double rate = -cx.model->q_gen(j, j);
        const double hold = rate > 0.0 ? rng.exponential() / rate : kInf;
        const double t_switch = std::min(t + hold, cx.t_max);
        while (t < t_switch - 1e-15) {
            const double dt_i = std::min(cx.dt, t_switch - t);
            const bool full = dt_i == cx.dt;
            const double sdt = full ? cx.sig_sdt[j] : cx.model->sigma(j) * std::sqrt(dt_i);
            const double drift = full ? cx.mu_dt[j] : cx.model->mu(j) * dt_i;
            const double b0 = x;
            const double b1 = b0 + drift + sdt * zig.sample(rng);

            // reflection at c: bridge-max sampling refines the local time
            double l_inc = 0.0;
            if (cx.bridge) {
                const double var = sdt * sdt;
                bool maybe = b1 > c;
                if (!maybe) {
                    const double expo = -2.0 * (c - b0) * (c - b1) / var;
                    maybe = expo > -40.0;
                }
                if (maybe) {
                    const double u = rng.uniform_open();
                    const double disc2 = (b1 - b0) * (b1 - b0) - 2.0 * var * std::log(u);
                    const double m = 0.5 * (b0 + b1 + std::sqrt(disc2));
                    l_inc = std::max(0.0, m - c);
                }
            } else {
                l_inc = std::max(0.0, b1 - c);
            }
            const double xn = b1 - l_inc;

            const double w_next = cx.om->eval(j, xn);
            const double kinc = 0.5 * (w_here + w_next) * dt_i;
            double u_kill = 2.0, u_dn = 2.0;
            if (kint + kinc >= e_kill) u_kill = kinc > 0 ? (e_kill - kint) / kinc : 0.0;
            if (xn < d) {
                u_dn = xn < b0 ? std::max(0.0, (b0 - d) / (b0 - xn)) : 0.0;
            } else if (cx.bridge && b0 > d) {
                const double expo = -2.0 * (b0 - d) * (xn - d) / (sdt * sdt);
                if (expo > -40.0 && rng.uniform() < std::exp(expo)) u_dn = 0.5;
            }
            const double umin = std::min(u_kill, u_dn);
            if (umin <= 1.0) {
                out.total += disc * l_inc * std::min(1.0, umin);
                out.terminal = j;
                return out;
            }
            out.total += disc * l_inc;
            x = xn;
            kint += kinc;
            w_here = w_next;
            t += dt_i;
            disc *= full ? fac_full : std::exp(-discount * dt_i);
        }
        if (t_switch >= cx.t_max) break;
        t = t_switch;
        j = cx.next_state(rng, j);
        w_here = cx.om->eval(j, x);
    }
    out.terminal = n;  // censored
    return out;
}

}  // namespace

DividendSim simulate_dividends(const MapModel& model, const OmegaFn& om, double floor_d,
                               double x0, double c, int j0, double discount,
                               const PathConfig& cfg) {
    if (!(x0 > -floor_d)) throw ConfigError("dividend simulation needs x0 > -d");
    if (!(c > 0)) throw ConfigError("dividend simulation needs c > 0");
    if (j0 < 0 || j0 >= model.n_states()) throw ConfigError("start state out of range");
    const StepCtx cx(model, om, cfg);
    const int n = cx.n;

    struct ChunkAcc {
        std::vector<double> sum, sumsq;  // per terminal bucket (n + 1)
        std::vector<long> count;
        double total_sum = 0.0, total_sumsq = 0.0;
        ChunkAcc(int nn) : sum(nn + 1, 0.0), sumsq(nn + 1, 0.0), count(nn + 1, 0) {}
    };
    const long chunk = 2048;
    const long n_chunks = (cfg.n_paths + chunk - 1) / chunk;
    std::vector<ChunkAcc> acc(n_chunks, ChunkAcc(n));
    run_chunked(cfg.n_paths, thread_count(cfg), chunk, [&](long ci, long lo, long hi) {
        auto& a = acc[ci];
        for (long p = lo; p < hi; ++p) {
            auto rng = Xoshiro256pp::for_path(cfg.seed, static_cast<std::uint64_t>(p));
            DivPathOut r = run_dividend_path(rng, cx, floor_d, x0, c, j0, discount);
            a.sum[r.terminal] += r.total;
            a.sumsq[r.terminal] += r.total * r.total;
            ++a.count[r.terminal];
            a.total_sum += r.total;
            a.total_sumsq += r.total * r.total;
        }
    });

    DividendSim out;
    out.n_paths = cfg.n_paths;
    out.by_terminal = Vector::Zero(n);
    out.by_terminal_se = Vector::Zero(n);
    std::vector<double> sum(n + 1, 0.0), sumsq(n + 1, 0.0);
    std::vector<long> count(n + 1, 0);
    double ts = 0.0, tss = 0.0;
    for (const auto& a : acc) {
        for (int k = 0; k <= n; ++k) {
            sum[k] += a.sum[k];
            sumsq[k] += a.sumsq[k];
            count[k] += a.count[k];
        }
        ts += a.total_sum;
        tss += a.total_sumsq;
    }
    const double np = static_cast<double>(cfg.n_paths);
    for (int k = 0; k < n; ++k) {
        // contribution E[V; terminal = k]: zero off-terminal paths included
        double mean = sum[k] / np;
        double var = std::max(0.0, sumsq[k] / np - mean * mean);
        out.by_terminal(k) = mean;
        out.by_terminal_se(k) = std::sqrt(var / np);
    }
    out.total_mean = ts / np;
    out.total_se = std::sqrt(std::max(0.0, tss / np - out.total_mean * out.total_mean) / np);
    out.n_censored = count[n];
    return out;
}

// --- resolvent ---------------------------------------------------------------

ResolventSim simulate_resolvent(const MapModel& model, const OmegaFn& om, double d,
                                double x0, double c, int j0, int n_bins,
                                const PathConfig& cfg) {
    if (!(d < c) || !(d <= x0 && x0 <= c))
        throw ConfigError("resolvent simulation needs d <= x0 <= c");
    if (n_bins < 1) throw ConfigError("resolvent simulation needs at least one bin");
    if (j0 < 0 || j0 >= model.n_states()) throw ConfigError("start state out of range");
    const StepCtx cx(model, om, cfg);
    const int n = cx.n;
    const double width = (c - d) / n_bins;
    const int cells = n_bins * n;

    struct ChunkAcc {
        std::vector<double> s1, s2;
        long censored = 0;
        ChunkAcc(int cells_) : s1(cells_, 0.0), s2(cells_, 0.0) {}
    };
    const long chunk = 1024;
    const long n_chunks = (cfg.n_paths + chunk - 1) / chunk;
    std::vector<ChunkAcc> acc(n_chunks, ChunkAcc(cells));

    run_chunked(cfg.n_paths, thread_count(cfg), chunk, [&](long ci, long lo, long hi) {
        auto& a = acc[ci];
        const auto& zig = ziggurat();
        std::vector<double> local(cells);
        for (long p = lo; p < hi; ++p) {
            auto rng = Xoshiro256pp::for_path(cfg.seed, static_cast<std::uint64_t>(p));
            std::fill(local.begin(), local.end(), 0.0);
            double t = 0.0, x = x0, kint = 0.0;
            int j = j0;
            bool censored = true;
            while (t < cx.t_max) {
                const double rate = -cx.model->q_gen(j, j);
                const double hold = rate > 0.0 ? rng.exponential() / rate : kInf;
                const double t_switch = std::min(t + hold, cx.t_max);
                bool done = false;
                double w_here = cx.om->eval(j, x);
                while (t < t_switch - 1e-15) {
                    const double dt_i = std::min(cx.dt, t_switch - t);
                    const bool full = dt_i == cx.dt;
                    const double sdt =
                        full ? cx.sig_sdt[j] : cx.model->sigma(j) * std::sqrt(dt_i);
                    const double drift = full ? cx.mu_dt[j] : cx.model->mu(j) * dt_i;
                    // deposit the weighted occupancy of the current step
                    int bin = static_cast<int>((x - d) / width);
                    if (bin >= 0 && bin < n_bins)
                        local[bin * n + j] += std::exp(-kint) * dt_i;
                    const double xn = x + drift + sdt * zig.sample(rng);
                    const double w_next = cx.om->eval(j, xn);
                    kint += 0.5 * (w_here + w_next) * dt_i;
                    bool hit = xn >= c || xn < d;
                    if (!hit && cx.bridge) {
                        const double e_up = -2.0 * (c - x) * (c - xn) / (sdt * sdt);
                        const double e_dn = -2.0 * (x - d) * (xn - d) / (sdt * sdt);
                        if (e_up > -40.0 && rng.uniform() < std::exp(e_up)) hit = true;
                        else if (e_dn > -40.0 && rng.uniform() < std::exp(e_dn)) hit = true;
                    }
                    if (hit) {
                        done = true;
                        censored = false;
                        break;
                    }
                    x = xn;
                    w_here = w_next;
                    t += dt_i;
                }
                if (done || t_switch >= cx.t_max) break;
                t = t_switch;
                j = cx.next_state(rng, j);
            }
            if (censored) ++a.censored;
            for (int i = 0; i < cells; ++i) {
                a.s1[i] += local[i];
                a.s2[i] += local[i] * local[i];
            }
        }
    });

    ResolventSim out;
    out.n_paths = cfg.n_paths;
    out.density = Matrix::Zero(n_bins, n);
    out.density_se = Matrix::Zero(n_bins, n);
    out.y_centers.resize(n_bins);
    for (int b = 0; b < n_bins; ++b) out.y_centers[b] = d + (b + 0.5) * width;
    std::vector<double> s1(cells, 0.0), s2(cells, 0.0);
    for (const auto& a : acc) {
        out.n_censored += a.censored;
        for (int i = 0; i < cells; ++i) {
            s1[i] += a.s1[i];
            s2[i] += a.s2[i];
        }
    }
    const double np = static_cast<double>(cfg.n_paths);
    for (int b = 0; b < n_bins; ++b)
        for (int j = 0; j < n; ++j) {
            const int i = b * n + j;
            if (s2[i] == 0.0) {
                out.density(b, j) = 0.0;
                out.density_se(b, j) = kInf;
                continue;
            }
            double mean = s1[i] / np;
            double var = std::max(0.0, s2[i] / np - mean * mean);
            out.density(b, j) = mean / width;
            out.density_se(b, j) = std::sqrt(var / np) / width;
        }
    return out;
}

}  // namespace omap
