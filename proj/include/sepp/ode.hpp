#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sepp::ode {

struct Tolerances {
    double atol = 1e-10;
    double rtol = 1e-8;
    double initial_step = 0.0; // 0: automatic
    double max_step = 0.0;     // 0: unbounded
    std::size_t max_steps = 50'000'000;
};

struct Stats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_calls = 0;
};

/// Dormand-Prince 5(4) with FSAL and an error-per-step controller.
///
/// `rhs(t, y, dydt)` fills dydt. The error norm is the max over components of
/// |err_i| / (atol + rtol * max(|y_i|, |y_new_i|)).
template <class Rhs>
class DormandPrince {
public:
    DormandPrince(Rhs rhs, Tolerances tol) : rhs_(std::move(rhs)), tol_(tol) {}

    /// Advances y from t0 to t1 (t1 > t0) and returns the accumulated statistics.
    Stats integrate(std::vector<double>& y, double t0, double t1)
    {
        if (!(t1 >= t0)) throw std::invalid_argument("DormandPrince: t1 must be >= t0");
        const std::size_t n = y.size();
        resize(n);
        if (t1 == t0) return stats_;

        rhs_(t0, y, k1_);
        ++stats_.rhs_calls;
        double h = tol_.initial_step > 0.0 ? tol_.initial_step : (h_ > 0.0 ? h_ : initial_step(y, t0, t1));
        double t = t0;
        std::size_t steps = 0;
        while (t < t1) {
            if (++steps > tol_.max_steps) throw std::runtime_error("DormandPrince: step budget exhausted");
            if (tol_.max_step > 0.0) h = std::min(h, tol_.max_step);
            bool last = false;
            if (t + h >= t1 || t + 1.0001 * h >= t1) {
                h = t1 - t;
                last = true;
            }
            const double err = attempt(y, t, h);
            if (err <= 1.0) {
                t = last ? t1 : t + h;
                y.swap(ynew_);
                k1_.swap(k7_);
                ++stats_.accepted;
                const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                if (!last) h *= fac;
                else h_ = h * fac;
            } else {
                ++stats_.rejected;
                h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
                if (!(h > 0.0) || t + h == t) throw std::runtime_error("DormandPrince: step size underflow");
            }
        }
        return stats_;
    }

    const Stats& stats() const noexcept { return stats_; }

private:
    void resize(std::size_t n)
    {
        for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) v->assign(n, 0.0);
    }

    double initial_step(const std::vector<double>& y, double t0, double t1)
    {
        // Hairer-Norsett-Wanner starting step heuristic.
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double sc = tol_.atol + tol_.rtol * std::abs(y[i]);
            d0 = std::max(d0, std::abs(y[i]) / sc);
            d1 = std::max(d1, std::abs(k1_[i]) / sc);
        }
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, t1 - t0);
        for (std::size_t i = 0; i < y.size(); ++i) tmp_[i] = y[i] + h0 * k1_[i];
        rhs_(t0 + h0, tmp_, k2_);
        ++stats_.rhs_calls;
        double d2 = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double sc = tol_.atol + tol_.rtol * std::abs(y[i]);
            d2 = std::max(d2, std::abs(k2_[i] - k1_[i]) / sc / h0);
        }
        const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                    : std::pow(0.01 / std::max(d1, d2), 0.2);
        return std::min({100.0 * h0, h1, t1 - t0});
    }

    double attempt(const std::vector<double>& y, double t, double h)
    {
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                                a64 = 49.0 / 176, a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                                b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        const std::size_t n = y.size();
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * a21 * k1_[i];
        rhs_(t + c2 * h, tmp_, k2_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
        rhs_(t + c3 * h, tmp_, k3_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
        rhs_(t + c4 * h, tmp_, k4_);
        for (std::size_t i = 0; i < n; ++i) {
            tmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
        }
        rhs_(t + c5 * h, tmp_, k5_);
        for (std::size_t i = 0; i < n; ++i) {
            tmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
        }
        rhs_(t + h, tmp_, k6_);
        for (std::size_t i = 0; i < n; ++i) {
            ynew_[i] = y[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
        }
        rhs_(t + h, ynew_, k7_);
        stats_.rhs_calls += 6;
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e =
                h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
            const double sc = tol_.atol + tol_.rtol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
            err = std::max(err, std::abs(e) / sc);
        }
        if (!std::isfinite(err)) return 1e10;
        return err;
    }

    Rhs rhs_;
    Tolerances tol_;
    Stats stats_;
    double h_ = 0.0;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
};

template <class Rhs>
DormandPrince(Rhs, Tolerances) -> DormandPrince<Rhs>;

} // namespace sepp::ode
