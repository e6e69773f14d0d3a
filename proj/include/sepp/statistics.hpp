#pragma once

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sepp::stats {

/// Pairwise (cascade) summation; the result depends only on the order of xs.
inline double pairwise_sum(std::span<const double> xs)
{
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t mid = xs.size() / 2;
    return pairwise_sum(xs.first(mid)) + pairwise_sum(xs.subspan(mid));
}

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0; // unbiased
    double std_error = 0.0;
    double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
};

/// Linear-interpolated sample quantile of sorted data (type 7).
inline double quantile_sorted(std::span<const double> sorted, double p)
{
    if (sorted.empty()) return 0.0;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::span<const double> xs)
{
    Summary s;
    s.n = xs.size();
    if (xs.empty()) return s;
    s.mean = pairwise_sum(xs) / static_cast<double>(s.n);
    std::vector<double> dev(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = (xs[i] - s.mean) * (xs[i] - s.mean);
    s.variance = s.n > 1 ? pairwise_sum(dev) / static_cast<double>(s.n - 1) : 0.0;
    s.std_error = std::sqrt(s.variance / static_cast<double>(s.n));
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    s.q05 = quantile_sorted(sorted, 0.05);
    s.q25 = quantile_sorted(sorted, 0.25);
    s.q50 = quantile_sorted(sorted, 0.50);
    s.q75 = quantile_sorted(sorted, 0.75);
    s.q95 = quantile_sorted(sorted, 0.95);
    return s;
}

inline double mean(std::span<const double> xs)
{
    return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// Unbiased sample covariance.
inline double covariance(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size()) throw std::invalid_argument("covariance: size mismatch");
    if (xs.size() < 2) return 0.0;
    const double mx = mean(xs), my = mean(ys);
    std::vector<double> prod(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) prod[i] = (xs[i] - mx) * (ys[i] - my);
    return pairwise_sum(prod) / static_cast<double>(xs.size() - 1);
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0)
{
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

/// Gamma(shape, scale) distribution function.
inline double gamma_cdf(double x, double shape, double scale = 1.0)
{
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(shape, x / scale);
}

/// Sup distance between the empirical CDF of xs and a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample correction;
/// n_eff is n for one sample and n m / (n + m) for two samples.
inline double ks_p_value(double d, double n_eff)
{
    const double sq = std::sqrt(n_eff);
    const double lambda = (sq + 0.12 + 0.11 / sq) * d;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Total-variation distance between two pmfs on {0, 1, ...}; missing entries are zero.
inline double total_variation(std::span<const double> p, std::span<const double> q)
{
    const std::size_t n = std::max(p.size(), q.size());
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double a = k < p.size() ? p[k] : 0.0;
        const double b = k < q.size() ? q[k] : 0.0;
        s += std::abs(a - b);
    }
    return 0.5 * s;
}

/// Empirical pmf of nonnegative integer counts.
inline std::vector<double> empirical_pmf(std::span<const std::size_t> counts)
{
    std::size_t top = 0;
    for (std::size_t c : counts) top = std::max(top, c);
    std::vector<double> pmf(counts.empty() ? 0 : top + 1, 0.0);
    for (std::size_t c : counts) pmf[c] += 1.0;
    for (double& v : pmf) v /= static_cast<double>(counts.size());
    return pmf;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_std_error = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            rss += r * r;
        }
        f.slope_std_error = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
    }
    return f;
}

/// Weighted least-squares nonincreasing fit (pool adjacent violators).
inline std::vector<double> isotonic_decreasing(std::span<const double> y, std::span<const double> w)
{
    struct Block {
        double value, weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value < blocks.back().value) {
            Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double wt = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / wt;
            a.weight = wt;
            a.count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const Block& b : blocks) out.insert(out.end(), b.count, b.value);
    return out;
}

struct Interval {
    double lo;
    double hi;
};

/// Clopper-Pearson interval for a binomial proportion at the given confidence level.
inline Interval clopper_pearson(std::size_t successes, std::size_t trials, double confidence)
{
    const double a = 1.0 - confidence;
    const double k = static_cast<double>(successes), n = static_cast<double>(trials);
    const double lo = successes == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, a / 2.0);
    const double hi = successes == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - a / 2.0);
    return {lo, hi};
}

} // namespace sepp::stats
