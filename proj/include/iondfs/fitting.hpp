#pragma once

#include "iondfs/qstate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace iondfs {

// One time point of a two-outcome measurement: k successes out of n shots at
// storage time t.
struct BinomialPoint {
    double t = 0.0;
    int k = 0;
    int n = 0;
};

struct ExpFitResult {
    double amplitude = 0.0;  // contrast A in p = (1 + A exp(-t/tau)) / 2
    double tau = 0.0;
    double loglik = 0.0;
    double tau_lower = 0.0;
    double tau_upper = 0.0;  // +inf when the data cannot bound the decay
    bool tau_upper_unbounded = false;
};

namespace detail {

inline double golden_max(const std::function<double(double)>& f, double a, double b, int iters,
                         double* arg_out = nullptr) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < iters; ++it) {
        if (fc > fd) {
            b = d; d = c; fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    if (arg_out) *arg_out = 0.5 * (a + b);
    return std::max(fc, fd);
}

}  // namespace detail

// Maximum-likelihood fit of an exponential contrast decay to binomial count
// data, p(t) = (1 + A e^{-t/tau}) / 2 with A in [0, 1]. The 68% confidence
// interval on tau comes from the profile likelihood (drop of 0.494); the
// upper end is reported unbounded when even tau -> inf stays within the
// drop, as happens when no decay is visible in the data.
inline ExpFitResult mle_fit_exponential(const std::vector<BinomialPoint>& data) {
    if (data.size() < 2) throw std::invalid_argument("exponential fit needs at least two points");
    for (const auto& pt : data)
        if (pt.n < 1 || pt.k < 0 || pt.k > pt.n || pt.t < 0.0)
            throw std::invalid_argument("invalid binomial point");

    auto loglik = [&](double a, double tau) {
        double s = 0.0;
        for (const auto& pt : data) {
            double p = 0.5 * (1.0 + a * std::exp(-pt.t / tau));
            p = std::clamp(p, 1e-12, 1.0 - 1e-12);
            s += pt.k * std::log(p) + (pt.n - pt.k) * std::log(1.0 - p);
        }
        return s;
    };
    auto profile = [&](double tau) {
        return detail::golden_max([&](double a) { return loglik(a, tau); }, 0.0, 1.0, 60);
    };

    const double lt_min = std::log(50.0), lt_max = std::log(1e7);
    double best_lt = lt_min;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 60; ++i) {
        const double lt = lt_min + (lt_max - lt_min) * i / 59.0;
        const double v = profile(std::exp(lt));
        if (v > best) { best = v; best_lt = lt; }
    }
    const double span = (lt_max - lt_min) / 59.0;
    double lt_hat;
    detail::golden_max([&](double lt) { return profile(std::exp(lt)); },
                       std::max(lt_min, best_lt - span), std::min(lt_max, best_lt + span), 40,
                       &lt_hat);

    ExpFitResult res;
    res.tau = std::exp(lt_hat);
    res.loglik = profile(res.tau);
    detail::golden_max([&](double a) { return loglik(a, res.tau); }, 0.0, 1.0, 60, &res.amplitude);

    const double kDrop = 0.494;  // 68% profile-likelihood interval
    const double target = res.loglik - kDrop;

    double lo = std::log(1.0), hi = lt_hat;
    if (profile(std::exp(lo)) > target) {
        res.tau_lower = std::exp(lo);
    } else {
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (profile(std::exp(mid)) < target ? lo : hi) = mid;
        }
        res.tau_lower = std::exp(0.5 * (lo + hi));
    }
    double hi2 = std::log(1e9);
    if (profile(std::exp(hi2)) > target) {
        res.tau_upper = std::numeric_limits<double>::infinity();
        res.tau_upper_unbounded = true;
    } else {
        double lo2 = lt_hat;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo2 + hi2);
            (profile(std::exp(mid)) < target ? hi2 : lo2) = mid;
        }
        res.tau_upper = std::exp(0.5 * (lo2 + hi2));
    }
    return res;
}

// One sample of a decaying oscillation with a symmetric uncertainty.
struct SinusoidPoint {
    double t = 0.0;
    double y = 0.0;
    double sigma = 1.0;
};

struct SinusoidFitResult {
    double amplitude = 0.0;
    double period = 0.0;
    double phase = 0.0;
    double decay_time = 0.0;  // +inf when the decay is not resolved
    bool decay_unbounded = false;
    double chi2 = 0.0;
    bool converged = false;
};

// Least-squares fit of y(t) = A cos(2 pi t / P + phase) e^{-t/Td} by
// Levenberg-Marquardt with numeric derivatives. `period_hint` seeds the
// oscillation period; a coarse grid around the hint avoids the many local
// minima of sinusoid fitting.
inline SinusoidFitResult fit_sinusoid_decay(const std::vector<SinusoidPoint>& data,
                                            double period_hint, double decay_hint = 0.0) {
    if (data.size() < 4) throw std::invalid_argument("sinusoid fit needs at least four points");
    if (period_hint <= 0.0) throw std::invalid_argument("period hint must be positive");
    double t_span = 0.0;
    for (const auto& pt : data) t_span = std::max(t_span, pt.t);
    if (decay_hint <= 0.0) decay_hint = 10.0 * t_span;

    // params: A, P, phase, log decay
    auto model = [&](const std::array<double, 4>& q, double t) {
        return q[0] * std::cos(2.0 * std::numbers::pi * t / q[1] + q[2]) * std::exp(-t / std::exp(q[3]));
    };
    auto chi2 = [&](const std::array<double, 4>& q) {
        double s = 0.0;
        for (const auto& pt : data) {
            const double r = (pt.y - model(q, pt.t)) / pt.sigma;
            s += r * r;
        }
        return s;
    };

    std::array<double, 4> best{1.0, period_hint, 0.0, std::log(decay_hint)};
    double best_chi2 = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (double pscale : {0.9, 1.0, 1.1}) {
        for (double ph0 : {0.0, std::numbers::pi / 2, std::numbers::pi, 3 * std::numbers::pi / 2}) {
            std::array<double, 4> q{1.0, period_hint * pscale, ph0, std::log(decay_hint)};
            double mu = 1e-3;
            double c = chi2(q);
            for (int it = 0; it < 200; ++it) {
                Eigen::MatrixXd j(data.size(), 4);
                Eigen::VectorXd r(data.size());
                for (std::size_t i = 0; i < data.size(); ++i) {
                    r(i) = (data[i].y - model(q, data[i].t)) / data[i].sigma;
                    for (int p = 0; p < 4; ++p) {
                        std::array<double, 4> qp = q;
                        const double h = 1e-7 * std::max(1.0, std::abs(q[p]));
                        qp[p] += h;
                        j(i, p) = (model(qp, data[i].t) - model(q, data[i].t)) / (h * data[i].sigma);
                    }
                }
                const Eigen::MatrixXd jtj = j.transpose() * j;
                const Eigen::VectorXd g = j.transpose() * r;
                Eigen::MatrixXd damped = jtj;
                damped.diagonal() *= 1.0 + mu;
                const Eigen::VectorXd step = damped.ldlt().solve(g);
                std::array<double, 4> qn = q;
                for (int p = 0; p < 4; ++p) qn[p] += step(p);
                const double cn = chi2(qn);
                if (cn < c) {
                    const bool done = c - cn < 1e-12 * (1.0 + c);
                    q = qn;
                    c = cn;
                    mu = std::max(mu * 0.3, 1e-12);
                    if (done) break;
                } else {
                    mu *= 3.0;
                    if (mu > 1e12) break;
                }
            }
            if (c < best_chi2) {
                best_chi2 = c;
                best = q;
                converged = true;
            }
        }
    }

    SinusoidFitResult res;
    res.amplitude = best[0];
    res.period = std::abs(best[1]);
    res.phase = best[2];
    res.decay_time = std::exp(best[3]);
    res.chi2 = best_chi2;
    res.converged = converged;
    if (res.decay_time > 100.0 * t_span) {
        res.decay_unbounded = true;
        res.decay_time = std::numeric_limits<double>::infinity();
    }
    if (res.amplitude < 0.0) {
        res.amplitude = -res.amplitude;
        res.phase += std::numbers::pi;
    }
    res.phase = std::remainder(res.phase, 2.0 * std::numbers::pi);
    return res;
}

}  // namespace iondfs
