#pragma once

// Monte Carlo reference for the myopic VOC, shared by the unit tests and the
// acceptance suite.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "mgpo/belief.hpp"
#include "mgpo/rng.hpp"
#include "mgpo/voc.hpp"

namespace oracle {

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    int changes = 0; // samples where the best path value moved
    int samples = 0;
};

// Standard normal quantile from a lower-tail probability q in (0, 0.5] or the
// upper tail (upper = true, q = 1 - u), accurate far into either tail.
inline double normal_quantile_tail(double q, bool upper) {
    const double z = std::sqrt(2.0) * boost::math::erfc_inv(2.0 * q);
    return upper ? z : -z;
}

// E[r_max(b') - r_max(b)] for one inspection, o ~ N(mu, sqrt(1/tau + 1/tau_obs)).
// The difference is not truncated at zero: for a node on the best path a low
// observation lowers r_max, and that loss is part of the expectation.
//
// The n draws are stratified on the observation quantile u. The central range
// [2^-10, 1 - 2^-10] is cut into equal-probability strata with two draws each;
// each tail is cut dyadically, [2^-(j+1), 2^-j) for j = 10..49 plus [0, 2^-50),
// with 200 draws per stratum. Plan changes for a far-off node live in those
// tails, so even a one-in-a-million change is seen by thousands of draws and
// the SE is not estimated from a handful of values as with plain sampling.
inline McEstimate mc_gain(const mgpo::BeliefState& b, const mgpo::EnvTemplate& env, mgpo::NodeId node,
                          double tau_obs, int n, std::uint64_t seed) {
    constexpr int kFirstTail = 10, kLastTail = 50, kTailDraws = 200;
    constexpr int kTailStrata = kLastTail - kFirstTail + 1;
    const int central_pairs = (n - 2 * kTailStrata * kTailDraws) / 2;
    if (central_pairs < 1000) throw std::invalid_argument("mc_gain needs more draws");

    mgpo::SplitMix64 gen(seed);
    const double base = mgpo::best_path_value(b, env);
    const double sd = std::sqrt(1.0 / tau_obs + 1.0 / b.precision(node));
    const double mu = b.mean(node);
    McEstimate out;
    mgpo::BeliefState next = b;
    auto gain = [&](double z) {
        next = b;
        next.apply(node, mu + sd * z, tau_obs);
        const double d = mgpo::best_path_value(next, env) - base;
        if (d != 0.0) ++out.changes;
        ++out.samples;
        return d;
    };
    // a + (b - a)(1 - v) with v in [0, 1) never reaches a, so q = 0 is impossible
    auto draw_in = [&](double lo, double hi) { return lo + (hi - lo) * (1.0 - mgpo::uniform01(gen)); };

    double mean = 0.0, var = 0.0;
    const double eps = std::ldexp(1.0, -kFirstTail);
    const double width = (1.0 - 2.0 * eps) / central_pairs;
    for (int h = 0; h < central_pairs; ++h) {
        const double lo = eps + h * width, hi = lo + width;
        double d[2];
        for (double& x : d) {
            const double u = draw_in(lo, hi);
            x = gain(u < 0.5 ? normal_quantile_tail(u, false) : normal_quantile_tail(1.0 - u, true));
        }
        mean += width * 0.5 * (d[0] + d[1]);
        var += width * width * 0.25 * (d[0] - d[1]) * (d[0] - d[1]);
    }
    for (bool upper : {false, true}) {
        for (int j = kFirstTail; j <= kLastTail; ++j) {
            const double hi = std::ldexp(1.0, -j);
            const double lo = j == kLastTail ? 0.0 : std::ldexp(1.0, -(j + 1));
            double sum = 0.0, sq = 0.0;
            for (int i = 0; i < kTailDraws; ++i) {
                const double x = gain(normal_quantile_tail(draw_in(lo, hi), upper));
                sum += x;
                sq += x * x;
            }
            const double m = sum / kTailDraws;
            const double s2 = std::max(0.0, (sq - kTailDraws * m * m) / (kTailDraws - 1));
            const double w = hi - lo;
            mean += w * m;
            var += w * w * s2 / kTailDraws;
        }
    }
    out.mean = mean;
    out.se = std::sqrt(var);
    return out;
}

struct Verdict {
    bool ok = false;
    double z = 0.0; // |closed - mc| / se, or NaN for the zero-variance rule
};

// Closed form within 4 SE of the estimate. When no draw moved the best path
// value the SE is zero and the comparison is undefined. Every draw in the
// outermost stratum [0, 2^-50) of the tail where the plan would change lies
// past the change point once p_change >= 2^-50, so zero moves are only
// consistent with a closed form whose own change probability is below that.
inline constexpr double kSmallestResolvedChange = 0x1p-50;

inline Verdict check(const mgpo::VocBreakdown& closed, const McEstimate& mc) {
    Verdict v;
    if (mc.changes == 0) {
        v.z = std::nan("");
        v.ok = closed.p_change < kSmallestResolvedChange;
        return v;
    }
    v.z = std::abs(closed.voc_pre_cost - mc.mean) / mc.se;
    v.ok = v.z <= 4.0;
    return v;
}

} // namespace oracle
