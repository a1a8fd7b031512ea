#pragma once

// Probability correction: per-image rescaling of positive and non-positive
// logits by the share of pixels in each group, applied at inference only.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/gradcore.hpp"

namespace sanet::pcs {

struct LogitMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> logits;

    LogitMap() = default;
    LogitMap(std::size_t w, std::size_t h, std::vector<double> v) : width(w), height(h), logits(std::move(v)) {
        if (logits.size() != w * h)
            throw std::invalid_argument("LogitMap: " + std::to_string(logits.size()) + " values for " +
                                        std::to_string(w) + "x" + std::to_string(h));
    }

    std::size_t pixels() const { return width * height; }
    bool operator==(const LogitMap&) const = default;
};

struct PcsRates {
    double rate_p = 0.0;  // share of logits > 0
    double rate_n = 0.0;  // share of logits <= 0
};

// Zero logits count as negative.
inline PcsRates compute_rates(const LogitMap& m) {
    if (m.logits.empty()) throw std::invalid_argument("compute_rates: empty logit map");
    std::size_t positive = 0;
    for (double v : m.logits) positive += v > 0.0;
    PcsRates r;
    r.rate_p = static_cast<double>(positive) / static_cast<double>(m.logits.size());
    r.rate_n = 1.0 - r.rate_p;
    return r;
}

// Positive logits divided by rate_p, the rest by rate_n, with the rates
// taken once from the input. An empty group has rate 0 and no members, so
// nothing is ever divided by zero.
inline LogitMap correct(const LogitMap& m) {
    const PcsRates r = compute_rates(m);
    LogitMap out = m;
    for (double& v : out.logits) v = v > 0.0 ? v / r.rate_p : v / r.rate_n;
    return out;
}

inline std::vector<double> to_probability(const LogitMap& m) {
    std::vector<double> p(m.logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = grad::stable_sigmoid(m.logits[i]);
    return p;
}

}  // namespace sanet::pcs
