#pragma once

// Inter-rater reliability (Krippendorff's alpha, ordinal metric) and the
// paired Wilcoxon signed-rank test.

#include "mive/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mive::stats {

/// raters x items; std::nullopt marks a missing rating.
using RatingTable = std::vector<std::vector<std::optional<double>>>;

struct CoincidenceMatrix {
    std::vector<double> values;  // sorted distinct categories
    Eigen::MatrixXd o;           // o(c, k)
    std::vector<double> marginals;
    double n = 0;
};

inline CoincidenceMatrix coincidences(const RatingTable& r) {
    if (r.size() < 2) throw DataError("alpha needs at least two raters");
    const std::size_t items = r.front().size();
    for (const auto& row : r)
        if (row.size() != items) throw ShapeError("ragged rating table");
    std::vector<double> cats;
    for (const auto& row : r)
        for (const auto& v : row)
            if (v) cats.push_back(*v);
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    std::map<double, int> index;
    for (std::size_t i = 0; i < cats.size(); ++i) index[cats[i]] = static_cast<int>(i);

    CoincidenceMatrix cm;
    cm.values = cats;
    cm.o = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cats.size()), static_cast<Eigen::Index>(cats.size()));
    for (std::size_t u = 0; u < items; ++u) {
        std::vector<int> vals;
        for (const auto& row : r)
            if (row[u]) vals.push_back(index[*row[u]]);
        const std::size_t m = vals.size();
        if (m < 2) continue;  // unpairable
        std::vector<double> counts(cats.size(), 0.0);
        for (int v : vals) counts[static_cast<std::size_t>(v)] += 1;
        for (std::size_t c = 0; c < cats.size(); ++c)
            for (std::size_t k = 0; k < cats.size(); ++k)
                cm.o(c, k) += counts[c] * (counts[k] - (c == k ? 1 : 0)) / static_cast<double>(m - 1);
    }
    cm.marginals.resize(cats.size());
    for (std::size_t c = 0; c < cats.size(); ++c) cm.marginals[c] = cm.o.row(static_cast<Eigen::Index>(c)).sum();
    for (double v : cm.marginals) cm.n += v;
    if (cm.n == 0) throw DataError("alpha needs at least one item rated by two or more raters");
    return cm;
}

/// Squared ordinal distance between category ranks c <= k given marginals.
inline double ordinal_delta2(const std::vector<double>& n, std::size_t c, std::size_t k) {
    if (c > k) std::swap(c, k);
    double s = 0;
    for (std::size_t g = c; g <= k; ++g) s += n[g];
    s -= (n[c] + n[k]) / 2.0;
    return s * s;
}

inline double krippendorff_alpha_ordinal(const RatingTable& ratings) {
    const CoincidenceMatrix cm = coincidences(ratings);
    const std::size_t q = cm.values.size();
    double observed = 0, expected = 0;
    for (std::size_t c = 0; c < q; ++c)
        for (std::size_t k = 0; k < q; ++k) {
            const double d2 = ordinal_delta2(cm.marginals, c, k);
            observed += cm.o(c, k) * d2;
            expected += cm.marginals[c] * cm.marginals[k] * d2;
        }
    if (observed == 0) return 1.0;
    if (expected == 0) throw DataError("alpha undefined: no variation in ratings");
    return 1.0 - (cm.n - 1) * observed / expected;
}

// ---------------------------------------------------------------------------

struct WilcoxonResult {
    bool degenerate = false;  // every paired difference was zero
    int n = 0;                // non-zero pairs used
    double w_plus = 0, w_minus = 0;
    double statistic = 0;     // min(W+, W-)
    double p_two_sided = 1.0;
    bool exact = false;
    std::string note;
};

inline constexpr int wilcoxon_exact_max_n = 25;

/// Average ranks (1-based) of |d|, ties sharing the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& a) {
    std::vector<std::size_t> order(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
    std::vector<double> ranks(a.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && a[order[j + 1]] == a[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("wilcoxon: paired vectors differ in length");
    if (x.empty()) throw DataError("wilcoxon: need at least one pair");
    std::vector<double> d;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) d.push_back(x[i] - y[i]);
    WilcoxonResult r;
    r.n = static_cast<int>(d.size());
    if (d.empty()) {
        r.degenerate = true;
        r.note = "degenerate: no nonzero pairs";
        return r;
    }
    std::vector<double> absd(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
    const auto ranks = average_ranks(absd);
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
    r.statistic = std::min(r.w_plus, r.w_minus);

    if (r.n <= wilcoxon_exact_max_n) {
        // Ranks are multiples of 1/2: count sign assignments over doubled ranks.
        std::vector<int> twice(ranks.size());
        int total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) total += twice[i] = static_cast<int>(std::lround(2 * ranks[i]));
        std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
        ways[0] = 1;
        for (int t : twice)
            for (int s = total; s >= t; --s) ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - t)];
        const int obs = static_cast<int>(std::lround(2 * r.statistic));
        double tail = 0;
        for (int s = 0; s <= obs; ++s) tail += ways[static_cast<std::size_t>(s)];
        r.p_two_sided = std::min(1.0, 2.0 * tail / std::ldexp(1.0, r.n));
        r.exact = true;
    } else {
        const double n = r.n;
        double tie = 0;
        std::map<double, int> groups;
        for (double v : absd) ++groups[v];
        for (const auto& [v, t] : groups) tie += static_cast<double>(t) * t * t - t;
        const double mean = n * (n + 1) / 4.0;
        const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie / 48.0;
        const double z = (r.statistic - mean) / std::sqrt(var);
        r.p_two_sided = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
        r.note = "normal approximation with tie correction";
    }
    return r;
}

}  // namespace mive::stats
