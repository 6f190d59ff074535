#include "vila/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace vila {

namespace {

// Rank-based Mann-Whitney AUC for one class: average rank of positives with
// midranks for ties.
double auc_binary(const std::vector<double>& score, const std::vector<int>& is_pos) {
    const std::size_t n = score.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
        const double mid = (double(i) + double(j)) / 2.0 + 1.0;  // 1-based midrank
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t t = 0; t < n; ++t)
        if (is_pos[t]) {
            rank_sum += rank[t];
            ++n_pos;
        }
    const std::size_t n_neg = n - n_pos;
    return (rank_sum - double(n_pos) * (n_pos + 1) / 2.0) / (double(n_pos) * n_neg);
}

}  // namespace

double auc_macro(const std::vector<std::vector<double>>& scores,
                 const std::vector<int>& labels, int n_classes) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_macro: empty or mismatched inputs");
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> s(scores.size());
        std::vector<int> pos(scores.size());
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            s[i] = scores[i].at(c);
            pos[i] = labels[i] == c;
            n_pos += pos[i];
        }
        if (n_pos == 0 || n_pos == scores.size()) {
            std::cerr << "warning: auc_macro skipping class " << c
                      << " (no positives or no negatives)\n";
            continue;
        }
        sum += auc_binary(s, pos);
        ++counted;
    }
    if (counted == 0)
        throw std::invalid_argument("auc_macro: no class had both positives and negatives");
    return sum / counted;
}

double f1_macro(const std::vector<int>& predictions, const std::vector<int>& labels,
                int n_classes) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw std::invalid_argument("f1_macro: empty or mismatched inputs");
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool p = predictions[i] == c, l = labels[i] == c;
            tp += p && l;
            fp += p && !l;
            fn += !p && l;
        }
        if (tp + fp + fn == 0) {
            std::cerr << "warning: f1_macro skipping class " << c
                      << " (absent from predictions and labels)\n";
            continue;
        }
        sum += 2.0 * double(tp) / double(2 * tp + fp + fn);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / counted;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw std::invalid_argument("accuracy: empty or mismatched inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return double(correct) / labels.size();
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    // symmetry: use the expansion on the fast-converging side
    if (x > (a + 1.0) / (a + b + 2.0))
        return 1.0 - incomplete_beta(b, a, 1.0 - x);
    const double ln_prefix = a * std::log(x) + b * std::log(1.0 - x) -
                             std::log(a) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    // Lentz continued fraction for the CF part of I_x(a, b)
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(ln_prefix) * h;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired_t_test: need equal lengths >= 2");
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    double var = 0.0;
    for (double d : diff) var += (d - mean) * (d - mean);
    var /= double(n - 1);

    TTestResult res;
    if (var == 0.0) {
        if (mean == 0.0) {
            res.p_value = 1.0;
        } else {
            // zero variance, nonzero mean: t diverges
            res.p_value = 1e-300;
            res.t_statistic = std::numeric_limits<double>::infinity();
            res.degenerate = true;
        }
        return res;
    }
    const double df = double(n - 1);
    res.t_statistic = mean / std::sqrt(var / n);
    const double t2 = res.t_statistic * res.t_statistic;
    res.p_value = incomplete_beta(df / 2.0, 0.5, df / (df + t2));
    return res;
}

}  // namespace vila
