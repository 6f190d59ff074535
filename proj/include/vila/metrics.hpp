#pragma once

#include <vector>

namespace vila {

// One-vs-rest AUC per class, rank-based with ties counted 0.5, macro
// averaged. scores[i] is the per-class score row for sample i. Classes with
// no positives or no negatives are skipped with a warning.
double auc_macro(const std::vector<std::vector<double>>& scores,
                 const std::vector<int>& labels, int n_classes);

// Per-class F1 = 2PR/(P+R), zero when P+R = 0; classes absent from both
// predictions and labels are skipped from the macro mean.
double f1_macro(const std::vector<int>& predictions, const std::vector<int>& labels,
                int n_classes);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct TTestResult {
    double p_value = 1.0;
    double t_statistic = 0.0;
    bool degenerate = false;  // zero-variance differences with nonzero mean
};

// Two-sided paired t-test on a - b, df = n-1. The p-value comes from the
// regularized incomplete beta function: p = I_{df/(df+t^2)}(df/2, 1/2).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), evaluated by continued fraction
// (Lentz's method). Exposed for the t-distribution tests.
double incomplete_beta(double a, double b, double x);

}  // namespace vila
