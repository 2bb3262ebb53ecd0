#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedbench/matrix.hpp"

namespace fedbench {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MetricKind { Accuracy, BalancedAccuracy, AucRoc };

const char* metric_name(MetricKind kind);
MetricKind metric_from_name(const std::string& name);

// scores: one column of class-1 scores. accuracy thresholds at 0.5, balanced
// accuracy averages per-class recall, auc_roc is the trapezoidal area under
// the score-induced ROC (ties grouped into single steps). auc requires both
// classes in `labels`.
double evaluate_metric(const Matrix& scores, std::span<const int> labels,
                       MetricKind kind);

struct MetricReport {
    MetricKind kind = MetricKind::Accuracy;
    std::vector<double> per_client;
    double mean_over_clients = 0.0;

    static MetricReport from_values(MetricKind kind, std::vector<double> values);
};

struct RunStatistics {
    double mean = 0.0;
    double ci_radius = 0.0;
    std::size_t n_runs = 0;
};

// Normal-approximation 95% interval, 1.96 * s / sqrt(n) with the sample
// (n-1) standard deviation; a single value gets radius 0. Values are summed
// in sorted order so the result is permutation-invariant.
RunStatistics multi_run_stats(std::span<const double> values);

struct RankTable {
    std::vector<std::string> methods;
    std::vector<std::string> columns;
    Matrix ranks;                  // methods x columns, 1 = best
    std::vector<double> avg_rank;  // row means
};

// Ranks each column independently; higher metric values are better. Ties get
// the average of the tied positions.
RankTable rank_methods(const std::vector<std::string>& methods,
                       const std::vector<std::string>& columns,
                       const Matrix& values);

}  // namespace fedbench
