#include "fedbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedbench {

const char* metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::Accuracy: return "accuracy";
        case MetricKind::BalancedAccuracy: return "balanced_accuracy";
        case MetricKind::AucRoc: return "auc_roc";
    }
    return "?";
}

MetricKind metric_from_name(const std::string& name) {
    if (name == "accuracy") return MetricKind::Accuracy;
    if (name == "balanced_accuracy") return MetricKind::BalancedAccuracy;
    if (name == "auc_roc") return MetricKind::AucRoc;
    throw MetricError("unknown metric '" + name + "'");
}

namespace {

double accuracy(std::span<const double> scores, std::span<const int> labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] > 0.5 ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double balanced_accuracy(std::span<const double> scores,
                         std::span<const int> labels) {
    // mean per-class recall over classes present
    std::size_t n0 = 0, n1 = 0, hit0 = 0, hit1 = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] > 0.5 ? 1 : 0;
        if (labels[i] == 1) {
            ++n1;
            if (pred == 1) ++hit1;
        } else {
            ++n0;
            if (pred == 0) ++hit0;
        }
    }
    double total = 0.0;
    int classes = 0;
    if (n0 > 0) {
        total += static_cast<double>(hit0) / static_cast<double>(n0);
        ++classes;
    }
    if (n1 > 0) {
        total += static_cast<double>(hit1) / static_cast<double>(n1);
        ++classes;
    }
    return total / classes;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw MetricError("auc_roc requires both classes in the labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    // Sweep thresholds downward; samples with tied scores enter together so a
    // tie produces one diagonal step.
    double area = 0.0;
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        double dtp = 0.0, dfp = 0.0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1)
                dtp += 1.0;
            else
                dfp += 1.0;
            ++j;
        }
        const double tp2 = tp + dtp;
        const double fp2 = fp + dfp;
        area += (fp2 - fp) * (tp + tp2) / 2.0;
        tp = tp2;
        fp = fp2;
        i = j;
    }
    return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

double evaluate_metric(const Matrix& scores, std::span<const int> labels,
                       MetricKind kind) {
    if (scores.cols != 1)
        throw MetricError("evaluate_metric: scores must be a single column");
    if (scores.rows == 0) throw MetricError("evaluate_metric: empty test set");
    if (scores.rows != labels.size())
        throw MetricError("evaluate_metric: " + std::to_string(scores.rows) +
                          " scores vs " + std::to_string(labels.size()) +
                          " labels");
    std::span<const double> s(scores.values);
    switch (kind) {
        case MetricKind::Accuracy: return accuracy(s, labels);
        case MetricKind::BalancedAccuracy: return balanced_accuracy(s, labels);
        case MetricKind::AucRoc: return auc_roc(s, labels);
    }
    throw MetricError("evaluate_metric: bad kind");
}

MetricReport MetricReport::from_values(MetricKind kind,
                                       std::vector<double> values) {
    MetricReport r;
    r.kind = kind;
    r.per_client = std::move(values);
    double sum = 0.0;
    for (double v : r.per_client) sum += v;
    r.mean_over_clients =
        r.per_client.empty() ? 0.0
                             : sum / static_cast<double>(r.per_client.size());
    return r;
}

RunStatistics multi_run_stats(std::span<const double> values) {
    if (values.empty())
        throw MetricError("multi_run_stats: need at least one value");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    RunStatistics st;
    st.n_runs = sorted.size();
    double sum = 0.0;
    for (double v : sorted) sum += v;
    st.mean = sum / static_cast<double>(sorted.size());
    if (sorted.size() == 1) return st;

    double ss = 0.0;
    for (double v : sorted) ss += (v - st.mean) * (v - st.mean);
    const double s = std::sqrt(ss / static_cast<double>(sorted.size() - 1));
    st.ci_radius = 1.96 * s / std::sqrt(static_cast<double>(sorted.size()));
    return st;
}

RankTable rank_methods(const std::vector<std::string>& methods,
                       const std::vector<std::string>& columns,
                       const Matrix& values) {
    const std::size_t n = methods.size();
    const std::size_t c = columns.size();
    if (values.rows != n || values.cols != c)
        throw MetricError("rank_methods: value matrix is " +
                          std::to_string(values.rows) + "x" +
                          std::to_string(values.cols) + ", expected " +
                          std::to_string(n) + "x" + std::to_string(c));
    for (double v : values.values)
        if (!std::isfinite(v))
            throw MetricError("rank_methods: missing or non-finite entry");

    RankTable table;
    table.methods = methods;
    table.columns = columns;
    table.ranks = Matrix(n, c);
    for (std::size_t col = 0; col < c; ++col) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             return values.at(a, col) > values.at(b, col);
                         });
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && values.at(order[j], col) == values.at(order[i], col))
                ++j;
            // positions i+1 .. j averaged across the tied group
            const double rank =
                (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
            for (std::size_t k = i; k < j; ++k)
                table.ranks.at(order[k], col) = rank;
            i = j;
        }
    }
    table.avg_rank.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::size_t col = 0; col < c; ++col) sum += table.ranks.at(r, col);
        table.avg_rank[r] = sum / static_cast<double>(c);
    }
    return table;
}

}  // namespace fedbench
