#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dspc::metrics {

// Minimum-cost assignment on a square k x k cost matrix (row-major).
// Returns row -> column. O(k^3) shortest augmenting paths.
std::vector<int> hungarian(const std::vector<double>& cost, int k);

struct AccuracyResult {
  double acc = 0.0;
  std::vector<int> permutation;  // predicted cluster -> matched true label
};

// Fraction of samples whose predicted cluster, after the optimal
// cluster-to-label matching, equals the true label. Labels must lie in
// [0, k).
AccuracyResult accuracy(const std::vector<int>& labels_true,
                        const std::vector<int>& labels_pred, int k);

// Mutual information between the two partitions normalized by the larger
// entropy (natural log). Degenerate conventions: 1.0 when both partitions
// are single-class, 0.0 when exactly one is.
double nmi(const std::vector<int>& labels_true,
           const std::vector<int>& labels_pred);

struct EvalReport {
  double acc = 0.0;
  double nmi = 0.0;
  int n = 0;
  int k = 0;
  std::vector<int64_t> contingency;  // k x k: [true * k + pred] counts
  std::vector<int> permutation;      // predicted cluster -> true label
};

EvalReport evaluate(const std::vector<int>& labels_true,
                    const std::vector<int>& labels_pred, int k);

// Flat CSV row for a report; pairs with csv_header().
std::string csv_header();
std::string csv_row(const std::string& dataset, uint64_t seed,
                    const std::string& phase, const EvalReport& report,
                    int epoch);

}  // namespace dspc::metrics
