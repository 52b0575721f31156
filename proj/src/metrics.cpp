#include "dspc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dspc/errors.hpp"

namespace dspc::metrics {

std::vector<int> hungarian(const std::vector<double>& cost, int k) {
  if (k < 1 || static_cast<size_t>(k) * k != cost.size()) {
    throw ShapeError("hungarian: " + std::to_string(cost.size()) +
                     " entries for order " + std::to_string(k));
  }
  for (double v : cost) {
    if (!std::isfinite(v)) {
      throw NumericError("hungarian: non-finite cost entry");
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with potentials; 1-based with column 0 as the
  // staging slot.
  std::vector<double> u(static_cast<size_t>(k) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(k) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(k) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<size_t>(k) + 1, 0);
  for (int i = 1; i <= k; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(k) + 1, inf);
    std::vector<char> used(static_cast<size_t>(k) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      int i0 = match[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= k; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        double cur = cost[static_cast<size_t>(i0 - 1) * k + (j - 1)] -
                     u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(k), -1);
  for (int j = 1; j <= k; ++j) {
    if (match[static_cast<size_t>(j)] > 0) {
      row_to_col[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] =
          j - 1;
    }
  }
  return row_to_col;
}

namespace {

void check_labels(const std::vector<int>& a, const std::vector<int>& b,
                  int k) {
  if (a.size() != b.size()) {
    throw ShapeError("labels: length mismatch, " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw ShapeError("labels: empty input");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0 || (k > 0 && (a[i] >= k || b[i] >= k))) {
      throw ConfigError("labels: value out of range at index " +
                        std::to_string(i));
    }
  }
}

std::vector<int64_t> contingency_table(const std::vector<int>& labels_true,
                                       const std::vector<int>& labels_pred,
                                       int k) {
  std::vector<int64_t> table(static_cast<size_t>(k) * k, 0);
  for (size_t i = 0; i < labels_true.size(); ++i) {
    ++table[static_cast<size_t>(labels_true[i]) * k + labels_pred[i]];
  }
  return table;
}

}  // namespace

AccuracyResult accuracy(const std::vector<int>& labels_true,
                        const std::vector<int>& labels_pred, int k) {
  if (k < 1) throw ConfigError("accuracy: k must be positive");
  check_labels(labels_true, labels_pred, k);
  auto table = contingency_table(labels_true, labels_pred, k);
  // Maximize matched counts == minimize negated counts.
  std::vector<double> cost(static_cast<size_t>(k) * k);
  for (int c = 0; c < k; ++c) {
    for (int t = 0; t < k; ++t) {
      cost[static_cast<size_t>(c) * k + t] =
          -static_cast<double>(table[static_cast<size_t>(t) * k + c]);
    }
  }
  std::vector<int> perm = hungarian(cost, k);  // pred cluster -> true label
  int64_t matched = 0;
  for (int c = 0; c < k; ++c) {
    matched += table[static_cast<size_t>(perm[static_cast<size_t>(c)]) * k + c];
  }
  AccuracyResult out;
  out.acc = static_cast<double>(matched) /
            static_cast<double>(labels_true.size());
  out.permutation = std::move(perm);
  return out;
}

double nmi(const std::vector<int>& labels_true,
           const std::vector<int>& labels_pred) {
  check_labels(labels_true, labels_pred, 0);
  int kt = 0, kp = 0;
  for (int v : labels_true) kt = std::max(kt, v + 1);
  for (int v : labels_pred) kp = std::max(kp, v + 1);
  double n = static_cast<double>(labels_true.size());

  std::vector<int64_t> joint(static_cast<size_t>(kt) * kp, 0);
  std::vector<int64_t> rows(static_cast<size_t>(kt), 0);
  std::vector<int64_t> cols(static_cast<size_t>(kp), 0);
  for (size_t i = 0; i < labels_true.size(); ++i) {
    ++joint[static_cast<size_t>(labels_true[i]) * kp + labels_pred[i]];
    ++rows[static_cast<size_t>(labels_true[i])];
    ++cols[static_cast<size_t>(labels_pred[i])];
  }
  auto entropy = [&](const std::vector<int64_t>& counts) {
    double h = 0.0;
    for (int64_t c : counts) {
      if (c > 0) {
        double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
      }
    }
    return h;
  };
  double ht = entropy(rows), hp = entropy(cols);
  if (ht == 0.0 && hp == 0.0) return 1.0;  // both single-class
  if (ht == 0.0 || hp == 0.0) return 0.0;

  double info = 0.0;
  for (int t = 0; t < kt; ++t) {
    for (int p = 0; p < kp; ++p) {
      int64_t c = joint[static_cast<size_t>(t) * kp + p];
      if (c == 0) continue;
      double pj = static_cast<double>(c) / n;
      info += pj * std::log(n * static_cast<double>(c) /
                            (static_cast<double>(rows[static_cast<size_t>(t)]) *
                             static_cast<double>(cols[static_cast<size_t>(p)])));
    }
  }
  double score = info / std::max(ht, hp);
  return std::clamp(score, 0.0, 1.0);
}

EvalReport evaluate(const std::vector<int>& labels_true,
                    const std::vector<int>& labels_pred, int k) {
  AccuracyResult a = accuracy(labels_true, labels_pred, k);
  EvalReport r;
  r.acc = a.acc;
  r.nmi = nmi(labels_true, labels_pred);
  r.n = static_cast<int>(labels_true.size());
  r.k = k;
  r.contingency = contingency_table(labels_true, labels_pred, k);
  r.permutation = std::move(a.permutation);
  return r;
}

std::string csv_header() { return "dataset,seed,phase,acc,nmi,epoch"; }

std::string csv_row(const std::string& dataset, uint64_t seed,
                    const std::string& phase, const EvalReport& report,
                    int epoch) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), ",%llu,",
                static_cast<unsigned long long>(seed));
  std::string row = dataset + buf + phase;
  std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%d", report.acc, report.nmi,
                epoch);
  return row + buf;
}

}  // namespace dspc::metrics
