#include "nic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nic {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("spearman: zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
  if (x.size() < 3) throw std::invalid_argument("spearman: need at least 3 samples");
  return pearson(average_ranks(x), average_ranks(y));
}

Interval spearman_ci(const std::vector<double>& x, const std::vector<double>& y,
                     double level, CiMethod method, uint64_t seed) {
  if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("spearman_ci: bad level");
  const size_t n = x.size();
  if (method == CiMethod::fisher_z) {
    if (n < 4) throw std::invalid_argument("spearman_ci: fisher_z needs N >= 4");
    const double rho = spearman(x, y);
    const double z = std::atanh(std::clamp(rho, -1.0 + 1e-15, 1.0 - 1e-15));
    // two-sided normal quantile via bisection on the error function
    const double alpha = 1.0 - level;
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (std::erfc(mid / std::sqrt(2.0)) > alpha)
        lo = mid;
      else
        hi = mid;
    }
    const double zq = 0.5 * (lo + hi);
    const double se = 1.0 / std::sqrt(static_cast<double>(n) - 3.0);
    return {std::tanh(z - zq * se), std::tanh(z + zq * se)};
  }
  // percentile bootstrap
  if (n < 3) throw std::invalid_argument("spearman_ci: need at least 3 samples");
  constexpr int kResamples = 10000;
  Rng rng(seed);
  std::vector<double> rhos;
  rhos.reserve(kResamples);
  std::vector<double> bx(n), by(n);
  for (int r = 0; r < kResamples; ++r) {
    for (size_t i = 0; i < n; ++i) {
      const size_t j = rng.uniform_int(n);
      bx[i] = x[j];
      by[i] = y[j];
    }
    try {
      rhos.push_back(spearman(bx, by));
    } catch (const std::invalid_argument&) {
      // degenerate resample (all ties); skip
    }
  }
  if (rhos.size() < 100) throw std::runtime_error("spearman_ci: bootstrap degenerate");
  std::sort(rhos.begin(), rhos.end());
  const double alpha = 1.0 - level;
  auto pick = [&](double q) {
    const double pos = q * (rhos.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    const double frac = pos - i;
    return i + 1 < rhos.size() ? rhos[i] * (1 - frac) + rhos[i + 1] * frac : rhos[i];
  };
  return {pick(alpha / 2.0), pick(1.0 - alpha / 2.0)};
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc_roc: size mismatch");
  int64_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc_roc: single-class labels");

  // rank-sum with average ranks handles ties at 1/2
  auto ranks = average_ranks(scores);
  double rank_sum_pos = 0.0;
  for (size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) rank_sum_pos += ranks[i];
  const double u = rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<int> FoldPlan::train_indices(int rotation) const {
  std::vector<int> out;
  const int val = rotation % k;
  const int test = (rotation + 1) % k;
  for (size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == val) continue;
    if (pattern == FoldPattern::train_val_test && assignment[i] == test) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> FoldPlan::val_indices(int rotation) const {
  std::vector<int> out;
  for (size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == rotation % k) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> FoldPlan::test_indices(int rotation) const {
  if (pattern != FoldPattern::train_val_test)
    throw std::logic_error("test_indices: pattern has no test fold");
  std::vector<int> out;
  for (size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == (rotation + 1) % k) out.push_back(static_cast<int>(i));
  return out;
}

FoldPlan kfold(int sample_count, int k, FoldPattern pattern, uint64_t seed) {
  if (k < 2 || sample_count < k) throw std::invalid_argument("kfold: bad fold count");
  if (pattern == FoldPattern::train_val_test && k < 3)
    throw std::invalid_argument("kfold: train_val_test needs k >= 3");
  std::vector<int> order(sample_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.k = k;
  plan.pattern = pattern;
  plan.assignment.resize(sample_count);
  for (int i = 0; i < sample_count; ++i) plan.assignment[order[i]] = i % k;
  return plan;
}

std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& predictions) {
  if (predictions.empty()) throw std::invalid_argument("ensemble_mean: no models");
  const size_t n = predictions[0].size();
  std::vector<double> out(n, 0.0);
  for (const auto& model : predictions) {
    if (model.size() != n) throw std::invalid_argument("ensemble_mean: size mismatch");
    for (size_t i = 0; i < n; ++i) out[i] += model[i];
  }
  for (auto& v : out) v /= static_cast<double>(predictions.size());
  return out;
}

std::array<double, 4> task_inclusion_correlation(const std::vector<AblationRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("task_inclusion_correlation: no rows");
  std::array<double, 4> out{};
  std::vector<double> corr;
  for (const auto& r : rows) corr.push_back(r.correlation);
  for (int t = 0; t < 4; ++t) {
    std::vector<double> flags;
    for (const auto& r : rows) flags.push_back(r.included[static_cast<size_t>(t)] ? 1.0 : 0.0);
    out[static_cast<size_t>(t)] = spearman(flags, corr);
  }
  return out;
}

std::vector<AblationRow> read_ablation_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open ablation CSV: " + path);
  std::vector<AblationRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("lymph", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string field;
    AblationRow row;
    for (int t = 0; t < 4; ++t) {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("ablation CSV: bad row");
      row.included[static_cast<size_t>(t)] = std::stoi(field) != 0;
    }
    if (!std::getline(ss, field, ',')) throw std::runtime_error("ablation CSV: bad row");
    row.correlation = std::stod(field);
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write ablation CSV: " + path);
  f << "lymph,mitosis,prostate,colorectal,correlation\n";
  f.precision(17);
  for (const auto& r : rows) {
    for (int t = 0; t < 4; ++t) f << (r.included[static_cast<size_t>(t)] ? 1 : 0) << ',';
    f << r.correlation << "\n";
  }
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write predictions CSV: " + path);
  f << "sample_id,fold,model,prediction,label\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.sample_id << ',' << r.fold << ',' << r.model << ',' << r.prediction << ','
      << r.label << "\n";
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open predictions CSV: " + path);
  std::vector<PredictionRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("sample_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string field;
    PredictionRow row;
    std::getline(ss, row.sample_id, ',');
    std::getline(ss, field, ',');
    row.fold = std::stoi(field);
    std::getline(ss, field, ',');
    row.model = std::stoi(field);
    std::getline(ss, field, ',');
    row.prediction = std::stod(field);
    if (!std::getline(ss, field, ',')) throw std::runtime_error("predictions CSV: bad row");
    row.label = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace nic
