#include "nic/survival.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace nic {

KmCurve kaplan_meier(const std::vector<SurvivalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("kaplan_meier: empty input");
  // events and at-risk counts per distinct event time
  std::map<double, int> deaths;
  for (const auto& r : records)
    if (r.event) deaths[r.follow_up]++;

  KmCurve curve;
  double s = 1.0;
  for (const auto& [t, d] : deaths) {
    int at_risk = 0;
    for (const auto& r : records)
      if (r.follow_up >= t) ++at_risk;
    s *= 1.0 - static_cast<double>(d) / at_risk;
    curve.points.push_back({t, s, at_risk, d});
  }
  return curve;
}

LogRankResult log_rank_test(const std::vector<SurvivalRecord>& group_a,
                            const std::vector<SurvivalRecord>& group_b) {
  if (group_a.empty() || group_b.empty())
    throw std::invalid_argument("log_rank_test: empty group");

  std::map<double, std::pair<int, int>> deaths;  // time -> (d_a, d_b)
  for (const auto& r : group_a)
    if (r.event) deaths[r.follow_up].first++;
  for (const auto& r : group_b)
    if (r.event) deaths[r.follow_up].second++;

  double sum_o_minus_e = 0.0, var = 0.0;
  for (const auto& [t, d] : deaths) {
    int na = 0, nb = 0;
    for (const auto& r : group_a)
      if (r.follow_up >= t) ++na;
    for (const auto& r : group_b)
      if (r.follow_up >= t) ++nb;
    const int n = na + nb;
    const int dk = d.first + d.second;
    if (n == 0 || dk == 0) continue;
    const double expected_a = static_cast<double>(dk) * na / n;
    sum_o_minus_e += d.first - expected_a;
    if (n > 1)
      var += static_cast<double>(dk) * (static_cast<double>(na) / n) *
             (static_cast<double>(nb) / n) * (static_cast<double>(n - dk) / (n - 1));
  }

  LogRankResult res;
  if (var <= 0.0) {
    res.chi_square = 0.0;
    res.p_value = 1.0;
    return res;
  }
  res.chi_square = sum_o_minus_e * sum_o_minus_e / var;
  res.p_value = chi_square_p_value(res.chi_square, 1);
  return res;
}

namespace {

constexpr double kGammaEps = 1e-14;
constexpr int kGammaMaxIter = 500;

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < kGammaMaxIter; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// upper incomplete gamma Q(a,x) by Lentz continued fraction
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("regularized_gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_square_p_value(double statistic, int dof) {
  if (statistic < 0.0 || dof < 1)
    throw std::invalid_argument("chi_square_p_value: bad arguments");
  if (statistic == 0.0) return 1.0;
  if (statistic < dof + 1.0) return 1.0 - gamma_p_series(dof / 2.0, statistic / 2.0);
  return gamma_q_cf(dof / 2.0, statistic / 2.0);
}

MedianSplit median_risk_split(const std::vector<double>& risks) {
  if (risks.empty()) throw std::invalid_argument("median_risk_split: empty input");
  std::vector<double> sorted = risks;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  MedianSplit split;
  split.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (size_t i = 0; i < risks.size(); ++i) {
    if (risks[i] > split.median)
      split.high.push_back(static_cast<int>(i));
    else
      split.low.push_back(static_cast<int>(i));
  }
  split.degenerate = split.high.empty();
  return split;
}

std::vector<CohortRow> read_cohort_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open cohort CSV: " + path);
  std::vector<CohortRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("subject_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string field;
    CohortRow row;
    if (!std::getline(ss, row.id, ',')) throw std::runtime_error("cohort CSV: bad row");
    if (!std::getline(ss, field, ',')) throw std::runtime_error("cohort CSV: bad row");
    row.record.follow_up = std::stod(field);
    if (!std::getline(ss, field, ',')) throw std::runtime_error("cohort CSV: bad row");
    row.record.event = std::stoi(field) != 0;
    if (std::getline(ss, field, ',')) {
      row.risk = std::stod(field);
      row.has_risk = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_cohort_csv(const std::vector<CohortRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write cohort CSV: " + path);
  f << "subject_id,follow_up_months,event";
  bool any_risk = false;
  for (const auto& r : rows) any_risk = any_risk || r.has_risk;
  if (any_risk) f << ",risk";
  f << "\n";
  f.precision(17);
  for (const auto& r : rows) {
    f << r.id << ',' << r.record.follow_up << ',' << (r.record.event ? 1 : 0);
    if (any_risk) f << ',' << r.risk;
    f << "\n";
  }
}

void write_km_csv(const KmCurve& curve, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write KM CSV: " + path);
  f << "time,survival,at_risk,events\n";
  f.precision(17);
  for (const auto& p : curve.points)
    f << p.time << ',' << p.survival << ',' << p.at_risk << ',' << p.events << "\n";
}

}  // namespace nic
