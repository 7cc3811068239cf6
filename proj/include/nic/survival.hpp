#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nic {

struct SurvivalRecord {
  double follow_up = 0.0;  // months
  bool event = false;      // true = death observed
};

struct KmPoint {
  double time;
  double survival;  // S(t) just after this event time
  int at_risk;
  int events;
};

struct KmCurve {
  std::vector<KmPoint> points;  // at distinct event times, ascending
};

struct LogRankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
};

struct MedianSplit {
  std::vector<int> low;   // indices with risk <= median
  std::vector<int> high;  // indices with risk > median
  double median = 0.0;
  bool degenerate = false;  // all risks tied: everything fell into `low`
};

// product-limit estimator over distinct observed event times
KmCurve kaplan_meier(const std::vector<SurvivalRecord>& records);

// two-group log-rank test, 1 degree of freedom
LogRankResult log_rank_test(const std::vector<SurvivalRecord>& group_a,
                            const std::vector<SurvivalRecord>& group_b);

// upper-tail chi-square probability via regularized incomplete gamma
// (series / continued fraction, no statistics library)
double chi_square_p_value(double statistic, int dof);

// lower regularized incomplete gamma P(a, x)
double regularized_gamma_p(double a, double x);

MedianSplit median_risk_split(const std::vector<double>& risks);

// cohort CSV: subject_id,follow_up_months,event[,risk]
struct CohortRow {
  std::string id;
  SurvivalRecord record;
  double risk = 0.0;
  bool has_risk = false;
};
std::vector<CohortRow> read_cohort_csv(const std::string& path);
void write_cohort_csv(const std::vector<CohortRow>& rows, const std::string& path);
void write_km_csv(const KmCurve& curve, const std::string& path);

}  // namespace nic
