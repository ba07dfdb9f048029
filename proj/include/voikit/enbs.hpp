#ifndef VOIKIT_ENBS_HPP
#define VOIKIT_ENBS_HPP

#include <string>
#include <vector>

#include "voikit/common.hpp"

namespace voi {

struct PopulationSpec {
  double annual_incidence = 0.0;  // people per year
  long horizon_years = 1;
  double discount_rate = 0.0;  // fraction per year; year 1 undiscounted

  void validate() const;
};

struct CostModel {
  double fixed = 0.0;
  double per_participant = 0.0;

  void validate() const;
  double total(long n) const { return fixed + per_participant * static_cast<double>(n); }
};

struct EnbsPoint {
  long n = 0;
  double evsi_per_person = 0.0;
  double evsi_population = 0.0;
  double cost = 0.0;
  double enbs = 0.0;
};

struct EnbsCurve {
  std::vector<EnbsPoint> points;  // sorted by n
  long optimal_n = 0;             // argmax enbs, ties -> smallest n
  double max_enbs = 0.0;
  bool research_worthwhile = false;  // max_enbs >= 0
};

// Per-person value scaled over the discounted incident population,
// sum_{y=1..horizon} incidence / (1 + rate)^(y-1).
double population_scale(double evsi_per_person, const PopulationSpec& pop);

EnbsCurve enbs_curve(const std::vector<std::pair<long, double>>& evsi_by_n,
                     const PopulationSpec& pop, const CostModel& cost);

std::string enbs_curve_to_csv(const EnbsCurve& curve);
std::string enbs_curve_to_json(const EnbsCurve& curve);

}  // namespace voi

#endif  // VOIKIT_ENBS_HPP
