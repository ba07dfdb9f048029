#include "voikit/enbs.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voikit/psa.hpp"

namespace voi {

void PopulationSpec::validate() const {
  if (annual_incidence < 0.0) throw argument_error("annual incidence must be >= 0");
  if (horizon_years < 1) throw argument_error("horizon must be >= 1 year");
  if (discount_rate < 0.0) throw argument_error("discount rate must be >= 0");
}

void CostModel::validate() const {
  if (fixed < 0.0 || per_participant < 0.0) throw argument_error("costs must be >= 0");
}

double population_scale(double evsi_per_person, const PopulationSpec& pop) {
  pop.validate();
  if (evsi_per_person < 0.0) throw argument_error("per-person EVSI must be >= 0");
  double scale = 0.0;
  double discount = 1.0;  // first year undiscounted
  for (long y = 0; y < pop.horizon_years; ++y) {
    scale += pop.annual_incidence / discount;
    discount *= 1.0 + pop.discount_rate;
  }
  return evsi_per_person * scale;
}

EnbsCurve enbs_curve(const std::vector<std::pair<long, double>>& evsi_by_n,
                     const PopulationSpec& pop, const CostModel& cost) {
  if (evsi_by_n.empty()) throw argument_error("need at least one (N, EVSI) point");
  pop.validate();
  cost.validate();
  std::set<long> seen;
  for (const auto& [n, v] : evsi_by_n) {
    if (n <= 0) throw argument_error("sample sizes must be positive");
    if (!seen.insert(n).second) throw argument_error("duplicate sample size N = " + std::to_string(n));
    (void)v;
  }

  EnbsCurve curve;
  for (const auto& [n, evsi_pp] : evsi_by_n) {
    EnbsPoint pt;
    pt.n = n;
    pt.evsi_per_person = evsi_pp;
    pt.evsi_population = population_scale(evsi_pp, pop);
    pt.cost = cost.total(n);
    pt.enbs = pt.evsi_population - pt.cost;
    curve.points.push_back(pt);
  }
  std::sort(curve.points.begin(), curve.points.end(),
            [](const EnbsPoint& a, const EnbsPoint& b) { return a.n < b.n; });
  curve.optimal_n = curve.points.front().n;
  curve.max_enbs = curve.points.front().enbs;
  for (const auto& pt : curve.points) {
    if (pt.enbs > curve.max_enbs) {  // ties keep the smallest N
      curve.max_enbs = pt.enbs;
      curve.optimal_n = pt.n;
    }
  }
  curve.research_worthwhile = curve.max_enbs >= 0.0;
  return curve;
}

std::string enbs_curve_to_csv(const EnbsCurve& curve) {
  std::ostringstream os;
  os << "N,evsi_pp,evsi_pop,cost,enbs\n";
  for (const auto& pt : curve.points) {
    os << pt.n << ',' << format_double(pt.evsi_per_person) << ','
       << format_double(pt.evsi_population) << ',' << format_double(pt.cost) << ','
       << format_double(pt.enbs) << '\n';
  }
  return os.str();
}

std::string enbs_curve_to_json(const EnbsCurve& curve) {
  nlohmann::json j;
  j["optimal_N"] = curve.optimal_n;
  j["max_enbs"] = curve.max_enbs;
  j["research_worthwhile"] = curve.research_worthwhile;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& pt : curve.points) {
    pts.push_back({{"N", pt.n},
                   {"evsi_pp", pt.evsi_per_person},
                   {"evsi_pop", pt.evsi_population},
                   {"cost", pt.cost},
                   {"enbs", pt.enbs}});
  }
  j["points"] = pts;
  return j.dump(2) + "\n";
}

}  // namespace voi
