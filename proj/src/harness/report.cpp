#include "hydro/harness/report.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hydro::harness {

using nlohmann::json;

namespace {

json class_json(const ClassMetrics& c) {
  return json{{"precision", c.precision},
              {"recall", c.recall},
              {"f1", c.f1},
              {"support", c.support}};
}

ClassMetrics class_from(const json& j) {
  ClassMetrics c;
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.support = j.at("support").get<long>();
  return c;
}

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

Interval interval_from(const json& j) {
  Interval i;
  i.lo = j.at(0).get<double>();
  i.hi = j.at(1).get<double>();
  return i;
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  json j;
  j["detection"] = {{"classes",
                     {{"normal", class_json(r.normal)},
                      {"single", class_json(r.single)},
                      {"multi", class_json(r.multi)}}},
                    {"macro_attack_f1", r.macro_attack_f1},
                    {"macro_f1_ci", interval_json(r.macro_f1_ci)},
                    {"eps_disc", r.eps_disc},
                    {"far", r.far},
                    {"far_ci", interval_json(r.far_ci)},
                    {"far_worst_hour", r.far_worst_hour},
                    {"mttd_mean_s", r.mttd_mean},
                    {"mttd_worst_s", r.mttd_worst},
                    {"miss_rate", r.miss_rate},
                    {"attacks_total", r.attacks_total},
                    {"attacks_detected", r.attacks_detected}};
  j["resilience"] = {{"d_rel_mean", r.d_rel_mean},
                     {"d_rel_ci", interval_json(r.d_rel_ci)},
                     {"d_normalized", r.d_normalized},
                     {"d_raw_mean", r.d_raw_mean},
                     {"recovery_mean_s", r.recovery_mean},
                     {"recovery_shutdown_mean_s", r.recovery_shutdown_mean},
                     {"recovery_truncated", r.recovery_truncated},
                     {"critical_violation_rate", r.critical_violation_rate},
                     {"critical_rate_upper95", r.clopper_pearson_upper},
                     {"minor_violation_rate", r.minor_violation_rate}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  const json& d = j.at("detection");
  r.normal = class_from(d.at("classes").at("normal"));
  r.single = class_from(d.at("classes").at("single"));
  r.multi = class_from(d.at("classes").at("multi"));
  r.macro_attack_f1 = d.at("macro_attack_f1").get<double>();
  r.macro_f1_ci = interval_from(d.at("macro_f1_ci"));
  r.eps_disc = d.at("eps_disc").get<double>();
  r.far = d.at("far").get<double>();
  r.far_ci = interval_from(d.at("far_ci"));
  r.far_worst_hour = d.at("far_worst_hour").get<double>();
  r.mttd_mean = d.at("mttd_mean_s").get<double>();
  r.mttd_worst = d.at("mttd_worst_s").get<double>();
  r.miss_rate = d.at("miss_rate").get<double>();
  r.attacks_total = d.at("attacks_total").get<long>();
  r.attacks_detected = d.at("attacks_detected").get<long>();
  const json& s = j.at("resilience");
  r.d_rel_mean = s.at("d_rel_mean").get<double>();
  r.d_rel_ci = interval_from(s.at("d_rel_ci"));
  r.d_normalized = s.at("d_normalized").get<bool>();
  r.d_raw_mean = s.at("d_raw_mean").get<double>();
  r.recovery_mean = s.at("recovery_mean_s").get<double>();
  r.recovery_shutdown_mean = s.at("recovery_shutdown_mean_s").get<double>();
  r.recovery_truncated = s.at("recovery_truncated").get<long>();
  r.critical_violation_rate = s.at("critical_violation_rate").get<double>();
  r.clopper_pearson_upper = s.at("critical_rate_upper95").get<double>();
  r.minor_violation_rate = s.at("minor_violation_rate").get<double>();
  return r;
}

void save_report(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_report: cannot open '" + path + "'");
  out << report_to_json(report);
}

MetricsReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_report: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return report_from_json(text);
}

std::string render_table(const MetricsReport& r) {
  char buf[256];
  std::string out;
  auto row = [&](const char* name, const ClassMetrics& c) {
    std::snprintf(buf, sizeof(buf), "  %-8s %9.4f %9.4f %9.4f %9ld\n", name, c.precision,
                  c.recall, c.f1, c.support);
    out += buf;
  };
  out += "detection\n  class    precision    recall        f1   support\n";
  row("normal", r.normal);
  row("single", r.single);
  row("multi", r.multi);
  std::snprintf(buf, sizeof(buf), "  macro attack F1 %.4f  [%.4f, %.4f]   eps_disc %.4f\n",
                r.macro_attack_f1, r.macro_f1_ci.lo, r.macro_f1_ci.hi, r.eps_disc);
  out += buf;
  std::snprintf(buf, sizeof(buf), "  FAR %.5f  [%.5f, %.5f]   worst hour %.5f\n", r.far,
                r.far_ci.lo, r.far_ci.hi, r.far_worst_hour);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "  MTTD %.1f s mean, %.1f s worst   detected %ld/%ld   miss rate %.3f\n",
                r.mttd_mean, r.mttd_worst, r.attacks_detected, r.attacks_total, r.miss_rate);
  out += buf;
  out += "resilience\n";
  std::snprintf(buf, sizeof(buf), "  D_rel %.4f  [%.4f, %.4f]  %s\n", r.d_rel_mean, r.d_rel_ci.lo,
                r.d_rel_ci.hi, r.d_normalized ? "(normalized)" : "(unpaired episodes present)");
  out += buf;
  std::snprintf(buf, sizeof(buf), "  recovery %.1f s resilient vs %.1f s shutdown (%ld truncated)\n",
                r.recovery_mean, r.recovery_shutdown_mean, r.recovery_truncated);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "  violations: critical %.4f (95%% upper %.4f), minor %.4f\n",
                r.critical_violation_rate, r.clopper_pearson_upper, r.minor_violation_rate);
  out += buf;
  return out;
}

}  // namespace hydro::harness
