#include "wdexp/schedule_io.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "wdexp/errors.hpp"
#include "wdexp/format.hpp"

namespace wdexp {

using nlohmann::json;

namespace {

ScheduleKind kind_from_string(const std::string& k) {
  if (k == "constant") return ScheduleKind::constant;
  if (k == "step_decay") return ScheduleKind::step_decay;
  if (k == "cosine") return ScheduleKind::cosine;
  if (k == "explicit") return ScheduleKind::explicit_seq;
  throw ConfigError("unknown schedule kind '" + k + "'");
}

const char* kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::step_decay: return "step_decay";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::explicit_seq: return "explicit";
  }
  return "?";
}

void write_header(std::ostream& os, const std::string& header) {
  std::istringstream in(header);
  std::string line;
  while (std::getline(in, line)) os << "# " << line << '\n';
}

}  // namespace

ScheduleSpec schedule_from_json(const json& j) {
  try {
    ScheduleSpec s;
    s.kind = kind_from_string(j.at("kind").get<std::string>());
    s.gamma = j.value("gamma", 0.0);
    s.eta0 = j.value("eta0", 0.1);
    s.lambda = j.value("lambda", 0.0);
    s.T = j.value("T", std::int64_t{0});
    if (j.contains("phases"))
      for (const auto& p : j.at("phases"))
        s.phases.push_back({p.at("start").get<std::int64_t>(), p.at("lr").get<double>(), p.value("wd", 0.0)});
    if (j.contains("eta_seq")) s.eta_seq = j.at("eta_seq").get<std::vector<double>>();
    if (j.contains("lambda_seq")) s.lambda_seq = j.at("lambda_seq").get<std::vector<double>>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schedule config: ") + e.what());
  }
}

json schedule_to_json(const ScheduleSpec& s) {
  json j{{"kind", kind_name(s.kind)}, {"gamma", s.gamma}};
  switch (s.kind) {
    case ScheduleKind::constant:
    case ScheduleKind::cosine:
      j["eta0"] = s.eta0;
      j["lambda"] = s.lambda;
      j["T"] = s.T;
      break;
    case ScheduleKind::step_decay:
      j["T"] = s.T;
      j["phases"] = json::array();
      for (const auto& p : s.phases) j["phases"].push_back({{"start", p.start}, {"lr", p.lr}, {"wd", p.wd}});
      break;
    case ScheduleKind::explicit_seq:
      j["eta_seq"] = s.eta_seq;
      j["lambda_seq"] = s.lambda_seq;
      break;
  }
  return j;
}

void write_schedule_csv(std::ostream& os, const TranslatedSchedule& s, const std::string& header) {
  write_header(os, header);
  os << "t,eta_tilde,log_eta_tilde,alpha_t,logP_t,correction_flag\n";
  for (std::int64_t t = -1; t < s.size(); ++t) {
    os << t << ',' << num(s.eta_tilde(t)) << ',' << num(s.log_eta_tilde(t)) << ',' << num(s.alpha(t)) << ','
       << num(s.log_p(t)) << ',' << (s.correction_at(t) ? 1 : 0) << '\n';
  }
}

json translation_summary(const ScheduleSpec& spec, const TranslatedSchedule& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["iterations"] = s.size();
  j["gamma"] = s.gamma;
  const double root = 1.0 - std::sqrt(s.gamma);
  json phases = json::array();
  auto add_phase = [&](std::int64_t start, double lr, double wd, double alpha) {
    phases.push_back({{"start", start},
                      {"lr", lr},
                      {"wd", wd},
                      {"alpha", alpha},
                      {"growth_per_iter", 1.0 / (alpha * alpha)},
                      {"feasibility_margin", lr * wd / (root * root)}});
  };
  if (spec.kind == ScheduleKind::step_decay) {
    for (std::size_t i = 0; i < spec.phases.size(); ++i)
      add_phase(spec.phases[i].start, spec.phases[i].lr, spec.phases[i].wd, s.phase_alpha.at(i));
  } else if (spec.kind == ScheduleKind::constant) {
    add_phase(0, spec.eta0, spec.lambda, s.phase_alpha.at(0));
  } else {
    double worst = 0.0;
    for (std::size_t t = 0; t < s.eta.size(); ++t) worst = std::max(worst, s.eta[t] * s.lambda[t]);
    j["max_feasibility_margin"] = worst / (root * root);
  }
  j["phases"] = phases;
  j["corrections"] = json::array();
  for (const auto& c : s.corrections)
    j["corrections"].push_back(
        {{"t", c.t}, {"alpha_t", c.alpha_t}, {"alpha_next", c.alpha_next}, {"eta_prev", c.eta_prev}, {"eta_cur", c.eta_cur}});
  if (s.overflowed_at) j["overflowed_at"] = *s.overflowed_at;
  if (!s.interpretation.empty()) j["interpretation"] = s.interpretation;
  if (s.size() > 0) j["final_log_eta_tilde"] = s.log_eta_tilde(s.size() - 1);
  return j;
}

}  // namespace wdexp
