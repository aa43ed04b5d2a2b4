#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "wdexp/lrsched.hpp"

namespace wdexp {

ScheduleSpec schedule_from_json(const nlohmann::json& j);
nlohmann::json schedule_to_json(const ScheduleSpec& spec);

// Columns: t, eta_tilde, log_eta_tilde, alpha_t, logP_t, correction_flag. Rows t = -1..n-1.
// `header` lines are written first, each prefixed with "# ".
void write_schedule_csv(std::ostream& os, const TranslatedSchedule& s, const std::string& header = {});

// Per-phase alpha, per-iteration growth, feasibility margins.
nlohmann::json translation_summary(const ScheduleSpec& spec, const TranslatedSchedule& s);

}  // namespace wdexp
