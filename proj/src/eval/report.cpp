#include <cmath>
#include <cstdio>
#include <sstream>

#include "mofa/core/errors.hpp"
#include "mofa/eval.hpp"

namespace mofa::eval {

namespace {

constexpr const char* kPatchLegend = "CI: Clean Image; CP: Clean Patch; AP: Adversarial Patch";
constexpr const char* kIsrLegend = "ISR: Impersonation Success Rate against face matcher only";
constexpr const char* kEsrLegend = "ESR: Evasion Success Rate against face matcher only";
constexpr const char* kOasrLegend = "OASR: Overall Attack Success Rate against the system as a whole";
constexpr const char* kFallbackLegend =
    "*: no window was active on the clean image; the grid maximum is reported instead";

const char* matcher_metric(AttackMode mode) { return mode == AttackMode::di ? "ISR" : "ESR"; }

std::string mode_title(AttackMode mode) {
  switch (mode) {
    case AttackMode::di: return "DI-Attack";
    case AttackMode::de: return "DE-Attack";
    case AttackMode::ue: return "UE-Attack";
  }
  return "";
}

struct Cells {
  std::string ci, cp_mean, cp_std, ap_mean, ap_std, matcher_sr, oasr;
};

Cells cells(const EvalRow& r) {
  return {format_fixed(r.mean_prob_ci, 2), format_fixed(r.mean_prob_cp, 2), format_fixed(r.std_prob_cp, 3),
          format_fixed(r.mean_prob_ap, 2), format_fixed(r.std_prob_ap, 3), format_rate(r.matcher_sr),
          format_rate(r.oasr)};
}

void markdown_header(std::ostringstream& out, const std::string& metric) {
  out << "| Source | CI | CI+CP | CI+AP | " << metric << " | OASR |\n";
  out << "| --- | --- | --- | --- | --- | --- |\n";
}

}  // namespace

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "md" || text == "markdown") return ReportFormat::markdown;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected csv or md)");
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_mean_std(double mean, double std) {
  return format_fixed(mean, 2) + " ± " + format_fixed(std, 3);
}

std::string format_rate(double rate) {
  if (rate == std::floor(rate)) return format_fixed(rate, 0);
  return format_fixed(rate, 2);
}

std::string render_report(const std::vector<EvalRow>& rows, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "mode,source,ci,ci_cp_mean,ci_cp_std,ci_ap_mean,ci_ap_std,matcher_metric,matcher_sr,oasr,runs,"
           "fallback_runs\n";
    for (AttackMode mode : {AttackMode::di, AttackMode::de, AttackMode::ue}) {
      for (const auto& r : rows) {
        if (r.mode != mode) continue;
        const Cells c = cells(r);
        out << to_string(mode) << ',' << r.source_id << ',' << c.ci << ',' << c.cp_mean << ',' << c.cp_std
            << ',' << c.ap_mean << ',' << c.ap_std << ',' << matcher_metric(mode) << ',' << c.matcher_sr
            << ',' << c.oasr << ',' << r.runs << ',' << r.fallback_runs << '\n';
      }
    }
    return out.str();
  }

  out << "# Attack results\n\n";
  out << "Mean detection probability under CI, CI+CP and CI+AP (mean ± std over repeats).\n\n";
  bool any = false;
  bool any_fallback = false;
  for (AttackMode mode : {AttackMode::di, AttackMode::de, AttackMode::ue}) {
    bool started = false;
    for (const auto& r : rows) {
      if (r.mode != mode) continue;
      if (!started) {
        out << "## " << mode_title(mode) << "\n\n";
        markdown_header(out, matcher_metric(mode));
        started = true;
      }
      const Cells c = cells(r);
      const char* flag = r.fallback_runs > 0 ? " *" : "";
      any_fallback = any_fallback || r.fallback_runs > 0;
      out << "| " << r.source_id << " | " << c.ci << flag << " | " << c.cp_mean << " ± " << c.cp_std
          << " | " << c.ap_mean << " ± " << c.ap_std << " | " << c.matcher_sr << " | " << c.oasr << " |\n";
    }
    if (started) out << "\n";
    any = any || started;
  }
  if (!any) {
    markdown_header(out, "ISR/ESR");
    out << "\n";
  }
  bool isr = !any;
  bool esr = !any;
  for (const auto& r : rows) {
    isr = isr || r.mode == AttackMode::di;
    esr = esr || r.mode != AttackMode::di;
  }
  out << kPatchLegend << "\n\n";
  if (isr) out << kIsrLegend << "\n\n";
  if (esr) out << kEsrLegend << "\n\n";
  out << kOasrLegend << "\n";
  if (any_fallback) out << "\n" << kFallbackLegend << "\n";
  return out.str();
}

std::string render_baseline_report(const std::vector<BaselineComparison>& rows, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "component,objective,mode,single_asr,transfer_rate,overall_asr,multi_objective_oasr,runs\n";
    for (const auto& row : rows) {
      const auto& b = row.baseline;
      out << to_string(b.component) << ',' << to_string(b.objective) << ',' << to_string(b.mode) << ','
          << format_rate(b.single_asr) << ',' << format_rate(b.transfer_rate) << ','
          << format_rate(b.overall_asr) << ',' << format_rate(row.multi_objective_oasr) << ',' << b.runs
          << '\n';
    }
    return out.str();
  }
  out << "# Single-component baselines\n\n";
  out << "| Component | Objective | Mode | Single ASR | Transfer | Overall ASR | Multi-objective OASR |\n";
  out << "| --- | --- | --- | --- | --- | --- | --- |\n";
  for (const auto& row : rows) {
    const auto& b = row.baseline;
    out << "| " << to_string(b.component) << " | " << to_string(b.objective) << " | " << to_string(b.mode)
        << " | " << format_rate(b.single_asr) << " | " << format_rate(b.transfer_rate) << " | "
        << format_rate(b.overall_asr) << " | " << format_rate(row.multi_objective_oasr) << " |\n";
  }
  out << "\nSingle ASR: success on the attacked component. Transfer: success on the other component.\n\n";
  out << kOasrLegend << "\n";
  return out.str();
}

}  // namespace mofa::eval
