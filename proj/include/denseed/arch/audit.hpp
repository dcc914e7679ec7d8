#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "denseed/arch/builders.hpp"

namespace denseed::arch {

struct TraceStage {
  std::string label;
  int channels = 0;
  SpatialScale scale{};
};

struct FeatureTrace {
  std::vector<TraceStage> stages;
  int max_feature_maps = 0;
  int conv_layer_count = 0;
  std::int64_t parameter_count = 0;
};

inline std::int64_t count_parameters(const NetworkGraph& g) {
  validate(g);
  std::int64_t n = 0;
  for (const auto& l : g.layers) n += layer_parameter_count(l);
  return n;
}

inline int count_conv_layers(const NetworkGraph& g) {
  validate(g);
  int n = 0;
  for (const auto& l : g.layers) n += l.is_conv() ? 1 : 0;
  return n;
}

inline FeatureTrace trace_features(const NetworkGraph& g) {
  const auto scales = validate(g);
  FeatureTrace t;
  t.max_feature_maps = g.in_channels;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    t.stages.push_back({l.label, l.out_channels, scales[i]});
    t.max_feature_maps = std::max(t.max_feature_maps, l.out_channels);
    t.conv_layer_count += l.is_conv() ? 1 : 0;
    t.parameter_count += layer_parameter_count(l);
  }
  return t;
}

/// One row of the reference comparison table the audit checks against.
struct ReferenceRow {
  ArchSpec spec;
  std::string configuration;
  int conv_layers = 0;
  std::int64_t parameters = 0;
  int max_feature_maps = 0;
  // Which reference columns are expected to reproduce exactly. A false flag
  // marks a reference value known to disagree with the layer arithmetic.
  bool params_hard = true;
  bool max_fm_hard = true;
  bool informative = false;  // structure not recoverable; compare only
};

/// The reference comparison table, including its inconsistent entries.
inline const std::vector<ReferenceRow>& reference_table() {
  static const std::vector<ReferenceRow> rows = [] {
    const auto dense = [](int a, int b, int c) {
      DenseEDSpec s;
      s.blocks = {a, b, c};
      return ArchSpec{s};
    };
    std::vector<ReferenceRow> r;
    r.push_back({dense(1, 1, 1), "(1,1,1)", 10, 36572, 64});
    r.push_back({dense(2, 2, 2), "(2,2,2)", 13, 80702, 72, true, false});
    r.push_back({dense(3, 3, 3), "(3,3,3)", 16, 143040, 96});
    r.push_back({dense(4, 4, 4), "(4,4,4)", 19, 223586, 120, true, false});
    r.push_back({dense(3, 6, 3), "(3,6,3)", 19, 223586, 144, false, true});
    r.push_back({dense(6, 12, 6), "(6,12,6)", 31, 788046, 264});
    r.push_back({dense(8, 8, 8), "(8,8,8)", 31, 727850, 236});
    r.push_back({dense(9, 18, 9), "(9,18,9)", 43, 1663176, 384});
    r.push_back({ArchSpec{UNetSpec{}}, "Encoder: 5 layers, Decoder: 5 layers", 18, 989712, 96, false, true, true});
    r.push_back({ArchSpec{DnCNNSpec{}}, "17 layers", 17, 556096, 64});
    return r;
  }();
  return rows;
}

inline const ReferenceRow* find_reference(const ArchSpec& spec) {
  for (const auto& row : reference_table()) {
    if (row.spec == spec) return &row;
  }
  return nullptr;
}

enum class MatchStatus { ok, flagged, informative, mismatch, no_reference };

struct AuditRow {
  std::string name;
  int conv_layers = 0;
  std::int64_t parameters = 0;
  int max_feature_maps = 0;
  std::optional<std::int64_t> expected_params;
  MatchStatus status = MatchStatus::no_reference;
  std::string detail;  // which columns disagree, e.g. "max_fm(table 72)"
};

struct AuditReport {
  std::vector<AuditRow> rows;

  /// True unless some column that is expected to reproduce exactly does not.
  bool hard_matches() const {
    for (const auto& r : rows) {
      if (r.status == MatchStatus::mismatch) return false;
    }
    return true;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "name,conv_layers,parameters,max_feature_maps,table3_expected_params,match\n";
    for (const auto& r : rows) {
      os << r.name << ',' << r.conv_layers << ',' << r.parameters << ',' << r.max_feature_maps << ',';
      if (r.expected_params) os << *r.expected_params;
      os << ',' << match_token(r) << '\n';
    }
    return os.str();
  }

  static std::string match_token(const AuditRow& r) {
    switch (r.status) {
      case MatchStatus::ok: return "ok";
      case MatchStatus::flagged: return "flagged:" + r.detail;
      case MatchStatus::informative: return "informative:" + r.detail;
      case MatchStatus::mismatch: return "MISMATCH:" + r.detail;
      case MatchStatus::no_reference: return "-";
    }
    return "?";
  }
};

inline AuditRow audit_one(const ArchSpec& spec) {
  const NetworkGraph g = build(spec);
  const FeatureTrace t = trace_features(g);
  AuditRow row{g.name, t.conv_layer_count, t.parameter_count, t.max_feature_maps, std::nullopt,
               MatchStatus::no_reference, {}};
  const ReferenceRow* ref = find_reference(spec);
  if (ref == nullptr) return row;

  row.expected_params = ref->parameters;
  std::vector<std::string> hard_diffs;
  std::vector<std::string> soft_diffs;
  const auto note = [&](bool hard, const std::string& what) { (hard ? hard_diffs : soft_diffs).push_back(what); };
  if (row.conv_layers != ref->conv_layers) note(true, "conv_layers(table " + std::to_string(ref->conv_layers) + ")");
  if (row.parameters != ref->parameters) {
    note(ref->params_hard, "params(table " + std::to_string(ref->parameters) + ")");
  }
  if (row.max_feature_maps != ref->max_feature_maps) {
    note(ref->max_fm_hard, "max_fm(table " + std::to_string(ref->max_feature_maps) + ")");
  }
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ";") + x;
    return s;
  };
  if (!hard_diffs.empty()) {
    row.status = MatchStatus::mismatch;
    auto all = hard_diffs;
    all.insert(all.end(), soft_diffs.begin(), soft_diffs.end());
    row.detail = join(all);
  } else if (!soft_diffs.empty()) {
    row.status = ref->informative ? MatchStatus::informative : MatchStatus::flagged;
    row.detail = join(soft_diffs);
  } else {
    row.status = MatchStatus::ok;
  }
  return row;
}

inline AuditReport audit_table(const std::vector<ArchSpec>& specs) {
  AuditReport report;
  for (const auto& s : specs) report.rows.push_back(audit_one(s));
  return report;
}

inline std::vector<ArchSpec> reference_specs() {
  std::vector<ArchSpec> out;
  for (const auto& row : reference_table()) out.push_back(row.spec);
  return out;
}

}  // namespace denseed::arch
