#pragma once

// Per-pattern analysis and the JSON-lines report objects built from it.

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rewb/detect.hpp"
#include "rewb/fit.hpp"
#include "rewb/matcher.hpp"
#include "rewb/syntax.hpp"

namespace rewb {

using json = nlohmann::json;

inline constexpr const char* kReportSchemaVersion = "1";

struct AnalysisInput {
  std::string pattern;
  Flags flags;
  std::string file;  // empty for command-line patterns
  std::size_t line = 0;
  std::optional<long> sid;
  bool search = false;  // unanchored analysis (rules default to it)
  std::optional<std::string> read_error;  // the rule itself could not be read
};

struct AnalysisOptions {
  DetectOptions detect;
  bool validate = true;
  ValidationOptions validation;
  std::size_t example_length = 64;
};

inline bool is_ascii(const std::string& s) {
  for (unsigned char c : s)
    if (c >= 0x80) return false;
  return true;
}

inline std::string to_hex(const std::string& s) {
  static const char* d = "0123456789abcdef";
  std::string r;
  for (unsigned char c : s) {
    r.push_back(d[c >> 4]);
    r.push_back(d[c & 15]);
  }
  return r;
}

inline json family_json(const AttackFamily& f) {
  return json{{"prefix", f.prefix},
              {"unit", f.unit},
              {"fence", f.fence},
              {"nsuffix", f.nsuffix},
              {"arity", f.arity},
              {"head_base", f.head_base},
              {"head_k1", f.head_k1},
              {"tail_base", f.tail_base},
              {"tail_k1", f.tail_k1},
              {"tail_k2", f.tail_k2}};
}

inline AttackFamily family_from_json(const json& j) {
  AttackFamily f;
  f.prefix = j.at("prefix").get<std::string>();
  f.unit = j.at("unit").get<std::string>();
  f.fence = j.value("fence", std::string());
  f.nsuffix = j.value("nsuffix", std::string());
  f.arity = j.at("arity").get<int>();
  f.head_base = j.value("head_base", 0L);
  f.head_k1 = j.value("head_k1", 1L);
  f.tail_base = j.value("tail_base", 0L);
  f.tail_k1 = j.value("tail_k1", 0L);
  f.tail_k2 = j.value("tail_k2", 0L);
  return f;
}

inline json fit_json(const GrowthFit& g) {
  json samples = json::array();
  for (auto& s : g.samples) samples.push_back({s.length, s.cost});
  return json{{"dominant_degree", g.dominant_degree},
              {"coefficients", g.coefficients},
              {"std_errors", g.std_errors},
              {"r_squared", g.r_squared},
              {"residual_norm", g.residual_norm},
              {"samples", samples}};
}

inline json source_json(const AnalysisInput& in) {
  json s = json::object();
  if (!in.file.empty()) {
    s["file"] = in.file;
    s["line"] = in.line;
  }
  if (in.sid) s["sid"] = *in.sid;
  return s;
}

// Parses, compiles, detects and (optionally) validates one pattern. Errors
// become diagnostics in the returned object; nothing here throws.
inline json analyze_pattern(const AnalysisInput& in, const AnalysisOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  json r{{"type", "pattern"},
         {"pattern", in.pattern},
         {"flags", in.flags.letters()},
         {"source", source_json(in)},
         {"findings", json::array()},
         {"diagnostics", json::array()},
         {"notes", json::array()}};
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto finish = [&](const char* status) {
    r["status"] = status;
    r["timings"] = {{"detect_seconds", seconds()}};
    return r;
  };

  if (in.read_error) {
    r["diagnostics"].push_back({{"kind", to_string(ErrorKind::malformed_rule)}, {"message", *in.read_error}});
    return finish("error");
  }
  ParseResult pr = parse_rewb(in.pattern, in.flags);
  if (!pr) {
    const auto& d = pr.error();
    r["diagnostics"].push_back({{"kind", to_string(d.kind)}, {"position", d.position}, {"message", d.message}});
    return finish(d.kind == DiagKind::unsupported_feature ? "unsupported" : "error");
  }
  try {
    TwoPhaseMfa a = compile_pattern(pr.value());
    bool search = in.search && !a.anchor_start;
    r["search"] = search;
    r["states"] = a.size();
    r["transitions"] = a.transition_count();
    r["has_backrefs"] = a.has_backrefs();
    DetectOptions dopts = opts.detect;
    dopts.search = search;
    DetectionResult det = detect_all(a, dopts);
    r["chained_groups"] = det.chained_groups;
    for (auto& n : det.notes) r["notes"].push_back(n);

    ValidationOptions vopts = opts.validation;
    vopts.anchored = !search;
    for (const auto& f : det.findings) {
      json jf{{"pattern_id", to_string(f.pattern)},
              {"group", f.group},
              {"pump_pivot", f.pump_pivot},
              {"loop_pivot", f.loop_pivot},
              {"s_ovlp", f.overlap},
              {"fence", f.fence ? json(*f.fence) : json(nullptr)},
              {"structural_only", f.unconfirmed},
              {"confirmed", false},
              {"dominant_degree", nullptr},
              {"notes", f.notes}};
      if (f.pattern != PatternId::IDA) {
        try {
          AttackAutomaton at = build_attack_automaton(det.automaton, f);
          jf["family"] = family_json(at.family);
          long k = pump_for_length(at.family, opts.example_length);
          auto pumps = at.family.diagonal(k);
          std::string input = materialize(at.family, pumps);
          json ex{{"pumps", pumps}, {"length", input.size()}, {"input", input}};
          if (!is_ascii(input)) ex["input_hex"] = to_hex(input);
          jf["attack"] = ex;
          if (opts.validate) {
            Validation v = validate_family(a, at.family, vopts);
            jf["confirmed"] = v.confirmed;
            jf["budget_exhausted"] = v.budget_exhausted;
            jf["ladder"] = v.ladder;
            if (v.fit) {
              jf["dominant_degree"] = v.fit->dominant_degree;
              jf["fit"] = fit_json(*v.fit);
            }
            if (v.slice) jf["slice_fit"] = fit_json(*v.slice);
            if (!v.note.empty()) jf["notes"].push_back(v.note);
          }
        } catch (const Error& e) {
          jf["notes"].push_back(e.what());
        }
      }
      r["findings"].push_back(std::move(jf));
    }
  } catch (const Error& e) {
    r["diagnostics"].push_back({{"kind", to_string(e.kind())}, {"message", e.what()}});
    return finish("error");
  }
  return finish("ok");
}

// Counts per pattern id and the pattern-only / pattern-with-IDA split, over
// the pattern objects of one run.
class Summary {
 public:
  void add(const json& report) {
    ++patterns_;
    std::string status = report.value("status", "error");
    ++status_[status];
    if (status != "ok") return;
    if (report.value("has_backrefs", false)) ++backref_patterns_;
    std::map<std::string, bool> has, confirmed;
    for (auto& f : report["findings"]) {
      std::string id = f["pattern_id"];
      has[id] = true;
      if (f.value("confirmed", false)) confirmed[id] = true;
    }
    bool ida = has.count("IDA") > 0;
    bool any_backref = false;
    for (const char* id : {"IDA", "P1", "P2", "P3"}) {
      if (has.count(id)) ++counts_[id];
      if (confirmed.count(id)) ++confirmed_[id];
    }
    for (const char* id : {"P1", "P2", "P3"}) {
      if (!has.count(id)) continue;
      any_backref = true;
      ++cross_[id][ida ? "with_ida" : "only"];
    }
    if (any_backref) {
      ++vulnerable_;
      if (!ida) ++invisible_to_ida_;
    }
    if (!confirmed.empty()) ++confirmed_patterns_;
  }

  bool any_confirmed() const { return confirmed_patterns_ > 0; }

  json to_json() const {
    json counts, confirmed, cross;
    for (const char* id : {"IDA", "P1", "P2", "P3"}) {
      counts[id] = get(counts_, id);
      confirmed[id] = get(confirmed_, id);
    }
    for (const char* id : {"P1", "P2", "P3"}) {
      auto it = cross_.find(id);
      cross[id] = {{"only", it == cross_.end() ? 0 : get(it->second, "only")},
                   {"with_ida", it == cross_.end() ? 0 : get(it->second, "with_ida")}};
    }
    return json{{"type", "summary"},
                {"schema_version", kReportSchemaVersion},
                {"cost_model", kCostModelVersion},
                {"patterns", patterns_},
                {"ok", get(status_, "ok")},
                {"unsupported", get(status_, "unsupported")},
                {"errors", get(status_, "error")},
                {"with_backrefs", backref_patterns_},
                {"counts", counts},
                {"confirmed", confirmed},
                {"cross_tab", cross},
                {"backref_vulnerable", vulnerable_},
                {"invisible_to_ida", invisible_to_ida_},
                {"confirmed_patterns", confirmed_patterns_}};
  }

 private:
  static long get(const std::map<std::string, long>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }

  long patterns_ = 0, backref_patterns_ = 0, vulnerable_ = 0, invisible_to_ida_ = 0, confirmed_patterns_ = 0;
  std::map<std::string, long> status_, counts_, confirmed_;
  std::map<std::string, std::map<std::string, long>> cross_;
};

inline std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace rewb
