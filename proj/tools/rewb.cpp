// rewb: command-line front end for detection, attack generation,
// measurement, rule extraction and single matches.

#include <CLI11.hpp>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "rewb/report.hpp"
#include "rewb/snort.hpp"

namespace fs = std::filesystem;
using namespace rewb;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitFindings = 1;
constexpr int kExitError = 2;

std::uint64_t default_limit() {
  if (const char* env = std::getenv("REWB_MATCH_LIMIT")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0' && v > 0) return v;
    std::cerr << "rewb: ignoring malformed REWB_MATCH_LIMIT\n";
  }
  return kDefaultMatchLimit;
}

Flags parse_flags_or_throw(const std::string& letters) {
  Flags f;
  if (!Flags::parse(letters, f, false)) throw CLI::ValidationError("--flags", "unknown flag letter in '" + letters + "'");
  return f;
}

std::vector<long> parse_ladder(const std::string& s) {
  std::vector<long> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stol(item));
  }
  return out;
}

bool looks_like_rules(const fs::path& p) { return p.extension() == ".rules"; }

// Expands command-line inputs into analysis jobs. Positional inputs naming an
// existing file are read as rule files (by extension or --rules) or pattern
// files; anything else is a pattern string.
std::vector<AnalysisInput> collect_inputs(const std::vector<std::string>& positional,
                                          const std::vector<std::string>& explicit_patterns, const Flags& flags,
                                          bool force_rules, std::optional<bool> search) {
  std::vector<AnalysisInput> jobs;
  auto add_pattern = [&](const std::string& p, const std::string& file, std::size_t line) {
    AnalysisInput in;
    in.pattern = p;
    in.flags = flags;
    in.file = file;
    in.line = line;
    in.search = search.value_or(false);
    jobs.push_back(std::move(in));
  };
  for (auto& p : explicit_patterns) add_pattern(p, "", 0);
  for (auto& arg : positional) {
    fs::path path(arg);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      add_pattern(arg, "", 0);
      continue;
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + arg);
    if (force_rules || looks_like_rules(path)) {
      for (auto& rule : read_snort_rules(f)) {
        if (rule.error) {
          AnalysisInput in;
          in.file = arg;
          in.line = rule.line;
          in.sid = rule.sid;
          in.read_error = *rule.error;
          jobs.push_back(std::move(in));
          continue;
        }
        for (auto& pc : rule.pcres) {
          AnalysisInput in;
          in.pattern = pc.pattern;
          in.flags = pc.flags;
          in.file = arg;
          in.line = rule.line;
          in.sid = rule.sid;
          in.search = search.value_or(!pc.flags.anchored);
          jobs.push_back(std::move(in));
        }
      }
    } else {
      std::string line;
      std::size_t n = 0;
      while (std::getline(f, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        add_pattern(line, arg, n);
      }
    }
  }
  return jobs;
}

// Runs the jobs on a worker pool and writes results in input order.
void run_pool(const std::vector<AnalysisInput>& jobs, const AnalysisOptions& opts, unsigned workers,
              std::ostream& out, Summary& summary) {
  std::vector<std::optional<json>> results(jobs.size());
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      json r = analyze_pattern(jobs[i], opts);
      {
        std::lock_guard<std::mutex> lk(mu);
        results[i] = std::move(r);
      }
      ready.notify_all();
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1))));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    json r;
    {
      std::unique_lock<std::mutex> lk(mu);
      ready.wait(lk, [&] { return results[i].has_value(); });
      r = std::move(*results[i]);
      results[i].reset();
    }
    summary.add(r);
    out << dump_line(r) << '\n';
    out.flush();
  }
  for (auto& t : pool) t.join();
}

struct FamilyChoice {
  TwoPhaseMfa automaton;  // the automaton measurements run on
  AttackFamily family;
  PatternFinding finding;
  bool search = false;
};

FamilyChoice choose_family(const std::string& pattern, const Flags& flags, const std::string& id, bool search,
                           std::size_t index) {
  ParseResult pr = parse_rewb(pattern, flags);
  if (!pr) throw Error(ErrorKind::precondition, "cannot parse pattern: " + pr.error().message);
  FamilyChoice c;
  c.automaton = compile_pattern(pr.value());
  c.search = search && !c.automaton.anchor_start;
  DetectOptions o;
  o.ida = false;
  o.search = c.search;
  auto want = id.empty() ? std::nullopt : pattern_from_string(id);
  if (!id.empty() && !want) throw CLI::ValidationError("--pattern-id", "expected P1, P2 or P3");
  if (want == PatternId::IDA) throw CLI::ValidationError("--pattern-id", "attack families exist for P1, P2 and P3");
  DetectionResult det = detect_all(c.automaton, o);
  std::vector<const PatternFinding*> matches;
  for (auto& f : det.findings)
    if (!want || f.pattern == *want) matches.push_back(&f);
  if (matches.size() <= index)
    throw Error(ErrorKind::no_finding, id.empty() ? "no backreference finding" : "no " + id + " finding");
  c.finding = *matches[index];
  c.family = build_attack_automaton(det.automaton, c.finding).family;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backreference ReDoS detection and attack generation"};
  app.require_subcommand(1);
  std::uint64_t limit = default_limit();

  // detect
  auto* detect = app.add_subcommand("detect", "Analyse patterns, pattern files or Snort rule files");
  std::vector<std::string> d_inputs, d_patterns;
  std::string d_flags, d_which = "IDA,P1,P2,P3", d_output;
  bool d_no_validate = false, d_rules = false, d_search = false, d_anchored = false;
  unsigned d_jobs = std::max(1u, std::thread::hardware_concurrency());
  std::size_t d_example = 64;
  detect->add_option("inputs", d_inputs, "Pattern strings or files");
  detect->add_option("-e,--pattern", d_patterns, "Pattern string (repeatable)");
  detect->add_option("--flags", d_flags, "PCRE flag letters for command-line and file patterns");
  detect->add_option("--patterns", d_which, "Detectors to run, comma separated");
  detect->add_flag("--no-validate", d_no_validate, "Skip dynamic confirmation");
  detect->add_flag("--rules", d_rules, "Treat every input file as Snort rules");
  detect->add_flag("--search", d_search, "Analyse as unanchored search");
  detect->add_flag("--anchored", d_anchored, "Analyse as anchored match, also for rules");
  detect->add_option("--limit", limit, "Match step budget per sample (env REWB_MATCH_LIMIT)");
  detect->add_option("-j,--jobs", d_jobs, "Worker threads");
  detect->add_option("--example-length", d_example, "Length of the example attack input");
  detect->add_option("-o,--output", d_output, "Write the report here instead of stdout");

  // attack
  auto* attack = app.add_subcommand("attack", "Print an attack input for a finding");
  std::string a_pattern, a_flags, a_id, a_sidecar;
  std::size_t a_length = 1024, a_index = 0;
  bool a_search = false, a_newline = false;
  attack->add_option("pattern", a_pattern, "Pattern")->required();
  attack->add_option("--flags", a_flags, "PCRE flag letters");
  attack->add_option("--pattern-id", a_id, "P1, P2 or P3");
  attack->add_option("--length", a_length, "Target input length");
  attack->add_option("--index", a_index, "Which matching finding to use");
  attack->add_option("--sidecar", a_sidecar, "Write pump parameters as JSON to this file");
  attack->add_flag("--search", a_search, "Build the family for unanchored search");
  attack->add_flag("--newline", a_newline, "Terminate the printed input with a newline");

  // measure
  auto* measure = app.add_subcommand("measure", "Measure step counts along a family ladder and fit growth");
  std::string m_pattern, m_flags, m_id, m_ladder = "16,32,64,128,256,512", m_format = "json", m_family;
  bool m_unanchored = false;
  measure->add_option("pattern", m_pattern, "Pattern")->required();
  measure->add_option("--flags", m_flags, "PCRE flag letters");
  measure->add_option("--pattern-id", m_id, "P1, P2 or P3");
  measure->add_option("--family", m_family, "Sidecar JSON from `attack` to use instead of detection");
  measure->add_option("--ladder", m_ladder, "Pump counts, comma separated, increasing");
  measure->add_option("--format", m_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  measure->add_flag("--unanchored", m_unanchored, "Unanchored matching (search mode)");
  measure->add_option("--limit", limit, "Match step budget per sample (env REWB_MATCH_LIMIT)");

  // extract
  auto* extract = app.add_subcommand("extract", "List pcre options of a Snort rule file");
  std::string x_file;
  extract->add_option("file", x_file, "Rule file")->required();

  // match
  auto* match = app.add_subcommand("match", "Run the instrumented matcher once");
  std::string t_pattern, t_input, t_flags;
  bool t_hex = false, t_unanchored = false, t_exhaustive = false, t_empty_unset = false;
  match->add_option("pattern", t_pattern, "Pattern")->required();
  match->add_option("input", t_input, "Input string")->required();
  match->add_option("--flags", t_flags, "PCRE flag letters");
  match->add_flag("--hex", t_hex, "Input is hex encoded");
  match->add_flag("--unanchored", t_unanchored, "Search instead of full match");
  match->add_flag("--exhaustive", t_exhaustive, "Explore every path even after acceptance");
  match->add_flag("--empty-unset", t_empty_unset, "Unset groups match the empty string");
  match->add_option("--limit", limit, "Match step budget (env REWB_MATCH_LIMIT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitClean : kExitError;
  }

  try {
    if (*detect) {
      AnalysisOptions opts;
      opts.detect.ida = opts.detect.p1 = opts.detect.p2 = opts.detect.p3 = false;
      std::stringstream ss(d_which);
      std::string id;
      while (std::getline(ss, id, ',')) {
        auto p = pattern_from_string(id);
        if (!p) throw CLI::ValidationError("--patterns", "unknown detector " + id);
        if (*p == PatternId::IDA) opts.detect.ida = true;
        if (*p == PatternId::P1) opts.detect.p1 = true;
        if (*p == PatternId::P2) opts.detect.p2 = true;
        if (*p == PatternId::P3) opts.detect.p3 = true;
      }
      opts.validate = !d_no_validate;
      opts.validation.limit = limit;
      opts.example_length = d_example;
      std::optional<bool> search;
      if (d_search) search = true;
      if (d_anchored) search = false;
      auto jobs = collect_inputs(d_inputs, d_patterns, parse_flags_or_throw(d_flags), d_rules, search);
      std::ofstream file;
      if (!d_output.empty()) {
        file.open(d_output, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + d_output);
      }
      std::ostream& out = d_output.empty() ? std::cout : file;
      Summary summary;
      run_pool(jobs, opts, d_jobs, out, summary);
      out << dump_line(summary.to_json()) << '\n';
      return summary.any_confirmed() ? kExitFindings : kExitClean;
    }

    if (*attack) {
      FamilyChoice c = choose_family(a_pattern, parse_flags_or_throw(a_flags), a_id, a_search, a_index);
      long k = pump_for_length(c.family, a_length);
      auto pumps = c.family.diagonal(k);
      std::string input = materialize(c.family, pumps);
      std::cout << input;
      if (a_newline) std::cout << '\n';
      std::cout.flush();
      if (!a_sidecar.empty()) {
        json side{{"pattern", a_pattern},
                  {"flags", parse_flags_or_throw(a_flags).letters()},
                  {"pattern_id", to_string(c.finding.pattern)},
                  {"group", c.finding.group},
                  {"search", c.search},
                  {"family", family_json(c.family)},
                  {"pumps", pumps},
                  {"length", input.size()},
                  {"requested_length", a_length},
                  {"cost_model", kCostModelVersion}};
        std::ofstream f(a_sidecar, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + a_sidecar);
        f << side.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
      }
      return kExitClean;
    }

    if (*measure) {
      Flags flags = parse_flags_or_throw(m_flags);
      ParseResult pr = parse_rewb(m_pattern, flags);
      if (!pr) throw Error(ErrorKind::precondition, "cannot parse pattern: " + pr.error().message);
      TwoPhaseMfa a = compile_pattern(pr.value());
      AttackFamily fam;
      if (!m_family.empty()) {
        std::ifstream f(m_family);
        if (!f) throw std::runtime_error("cannot open " + m_family);
        fam = family_from_json(json::parse(f).at("family"));
      } else {
        fam = choose_family(m_pattern, flags, m_id, m_unanchored, 0).family;
      }
      MatchOptions mo;
      mo.anchored = !m_unanchored;
      mo.limit = limit;
      auto samples = measure_family(a, fam, parse_ladder(m_ladder), mo);
      std::vector<Sample> usable;
      for (auto& s : samples)
        if (!s.aborted) usable.push_back(s);
      std::optional<GrowthFit> fit;
      std::string fit_error;
      try {
        fit = fit_growth(to_growth(usable));
      } catch (const Error& e) {
        fit_error = e.what();
      }
      if (m_format == "csv") {
        std::cout << "pumps,length,steps,aborted\n";
        for (auto& s : samples) {
          std::string p;
          for (std::size_t i = 0; i < s.pumps.size(); ++i) p += (i ? ":" : "") + std::to_string(s.pumps[i]);
          std::cout << p << ',' << s.length << ',' << s.steps << ',' << (s.aborted ? 1 : 0) << '\n';
        }
        if (fit)
          std::cerr << "dominant degree " << fit->dominant_degree << ", R^2 " << fit->r_squared << '\n';
      } else {
        json js = json::array();
        for (auto& s : samples)
          js.push_back({{"pumps", s.pumps}, {"length", s.length}, {"steps", s.steps}, {"aborted", s.aborted}});
        json out{{"type", "measurement"},
                 {"pattern", m_pattern},
                 {"cost_model", kCostModelVersion},
                 {"anchored", !m_unanchored},
                 {"family", family_json(fam)},
                 {"samples", js},
                 {"fit", fit ? fit_json(*fit) : json(nullptr)}};
        if (!fit_error.empty()) out["error"] = fit_error;
        std::cout << dump_line(out) << '\n';
      }
      if (!fit) {
        std::cerr << "rewb: " << fit_error << '\n';
        return kExitError;
      }
      return kExitClean;
    }

    if (*extract) {
      std::ifstream f(x_file, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open " + x_file);
      for (auto& rule : read_snort_rules(f)) {
        if (rule.error) {
          std::cout << dump_line({{"line", rule.line}, {"error", *rule.error}}) << '\n';
          continue;
        }
        for (auto& pc : rule.pcres) {
          json j{{"line", rule.line}, {"pattern", pc.pattern}, {"flags", pc.flags.letters()}, {"negated", pc.negated}};
          if (rule.sid) j["sid"] = *rule.sid;
          std::cout << dump_line(j) << '\n';
        }
      }
      return kExitClean;
    }

    if (*match) {
      ParseResult pr = parse_rewb(t_pattern, parse_flags_or_throw(t_flags));
      if (!pr) throw Error(ErrorKind::precondition, "cannot parse pattern: " + pr.error().message);
      TwoPhaseMfa a = compile_pattern(pr.value());
      std::string input = t_input;
      if (t_hex) {
        if (t_input.size() % 2) throw CLI::ValidationError("input", "odd-length hex");
        input.clear();
        for (std::size_t i = 0; i < t_input.size(); i += 2)
          input.push_back(static_cast<char>(std::stoi(t_input.substr(i, 2), nullptr, 16)));
      }
      MatchOptions mo;
      mo.anchored = !t_unanchored;
      mo.exhaustive = t_exhaustive;
      mo.limit = limit;
      mo.unset = t_empty_unset ? UnsetRef::empty : UnsetRef::fail;
      MatchOutcome m = bt_run(a, input, mo);
      json j{{"accepted", m.accepted}, {"steps", m.steps}, {"aborted", m.aborted}, {"cost_model", kCostModelVersion}};
      if (m.accepted) {
        j["match"] = {m.match_start, m.match_end};
        json caps = json::array();
        for (int g = 1; g <= a.group_count; ++g) {
          auto c = m.captures.capture(input, g);
          caps.push_back(c ? json(std::string(*c)) : json(nullptr));
        }
        j["captures"] = caps;
      }
      std::cout << dump_line(j) << '\n';
      if (m.aborted) return kExitError;
      return m.accepted ? kExitClean : kExitFindings;
    }
  } catch (const Error& e) {
    std::cerr << "rewb: " << e.what() << '\n';
    return kExitError;
  } catch (const CLI::Error& e) {
    std::cerr << "rewb: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "rewb: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
