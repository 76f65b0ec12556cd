#pragma once

// Extraction of `pcre:` options from Snort 2 rule text.

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rewb/error.hpp"
#include "rewb/syntax.hpp"

namespace rewb {

struct PcreOption {
  std::string pattern;
  Flags flags;
  bool negated = false;
};

struct SnortRule {
  std::size_t line = 0;  // first physical line of the logical rule
  std::string text;
  std::optional<long> sid;
  std::vector<PcreOption> pcres;
  std::optional<std::string> error;  // set when the rule could not be read
};

namespace detail {

struct RuleOption {
  std::string key;
  std::string value;  // raw text, quotes kept
};

inline std::vector<RuleOption> split_options(std::string_view rule) {
  std::size_t open = rule.find('(');
  if (open == std::string_view::npos) throw Error(ErrorKind::malformed_rule, "no option block");
  std::vector<RuleOption> opts;
  std::size_t i = open + 1;
  auto skip_ws = [&] {
    while (i < rule.size() && (rule[i] == ' ' || rule[i] == '\t' || rule[i] == '\r' || rule[i] == '\n')) ++i;
  };
  while (true) {
    skip_ws();
    if (i >= rule.size()) throw Error(ErrorKind::malformed_rule, "option block is not closed");
    if (rule[i] == ')') break;
    RuleOption opt;
    while (i < rule.size() && rule[i] != ':' && rule[i] != ';' && rule[i] != ')') opt.key.push_back(rule[i++]);
    while (!opt.key.empty() && (opt.key.back() == ' ' || opt.key.back() == '\t')) opt.key.pop_back();
    if (i < rule.size() && rule[i] == ':') {
      ++i;
      skip_ws();
      bool in_quotes = false;
      while (i < rule.size()) {
        char c = rule[i];
        if (in_quotes) {
          if (c == '\\' && i + 1 < rule.size()) {
            opt.value.push_back(c);
            opt.value.push_back(rule[i + 1]);
            i += 2;
            continue;
          }
          if (c == '"') in_quotes = false;
          opt.value.push_back(c);
          ++i;
          continue;
        }
        if (c == '"') {
          in_quotes = true;
          opt.value.push_back(c);
          ++i;
          continue;
        }
        if (c == '\\' && i + 1 < rule.size() && rule[i + 1] == ';') {
          opt.value.push_back(';');
          i += 2;
          continue;
        }
        if (c == ';') break;
        opt.value.push_back(c);
        ++i;
      }
      if (in_quotes) throw Error(ErrorKind::malformed_rule, "unterminated quoted value in option '" + opt.key + "'");
      while (!opt.value.empty() && (opt.value.back() == ' ' || opt.value.back() == '\t')) opt.value.pop_back();
    }
    if (i >= rule.size()) throw Error(ErrorKind::malformed_rule, "option block is not closed");
    if (rule[i] == ';') ++i;
    opts.push_back(std::move(opt));
  }
  return opts;
}

inline PcreOption parse_pcre_value(std::string_view v) {
  PcreOption out;
  if (!v.empty() && v.front() == '!') {
    out.negated = true;
    v.remove_prefix(1);
    while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
  }
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    throw Error(ErrorKind::malformed_rule, "pcre value is not a quoted string");
  v = v.substr(1, v.size() - 2);
  std::string body;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && i + 1 < v.size()) {
      if (v[i + 1] == '"') {
        body.push_back('"');
      } else {
        body.push_back('\\');
        body.push_back(v[i + 1]);
      }
      ++i;
      continue;
    }
    body.push_back(v[i]);
  }
  char delim = '/';
  std::size_t start = 1;
  if (!body.empty() && body.front() == 'm' && body.size() > 1) {
    delim = body[1];
    start = 2;
  } else if (body.empty() || body.front() != '/') {
    throw Error(ErrorKind::malformed_rule, "pcre body does not start with a delimiter");
  }
  std::size_t end = body.rfind(delim);
  if (end == std::string::npos || end < start) throw Error(ErrorKind::malformed_rule, "pcre body is not closed");
  out.pattern = body.substr(start, end - start);
  if (!Flags::parse(std::string_view(body).substr(end + 1), out.flags))
    throw Error(ErrorKind::malformed_rule, "unknown pcre modifier in '" + body.substr(end + 1) + "'");
  return out;
}

}  // namespace detail

// Every pcre option of one rule, in rule order.
inline std::vector<PcreOption> extract_pcre_from_snort_rule(std::string_view rule_line) {
  std::vector<PcreOption> out;
  for (auto& opt : detail::split_options(rule_line)) {
    if (opt.key == "pcre") out.push_back(detail::parse_pcre_value(opt.value));
  }
  return out;
}

inline std::optional<long> snort_rule_sid(std::string_view rule_line) {
  for (auto& opt : detail::split_options(rule_line)) {
    if (opt.key == "sid") {
      try {
        return std::stol(opt.value);
      } catch (...) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

// Reads a rule file: joins `\` continuations, skips blank and comment lines.
// A rule that cannot be read keeps its error and does not stop the scan.
inline std::vector<SnortRule> read_snort_rules(std::istream& in) {
  std::vector<SnortRule> rules;
  std::string line, logical;
  std::size_t lineno = 0, first = 0;
  auto flush = [&] {
    std::size_t b = logical.find_first_not_of(" \t\r");
    if (b == std::string::npos || logical[b] == '#') {
      logical.clear();
      return;
    }
    SnortRule r;
    r.line = first;
    r.text = logical.substr(b);
    try {
      r.pcres = extract_pcre_from_snort_rule(r.text);
      r.sid = snort_rule_sid(r.text);
    } catch (const Error& e) {
      r.error = e.what();
    }
    rules.push_back(std::move(r));
    logical.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (logical.empty()) first = lineno;
    if (!line.empty() && line.back() == '\\') {
      line.pop_back();
      logical += line;
      continue;
    }
    logical += line;
    flush();
  }
  if (!logical.empty()) flush();
  return rules;
}

}  // namespace rewb
