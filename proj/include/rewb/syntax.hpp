#pragma once

// Parser, desugarer and printer for regular expressions with backreferences.
//
// The accepted dialect is the PCRE subset found in IDS rule sets. Everything
// that is regular-equivalent (counted repetition, `+`, `?`, classes, escapes)
// is rewritten into eight core node kinds; features outside the model are
// rejected with an unsupported-feature diagnostic.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "rewb/charset.hpp"

namespace rewb {

enum class NodeKind { Concat, Alt, Star, Group, Capture, Backref, Symbol, Empty };

struct Node {
  NodeKind kind = NodeKind::Empty;
  std::vector<Node> children;  // Concat: items; Alt: {left, right}; others: {child}
  CharSet set;                 // Symbol only
  int group = 0;               // Capture and Backref
  bool greedy = true;          // Star only

  bool operator==(const Node& o) const {
    return kind == o.kind && group == o.group && greedy == o.greedy && set == o.set &&
           children == o.children;
  }

  const Node& child() const { return children.front(); }

  static Node empty() { return Node{}; }
  static Node symbol(CharSet s) {
    Node n;
    n.kind = NodeKind::Symbol;
    n.set = s;
    return n;
  }
  static Node literal(unsigned char c) { return symbol(CharSet::single(c)); }
  static Node backref(int id) {
    Node n;
    n.kind = NodeKind::Backref;
    n.group = id;
    return n;
  }
  static Node star(Node c, bool greedy = true) {
    Node n;
    n.kind = NodeKind::Star;
    n.greedy = greedy;
    n.children.push_back(std::move(c));
    return n;
  }
  static Node group_of(Node c) {
    Node n;
    n.kind = NodeKind::Group;
    n.children.push_back(std::move(c));
    return n;
  }
  static Node capture(int id, Node c) {
    Node n;
    n.kind = NodeKind::Capture;
    n.group = id;
    n.children.push_back(std::move(c));
    return n;
  }
  static Node alt(Node l, Node r) {
    Node n;
    n.kind = NodeKind::Alt;
    n.children.push_back(std::move(l));
    n.children.push_back(std::move(r));
    return n;
  }
  // Flattens nested Concat items; zero items give Empty, one item is returned as is.
  static Node concat(std::vector<Node> items) {
    Node n;
    n.kind = NodeKind::Concat;
    for (auto& it : items) {
      if (it.kind == NodeKind::Concat) {
        for (auto& c : it.children) n.children.push_back(std::move(c));
      } else {
        n.children.push_back(std::move(it));
      }
    }
    if (n.children.empty()) return empty();
    if (n.children.size() == 1) return std::move(n.children.front());
    return n;
  }
};

struct Flags {
  bool caseless = false;   // i
  bool dotall = false;     // s
  bool multiline = false;  // m
  bool extended = false;   // x
  bool anchored = false;   // A
  bool ungreedy = false;   // U in PCRE, G in Snort
  std::string other;       // rule-buffer modifiers that do not change regex semantics

  // Letters that are not PCRE options are kept in `other`; returns false on a
  // character that is neither.
  static bool parse(std::string_view letters, Flags& out, bool snort_letters = true) {
    for (char c : letters) {
      switch (c) {
        case 'i': out.caseless = true; break;
        case 's': out.dotall = true; break;
        case 'm': out.multiline = true; break;
        case 'x': out.extended = true; break;
        case 'A': out.anchored = true; break;
        case 'E': break;
        case 'G': out.ungreedy = true; break;
        default:
          if (snort_letters && std::string_view("RUIPHDMCKSYBOT").find(c) != std::string_view::npos) {
            out.other.push_back(c);
            break;
          }
          return false;
      }
    }
    return true;
  }

  std::string letters() const {
    std::string s;
    if (caseless) s += 'i';
    if (dotall) s += 's';
    if (multiline) s += 'm';
    if (extended) s += 'x';
    if (anchored) s += 'A';
    if (ungreedy) s += 'G';
    return s + other;
  }
};

enum class DiagKind { unsupported_feature, syntax_error, invalid_backref };

inline const char* to_string(DiagKind k) {
  switch (k) {
    case DiagKind::unsupported_feature: return "unsupported-feature";
    case DiagKind::syntax_error: return "syntax-error";
    case DiagKind::invalid_backref: return "invalid-backref";
  }
  return "unknown";
}

struct ParseDiagnostic {
  std::size_t position = 0;
  DiagKind kind = DiagKind::syntax_error;
  std::string message;
};

struct Pattern {
  Node ast;
  int group_count = 0;
  bool anchor_start = false;
  bool anchor_end = false;
};

class ParseResult {
 public:
  ParseResult(Pattern p) : v_(std::move(p)) {}
  ParseResult(ParseDiagnostic d) : v_(std::move(d)) {}
  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }
  const Pattern& value() const { return std::get<0>(v_); }
  Pattern& value() { return std::get<0>(v_); }
  const ParseDiagnostic& error() const { return std::get<1>(v_); }

 private:
  std::variant<Pattern, ParseDiagnostic> v_;
};

struct ParseOptions {
  int expansion_cap = 64;  // largest repetition bound that is expanded
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view p, const Flags& f, const ParseOptions& o) : src_(p), flags_(f), opts_(o) {}

  ParseResult run() {
    prescan_groups();
    Pattern out;
    if (flags_.anchored) out.anchor_start = true;
    std::size_t end = src_.size();
    if (!src_.empty() && src_.front() == '^') {
      out.anchor_start = true;
      pos_ = 1;
    }
    if (end > pos_ && src_[end - 1] == '$' && !escaped_at(end - 1)) {
      out.anchor_end = true;
      limit_ = end - 1;
    } else {
      limit_ = end;
    }
    if ((out.anchor_start && !flags_.anchored) || out.anchor_end) {
      if (flags_.multiline) return fail(0, DiagKind::unsupported_feature, "multiline anchors");
    }
    Node ast = parse_alt(0);
    if (failed_) return *diag_;
    if (pos_ < limit_) return fail(pos_, DiagKind::syntax_error, "unmatched ')'");
    if (out.anchor_end && top_level_alt_)
      return fail(limit_, DiagKind::unsupported_feature, "'$' under top-level alternation");
    for (auto& [name, at] : pending_names_) {
      auto it = names_.find(name);
      if (it == names_.end()) return fail(at, DiagKind::invalid_backref, "no group named '" + name + "'");
    }
    resolve_names(ast);
    for (auto& [id, at] : backref_uses_) {
      if (id < 1 || id > group_total_)
        return fail(at, DiagKind::invalid_backref, "reference to non-existent group " + std::to_string(id));
    }
    out.ast = std::move(ast);
    out.group_count = group_total_;
    return out;
  }

 private:
  ParseResult fail(std::size_t at, DiagKind k, std::string msg) {
    return ParseDiagnostic{std::min(at, src_.size()), k, std::move(msg)};
  }
  Node set_fail(std::size_t at, DiagKind k, std::string msg) {
    if (!failed_) {
      failed_ = true;
      diag_ = ParseDiagnostic{std::min(at, src_.size()), k, std::move(msg)};
    }
    return Node::empty();
  }

  bool escaped_at(std::size_t i) const {
    std::size_t n = 0;
    while (i > n && src_[i - n - 1] == '\\') ++n;
    return n % 2 == 1;
  }

  bool at_end() const { return pos_ >= limit_; }
  char peek(std::size_t k = 0) const { return pos_ + k < limit_ ? src_[pos_ + k] : '\0'; }
  bool has(std::size_t k) const { return pos_ + k < limit_; }

  // Counts capturing parentheses so that `\12` can be disambiguated.
  void prescan_groups() {
    bool in_class = false;
    for (std::size_t i = 0; i < src_.size(); ++i) {
      char c = src_[i];
      if (c == '\\') {
        ++i;
        continue;
      }
      if (in_class) {
        if (c == ']') in_class = false;
        continue;
      }
      if (c == '[') {
        in_class = true;
        if (i + 1 < src_.size() && src_[i + 1] == '^') ++i;
        if (i + 1 < src_.size() && src_[i + 1] == ']') ++i;
        continue;
      }
      if (c != '(') continue;
      if (i + 1 < src_.size() && src_[i + 1] == '?') {
        std::string_view rest = src_.substr(i + 2);
        bool named = (rest.size() > 1 && rest[0] == '<' && rest[1] != '=' && rest[1] != '!') ||
                     rest.substr(0, 2) == "P<" || rest.substr(0, 1) == "'";
        if (named) ++prescan_total_;
      } else if (i + 1 < src_.size() && src_[i + 1] == '*') {
        continue;
      } else {
        ++prescan_total_;
      }
    }
  }

  void skip_extended() {
    if (!flags_.extended) return;
    while (!at_end()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
        ++pos_;
      } else if (c == '#') {
        while (!at_end() && peek() != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  Node parse_alt(int depth) {
    Node left = parse_seq(depth);
    if (failed_) return left;
    if (!at_end() && peek() == '|') {
      if (depth == 0) top_level_alt_ = true;
      ++pos_;
      Node right = parse_alt(depth);
      return Node::alt(std::move(left), std::move(right));
    }
    return left;
  }

  Node parse_seq(int depth) {
    std::vector<Node> items;
    while (true) {
      skip_extended();
      if (at_end() || failed_) break;
      char c = peek();
      if (c == '|') break;
      if (c == ')') {
        if (depth == 0) return set_fail(pos_, DiagKind::syntax_error, "unmatched ')'");
        break;
      }
      std::size_t atom_pos = pos_;
      std::optional<Node> atom = parse_atom(depth);
      if (failed_) break;
      skip_extended();
      if (!atom) {
        if (!at_end() && is_quantifier_start()) return set_fail(pos_, DiagKind::syntax_error, "nothing to repeat");
        continue;
      }
      Node q = parse_quantifiers(std::move(*atom), atom_pos);
      if (failed_) break;
      items.push_back(std::move(q));
    }
    return Node::concat(std::move(items));
  }

  bool is_quantifier_start() {
    char c = peek();
    if (c == '*' || c == '+' || c == '?') return true;
    if (c == '{') {
      std::size_t save = pos_;
      int lo, hi;
      bool ok = read_counter(lo, hi);
      pos_ = save;
      return ok;
    }
    return false;
  }

  // Parses {n}, {n,}, {n,m}; hi = -1 for unbounded.
  bool read_counter(int& lo, int& hi) {
    if (peek() != '{') return false;
    std::size_t i = pos_ + 1;
    auto read_num = [&](int& v) {
      std::size_t s = i;
      long long acc = 0;
      while (i < limit_ && src_[i] >= '0' && src_[i] <= '9') {
        acc = acc * 10 + (src_[i] - '0');
        if (acc > 1000000) acc = 1000000;
        ++i;
      }
      v = static_cast<int>(acc);
      return i > s;
    };
    if (!read_num(lo)) return false;
    if (i < limit_ && src_[i] == '}') {
      hi = lo;
      pos_ = i + 1;
      return true;
    }
    if (i >= limit_ || src_[i] != ',') return false;
    ++i;
    if (i < limit_ && src_[i] == '}') {
      hi = -1;
      pos_ = i + 1;
      return true;
    }
    if (!read_num(hi)) return false;
    if (i >= limit_ || src_[i] != '}') return false;
    pos_ = i + 1;
    return true;
  }

  Node parse_quantifiers(Node atom, std::size_t atom_pos) {
    bool quantified = false;
    while (!at_end()) {
      std::size_t qpos = pos_;
      int lo = 0, hi = -1;
      char c = peek();
      if (c == '*') {
        ++pos_;
      } else if (c == '+') {
        ++pos_;
        lo = 1;
      } else if (c == '?') {
        ++pos_;
        hi = 1;
      } else if (c == '{') {
        if (!read_counter(lo, hi)) break;
      } else {
        break;
      }
      if (quantified) return set_fail(qpos, DiagKind::syntax_error, "nothing to repeat");
      bool greedy = true;
      if (!at_end() && peek() == '?') {
        greedy = false;
        ++pos_;
      } else if (!at_end() && peek() == '+') {
        return set_fail(pos_, DiagKind::unsupported_feature, "possessive quantifier");
      }
      if (flags_.ungreedy) greedy = !greedy;
      if (hi != -1 && lo > hi) return set_fail(qpos, DiagKind::syntax_error, "repetition bounds out of order");
      int bound = hi == -1 ? lo : hi;
      if (bound > opts_.expansion_cap)
        return set_fail(qpos, DiagKind::unsupported_feature,
                        "repetition bound " + std::to_string(bound) + " exceeds expansion cap");
      atom = expand(std::move(atom), lo, hi, greedy);
      quantified = true;
      skip_extended();
    }
    (void)atom_pos;
    return atom;
  }

  static Node optional_of(Node x, bool greedy) {
    return greedy ? Node::group_of(Node::alt(std::move(x), Node::empty()))
                  : Node::group_of(Node::alt(Node::empty(), std::move(x)));
  }

  static Node expand(Node atom, int lo, int hi, bool greedy) {
    std::vector<Node> items;
    for (int k = 0; k < lo; ++k) items.push_back(atom);
    if (hi == -1) {
      items.push_back(Node::star(atom, greedy));
    } else if (hi > lo) {
      // Nested optionals: x{0,2} = (?:x(?:x|)|)
      Node tail = optional_of(atom, greedy);
      for (int k = hi - lo - 1; k > 0; --k) {
        tail = optional_of(Node::concat({atom, std::move(tail)}), greedy);
      }
      items.push_back(std::move(tail));
    }
    if (items.empty()) return Node::group_of(Node::empty());
    return Node::concat(std::move(items));
  }

  CharSet fold(CharSet s) const { return flags_.caseless ? s.case_folded() : s; }

  std::optional<Node> parse_atom(int depth) {
    char c = peek();
    switch (c) {
      case '(': return parse_paren(depth);
      case '[': {
        CharSet s = parse_class();
        if (failed_) return std::nullopt;
        return Node::symbol(s);
      }
      case '.': {
        ++pos_;
        CharSet s = CharSet::all();
        if (!flags_.dotall) s = (s & CharSet::single('\n').complement());
        return Node::symbol(s);
      }
      case '\\': return parse_escape();
      case '*':
      case '+':
      case '?': set_fail(pos_, DiagKind::syntax_error, "nothing to repeat"); return std::nullopt;
      case '{':
        if (is_quantifier_start()) {
          set_fail(pos_, DiagKind::syntax_error, "nothing to repeat");
          return std::nullopt;
        }
        ++pos_;
        return Node::literal('{');
      case '^':
      case '$':
        set_fail(pos_, DiagKind::unsupported_feature, std::string("anchor '") + c + "' inside the pattern");
        return std::nullopt;
      default:
        ++pos_;
        return Node::symbol(fold(CharSet::single(static_cast<unsigned char>(c))));
    }
  }

  std::string read_name(char close) {
    std::string name;
    while (!at_end() && peek() != close) name.push_back(src_[pos_++]);
    if (at_end()) {
      set_fail(pos_, DiagKind::syntax_error, "unterminated group name");
      return {};
    }
    ++pos_;
    if (name.empty()) set_fail(pos_, DiagKind::syntax_error, "empty group name");
    return name;
  }

  std::optional<Node> parse_paren(int depth) {
    std::size_t open_pos = pos_;
    ++pos_;
    int capture_id = 0;
    std::string name;
    if (peek() == '*') {
      set_fail(open_pos, DiagKind::unsupported_feature, "backtracking control verb");
      return std::nullopt;
    }
    if (peek() == '?') {
      ++pos_;
      char k = peek();
      if (k == ':') {
        ++pos_;
      } else if (k == '#') {
        while (!at_end() && peek() != ')') ++pos_;
        if (at_end()) {
          set_fail(open_pos, DiagKind::syntax_error, "unterminated comment");
          return std::nullopt;
        }
        ++pos_;
        return std::nullopt;
      } else if (k == '=' || k == '!') {
        set_fail(open_pos, DiagKind::unsupported_feature, "lookahead assertion");
        return std::nullopt;
      } else if (k == '<' && (peek(1) == '=' || peek(1) == '!')) {
        set_fail(open_pos, DiagKind::unsupported_feature, "lookbehind assertion");
        return std::nullopt;
      } else if (k == '>') {
        set_fail(open_pos, DiagKind::unsupported_feature, "atomic group");
        return std::nullopt;
      } else if (k == '|') {
        set_fail(open_pos, DiagKind::unsupported_feature, "branch reset group (duplicate group numbers)");
        return std::nullopt;
      } else if (k == '(') {
        set_fail(open_pos, DiagKind::unsupported_feature, "conditional group");
        return std::nullopt;
      } else if (k == 'C') {
        set_fail(open_pos, DiagKind::unsupported_feature, "callout");
        return std::nullopt;
      } else if (k == 'R' || k == '&' || (k >= '0' && k <= '9') || ((k == '+' || k == '-') && peek(1) >= '0' && peek(1) <= '9') ||
                 (k == 'P' && peek(1) == '>')) {
        set_fail(open_pos, DiagKind::unsupported_feature, "recursion or subroutine call");
        return std::nullopt;
      } else if (k == 'P' && peek(1) == '=') {
        pos_ += 2;
        std::string ref = read_name(')');
        if (failed_) return std::nullopt;
        return named_backref(ref, open_pos);
      } else if (k == '<' || k == '\'' || (k == 'P' && peek(1) == '<')) {
        if (k == 'P') ++pos_;
        char close = peek() == '<' ? '>' : '\'';
        ++pos_;
        name = read_name(close);
        if (failed_) return std::nullopt;
        capture_id = ++group_total_;
        if (names_.count(name)) {
          set_fail(open_pos, DiagKind::unsupported_feature, "duplicate group name '" + name + "'");
          return std::nullopt;
        }
        names_[name] = capture_id;
      } else {
        set_fail(open_pos, DiagKind::unsupported_feature, "inline option setting");
        return std::nullopt;
      }
    } else {
      capture_id = ++group_total_;
    }
    Node inner = parse_alt(depth + 1);
    if (failed_) return std::nullopt;
    if (at_end() || peek() != ')') {
      set_fail(open_pos, DiagKind::syntax_error, "missing ')'");
      return std::nullopt;
    }
    ++pos_;
    if (capture_id) return Node::capture(capture_id, std::move(inner));
    return Node::group_of(std::move(inner));
  }

  Node named_backref(const std::string& name, std::size_t at) {
    auto it = names_.find(name);
    if (it != names_.end()) {
      backref_uses_.emplace_back(it->second, at);
      return Node::backref(it->second);
    }
    // Forward reference by name; resolved after the whole pattern is read.
    pending_names_.emplace_back(name, at);
    Node n = Node::backref(-static_cast<int>(pending_names_.size()));
    return n;
  }

  void resolve_names(Node& n) {
    if (n.kind == NodeKind::Backref && n.group < 0) {
      const std::string& name = pending_names_[static_cast<std::size_t>(-n.group - 1)].first;
      n.group = names_.at(name);
    }
    for (auto& c : n.children) resolve_names(c);
  }

  static int hexval(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  }

  // Reads a single-character escape body after the backslash (shared by
  // atoms and classes). Returns -2 when the escape is a class, filling `cls`.
  int read_char_escape(CharSet& cls, bool in_class) {
    std::size_t at = pos_ - 1;
    if (at_end()) {
      set_fail(at, DiagKind::syntax_error, "trailing backslash");
      return -1;
    }
    char c = src_[pos_++];
    switch (c) {
      case 'd': cls = CharSet::digit(); return -2;
      case 'D': cls = CharSet::digit().complement(); return -2;
      case 'w': cls = CharSet::word(); return -2;
      case 'W': cls = CharSet::word().complement(); return -2;
      case 's': cls = CharSet::space(); return -2;
      case 'S': cls = CharSet::space().complement(); return -2;
      case 'h': cls = CharSet::hspace(); return -2;
      case 'H': cls = CharSet::hspace().complement(); return -2;
      case 'v': cls = CharSet::vspace(); return -2;
      case 'V': cls = CharSet::vspace().complement(); return -2;
      case 'N':
        if (in_class) break;
        cls = CharSet::single('\n').complement();
        return -2;
      case 'n': return '\n';
      case 'r': return '\r';
      case 't': return '\t';
      case 'f': return '\f';
      case 'a': return 7;
      case 'e': return 27;
      case 'b':
        if (in_class) return 8;
        set_fail(at, DiagKind::unsupported_feature, "word boundary assertion");
        return -1;
      case 'x': {
        if (peek() == '{') {
          ++pos_;
          long v = 0;
          std::size_t digits = 0;
          while (!at_end() && hexval(peek()) >= 0) {
            v = v * 16 + hexval(src_[pos_++]);
            if (v > 0x10ffff) v = 0x110000;
            ++digits;
          }
          if (at_end() || peek() != '}' || digits == 0) {
            set_fail(at, DiagKind::syntax_error, "malformed \\x{...} escape");
            return -1;
          }
          ++pos_;
          if (v > 0xff) {
            set_fail(at, DiagKind::unsupported_feature, "code point above 0xff");
            return -1;
          }
          return static_cast<int>(v);
        }
        int v = 0;
        for (int k = 0; k < 2 && !at_end() && hexval(peek()) >= 0; ++k) v = v * 16 + hexval(src_[pos_++]);
        return v;
      }
      case 'c': {
        if (at_end()) {
          set_fail(at, DiagKind::syntax_error, "\\c at end of pattern");
          return -1;
        }
        char x = src_[pos_++];
        if (x >= 'a' && x <= 'z') x = static_cast<char>(x - 32);
        return (x ^ 0x40) & 0xff;
      }
      case '0': {
        int v = 0;
        for (int k = 0; k < 2 && !at_end() && peek() >= '0' && peek() <= '7'; ++k) v = v * 8 + (src_[pos_++] - '0');
        return v;
      }
      case 'o': {
        if (peek() != '{') break;
        ++pos_;
        int v = 0;
        while (!at_end() && peek() >= '0' && peek() <= '7') v = v * 8 + (src_[pos_++] - '0');
        if (at_end() || peek() != '}' || v > 0xff) {
          set_fail(at, DiagKind::syntax_error, "malformed \\o{...} escape");
          return -1;
        }
        ++pos_;
        return v;
      }
      case 'p':
      case 'P':
      case 'X':
      case 'R':
      case 'C':
        set_fail(at, DiagKind::unsupported_feature, std::string("\\") + c + " escape");
        return -1;
      default:
        break;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      set_fail(at, DiagKind::syntax_error, std::string("unknown escape \\") + c);
      return -1;
    }
    if (in_class && c >= '1' && c <= '7') {
      int v = c - '0';
      for (int k = 0; k < 2 && !at_end() && peek() >= '0' && peek() <= '7'; ++k) v = v * 8 + (src_[pos_++] - '0');
      return v & 0xff;
    }
    return static_cast<unsigned char>(c);
  }

  std::optional<Node> parse_escape() {
    std::size_t at = pos_;
    ++pos_;
    if (at_end()) {
      set_fail(at, DiagKind::syntax_error, "trailing backslash");
      return std::nullopt;
    }
    char c = peek();
    if (c >= '1' && c <= '9') {
      // Backreference unless the number exceeds both 9 and the group count,
      // in which case PCRE reads it as octal.
      std::size_t save = pos_;
      long v = 0;
      while (!at_end() && peek() >= '0' && peek() <= '9') {
        v = std::min(v * 10 + (peek() - '0'), 1000000L);
        ++pos_;
      }
      if (v <= 9 || v <= prescan_total_) {
        backref_uses_.emplace_back(static_cast<int>(v), at);
        return Node::backref(static_cast<int>(v));
      }
      pos_ = save;
      if (c >= '8') {
        set_fail(at, DiagKind::invalid_backref, "reference to non-existent group");
        return std::nullopt;
      }
      int o = 0;
      for (int k = 0; k < 3 && !at_end() && peek() >= '0' && peek() <= '7'; ++k) o = o * 8 + (src_[pos_++] - '0');
      return Node::symbol(fold(CharSet::single(static_cast<unsigned char>(o & 0xff))));
    }
    if (c == 'g') {
      ++pos_;
      bool braced = peek() == '{';
      if (braced) ++pos_;
      bool neg = false;
      if (peek() == '-') {
        neg = true;
        ++pos_;
      } else if (peek() == '+') {
        set_fail(at, DiagKind::unsupported_feature, "relative forward reference");
        return std::nullopt;
      }
      if (!(peek() >= '0' && peek() <= '9')) {
        if (braced && !neg) {
          std::string name = read_name('}');
          if (failed_) return std::nullopt;
          return named_backref(name, at);
        }
        set_fail(at, DiagKind::syntax_error, "malformed \\g reference");
        return std::nullopt;
      }
      int v = 0;
      while (!at_end() && peek() >= '0' && peek() <= '9') v = std::min(v * 10 + (src_[pos_++] - '0'), 100000);
      if (braced) {
        if (peek() != '}') {
          set_fail(at, DiagKind::syntax_error, "malformed \\g{...} reference");
          return std::nullopt;
        }
        ++pos_;
      }
      if (neg) v = group_total_ + 1 - v;
      backref_uses_.emplace_back(v, at);
      return Node::backref(v);
    }
    if (c == 'k') {
      ++pos_;
      char open = peek();
      char close = open == '<' ? '>' : open == '{' ? '}' : open == '\'' ? '\'' : '\0';
      if (!close) {
        set_fail(at, DiagKind::syntax_error, "malformed \\k reference");
        return std::nullopt;
      }
      ++pos_;
      std::string name = read_name(close);
      if (failed_) return std::nullopt;
      return named_backref(name, at);
    }
    if (c == 'Q') {
      ++pos_;
      std::vector<Node> lits;
      while (!at_end() && !(peek() == '\\' && peek(1) == 'E')) {
        lits.push_back(Node::symbol(fold(CharSet::single(static_cast<unsigned char>(src_[pos_++])))));
      }
      if (!at_end()) pos_ += 2;
      if (lits.empty()) return std::nullopt;
      if (lits.size() == 1) return lits.front();
      // Quantifiers bind to the last literal only.
      Node last = std::move(lits.back());
      lits.pop_back();
      Node head = Node::concat(std::move(lits));
      Node q = parse_quantifiers(std::move(last), pos_);
      return Node::concat({std::move(head), std::move(q)});
    }
    if (c == 'E') {
      ++pos_;
      return std::nullopt;
    }
    if (std::string_view("BAzZGK").find(c) != std::string_view::npos) {
      set_fail(at, DiagKind::unsupported_feature, std::string("\\") + c + " assertion");
      return std::nullopt;
    }
    CharSet cls;
    int v = read_char_escape(cls, false);
    if (failed_) return std::nullopt;
    if (v == -2) return Node::symbol(fold(cls));
    return Node::symbol(fold(CharSet::single(static_cast<unsigned char>(v))));
  }

  bool posix_class(std::string_view name, CharSet& out) {
    static const std::pair<std::string_view, int> kNames[] = {
        {"alpha", 0}, {"digit", 1}, {"alnum", 2}, {"space", 3}, {"upper", 4}, {"lower", 5}, {"punct", 6},
        {"xdigit", 7}, {"word", 8}, {"blank", 9}, {"cntrl", 10}, {"print", 11}, {"graph", 12}, {"ascii", 13}};
    for (auto& [n, id] : kNames) {
      if (n != name) continue;
      switch (id) {
        case 0: out = CharSet::range('a', 'z') | CharSet::range('A', 'Z'); break;
        case 1: out = CharSet::digit(); break;
        case 2: out = CharSet::range('a', 'z') | CharSet::range('A', 'Z') | CharSet::digit(); break;
        case 3: out = CharSet::space(); break;
        case 4: out = CharSet::range('A', 'Z'); break;
        case 5: out = CharSet::range('a', 'z'); break;
        case 6: {
          CharSet p = CharSet::range(0x21, 0x7e);
          out = p & (CharSet::range('a', 'z') | CharSet::range('A', 'Z') | CharSet::digit()).complement();
          break;
        }
        case 7: out = CharSet::digit() | CharSet::range('a', 'f') | CharSet::range('A', 'F'); break;
        case 8: out = CharSet::word(); break;
        case 9: out = CharSet::single(' ') | CharSet::single('\t'); break;
        case 10: out = CharSet::range(0, 0x1f) | CharSet::single(0x7f); break;
        case 11: out = CharSet::range(0x20, 0x7e); break;
        case 12: out = CharSet::range(0x21, 0x7e); break;
        case 13: out = CharSet::range(0, 0x7f); break;
      }
      return true;
    }
    return false;
  }

  CharSet parse_class() {
    std::size_t open_pos = pos_;
    ++pos_;
    bool negate = false;
    if (peek() == '^') {
      negate = true;
      ++pos_;
    }
    CharSet set;
    bool first = true;
    while (true) {
      if (at_end()) {
        set_fail(open_pos, DiagKind::syntax_error, "missing ']'");
        return set;
      }
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      if (c == '[' && peek(1) == ':') {
        std::size_t close = src_.find(":]", pos_ + 2);
        if (close != std::string_view::npos && close < limit_) {
          std::string_view name = src_.substr(pos_ + 2, close - pos_ - 2);
          bool neg = !name.empty() && name.front() == '^';
          if (neg) name.remove_prefix(1);
          CharSet p;
          if (!posix_class(name, p)) {
            set_fail(pos_, DiagKind::syntax_error, "unknown POSIX class");
            return set;
          }
          set.add(neg ? p.complement() : p);
          pos_ = close + 2;
          continue;
        }
      }
      int lo;
      CharSet cls;
      if (c == '\\') {
        ++pos_;
        if (peek() == 'Q' || peek() == 'E') {
          set_fail(pos_ - 1, DiagKind::unsupported_feature, "\\Q...\\E inside a class");
          return set;
        }
        lo = read_char_escape(cls, true);
        if (failed_) return set;
      } else {
        ++pos_;
        lo = static_cast<unsigned char>(c);
      }
      if (lo == -2) {
        set.add(cls);
        continue;
      }
      if (peek() == '-' && has(1) && peek(1) != ']') {
        std::size_t dash = pos_;
        ++pos_;
        int hi;
        if (peek() == '\\') {
          ++pos_;
          hi = read_char_escape(cls, true);
          if (failed_) return set;
          if (hi == -2) {
            set_fail(dash, DiagKind::syntax_error, "invalid range in character class");
            return set;
          }
        } else if (peek() == '[' && peek(1) == ':') {
          set_fail(dash, DiagKind::syntax_error, "invalid range in character class");
          return set;
        } else {
          hi = static_cast<unsigned char>(src_[pos_++]);
        }
        if (hi < lo) {
          set_fail(dash, DiagKind::syntax_error, "range out of order in character class");
          return set;
        }
        set.add(CharSet::range(static_cast<unsigned>(lo), static_cast<unsigned>(hi)));
      } else {
        set.add(static_cast<unsigned char>(lo));
      }
    }
    set = fold(set);
    if (negate) set = set.complement();
    if (set.empty()) set_fail(open_pos, DiagKind::unsupported_feature, "empty character class");
    return set;
  }

  std::string_view src_;
  Flags flags_;
  ParseOptions opts_;
  std::size_t pos_ = 0;
  std::size_t limit_ = 0;
  bool failed_ = false;
  std::optional<ParseDiagnostic> diag_;
  int group_total_ = 0;
  long prescan_total_ = 0;
  bool top_level_alt_ = false;
  std::map<std::string, int> names_;
  std::vector<std::pair<std::string, std::size_t>> pending_names_;
  std::vector<std::pair<int, std::size_t>> backref_uses_;
};

inline bool nested_same_id(const Node& n, std::vector<int>& open) {
  if (n.kind == NodeKind::Capture) {
    for (int g : open)
      if (g == n.group) return true;
    open.push_back(n.group);
    for (auto& c : n.children)
      if (nested_same_id(c, open)) return true;
    open.pop_back();
    return false;
  }
  for (auto& c : n.children)
    if (nested_same_id(c, open)) return true;
  return false;
}

}  // namespace detail

inline ParseResult parse_rewb(std::string_view pattern, const Flags& flags = {}, const ParseOptions& opts = {}) {
  detail::Parser p(pattern, flags, opts);
  ParseResult r = p.run();
  if (r.ok()) {
    std::vector<int> open;
    if (detail::nested_same_id(r.value().ast, open))
      return ParseDiagnostic{0, DiagKind::unsupported_feature, "nested groups with the same number"};
  }
  return r;
}

namespace detail {

inline std::string print_byte(unsigned char c, bool in_class) {
  static const char* hex = "0123456789abcdef";
  bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  if (alnum || c == '_') return std::string(1, static_cast<char>(c));
  if (!in_class && c > ' ' && c < 0x7f && std::string_view("\\^$.|?*+()[]{}#/-").find(static_cast<char>(c)) == std::string_view::npos)
    return std::string(1, static_cast<char>(c));
  return std::string("\\x") + hex[c >> 4] + hex[c & 15];
}

inline std::string print_set(const CharSet& s) {
  if (s.count() == 1) return print_byte(static_cast<unsigned char>(s.first()), false);
  std::string out = "[";
  for (int c = 0; c < CharSet::kSize;) {
    if (!s.test(static_cast<unsigned char>(c))) {
      ++c;
      continue;
    }
    int e = c;
    while (e + 1 < CharSet::kSize && s.test(static_cast<unsigned char>(e + 1))) ++e;
    out += print_byte(static_cast<unsigned char>(c), true);
    if (e > c) out += "-" + print_byte(static_cast<unsigned char>(e), true);
    c = e + 1;
  }
  return out + "]";
}

inline void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case NodeKind::Empty: break;
    case NodeKind::Symbol: out += print_set(n.set); break;
    case NodeKind::Backref: out += "\\g{" + std::to_string(n.group) + "}"; break;
    case NodeKind::Concat:
      for (auto& c : n.children) {
        if (c.kind == NodeKind::Alt || c.kind == NodeKind::Empty) {
          out += "(?:";
          print_node(c, out);
          out += ")";
        } else {
          print_node(c, out);
        }
      }
      break;
    case NodeKind::Alt:
      print_node(n.children[0], out);
      out += "|";
      print_node(n.children[1], out);
      break;
    case NodeKind::Star: {
      const Node& c = n.child();
      bool atomic = c.kind == NodeKind::Symbol || c.kind == NodeKind::Group || c.kind == NodeKind::Capture ||
                    c.kind == NodeKind::Backref;
      if (!atomic) out += "(?:";
      print_node(c, out);
      if (!atomic) out += ")";
      out += n.greedy ? "*" : "*?";
      break;
    }
    case NodeKind::Group:
      out += "(?:";
      print_node(n.child(), out);
      out += ")";
      break;
    case NodeKind::Capture:
      out += "(";
      print_node(n.child(), out);
      out += ")";
      break;
  }
}

}  // namespace detail

// Pattern text that parses back (without flags) to an equal AST, provided
// capture ids appear in textual order without duplicates.
inline std::string to_pattern(const Node& n) {
  std::string out;
  detail::print_node(n, out);
  return out;
}

// S-expression rendering used by tests and dumps.
inline std::string to_sexpr(const Node& n) {
  switch (n.kind) {
    case NodeKind::Empty: return "Empty";
    case NodeKind::Symbol: return "Symbol{" + n.set.to_string() + "}";
    case NodeKind::Backref: return "Backref(" + std::to_string(n.group) + ")";
    case NodeKind::Star: return std::string(n.greedy ? "Star(" : "LazyStar(") + to_sexpr(n.child()) + ")";
    case NodeKind::Group: return "Group(" + to_sexpr(n.child()) + ")";
    case NodeKind::Capture: return "Capture(" + std::to_string(n.group) + ", " + to_sexpr(n.child()) + ")";
    case NodeKind::Alt: return "Alt(" + to_sexpr(n.children[0]) + ", " + to_sexpr(n.children[1]) + ")";
    case NodeKind::Concat: {
      std::string s = "Concat[";
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) s += ", ";
        s += to_sexpr(n.children[i]);
      }
      return s + "]";
    }
  }
  return "?";
}

}  // namespace rewb
