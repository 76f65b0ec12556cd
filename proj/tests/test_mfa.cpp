#include "catch_amalgamated.hpp"

#include <random>

#include "rewb/mfa.hpp"
#include "rewb/oracle.hpp"
#include "rewb/paths.hpp"

using namespace rewb;

namespace {

TwoPhaseMfa compile_str(std::string_view p) {
  auto r = parse_rewb(p);
  REQUIRE(r.ok());
  return compile_pattern(r.value());
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t from = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::size_t to = out.size();
    for (std::size_t k = from; k < to; ++k)
      for (char c : alphabet) out.push_back(out[k] + c);
    from = to;
  }
  return out;
}

int count_kind(const TwoPhaseMfa& a, LabelKind k) {
  int n = 0;
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q)) n += t.label.kind == k;
  return n;
}

int self_loops(const TwoPhaseMfa& a) {
  int n = 0;
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q)) n += t.target == q;
  return n;
}

const char* kCorpus[] = {"(a*)\\1b",  "a(b*)c",   "(ab)c*\\1", "(a)b\\1c*", "(a*)ba*\\1c", "(a*ba*)\\1c",
                         "a*a*",      "(a|a)*",   "(\\1b|a)*", "(a|)*",     "(?:|)*",      "(a*)*b",
                         "(a|b)*\\1", "((a)|b)+\\2", "a*?b",   "(a+)+",     "(?:a?)*b?",   ""};

}  // namespace

TEST_CASE("(a*)\\1b compiles to a single a-loop with one capture", "[mfa]") {
  auto a = compile_str("(a*)\\1b");
  CHECK(a.size() == 5);
  CHECK(self_loops(a) == 1);
  CHECK(count_kind(a, LabelKind::Open) == 1);
  CHECK(count_kind(a, LabelKind::Close) == 1);
  CHECK(count_kind(a, LabelKind::Backref) == 1);
  CHECK(count_kind(a, LabelKind::Symbol) == 2);
  CHECK(is_trim(a));
}

TEST_CASE("the empty pattern is two states and one epsilon edge", "[mfa]") {
  auto a = compile(Node::empty());
  CHECK(a.size() == 2);
  CHECK(a.transition_count() == 1);
  CHECK(bt_run(a, "").accepted);
  CHECK_FALSE(bt_run(a, "a").accepted);
}

TEST_CASE("a(b*)c has exactly one b-loop", "[mfa]") {
  auto a = compile_str("a(b*)c");
  CHECK(self_loops(a) == 1);
  CHECK(count_kind(a, LabelKind::Backref) == 0);
}

TEST_CASE("compiled automata are trim and free of zero-width cycles", "[mfa]") {
  for (const char* p : kCorpus) {
    INFO(p);
    auto a = compile_str(p);
    CHECK(is_trim(a));
    CHECK_FALSE(has_zero_width_cycle(a));
  }
}

TEST_CASE("epsilon-loop elimination", "[mfa]") {
  auto star_empty = compile_str("(?:|)*");
  for (auto& s : all_strings("a", 4)) CHECK(bt_run(star_empty, s).accepted == s.empty());

  // (a|)* against brute-force enumeration: the language is a*.
  auto a = compile_str("(a|)*");
  for (auto& s : all_strings("ab", 6)) CHECK(bt_run(a, s).accepted == (s.find('b') == std::string::npos));

  auto plain = compile(parse_rewb("a(b*)c").value().ast);
  auto again = eliminate_epsilon_loops(plain);
  CHECK(dump(again) == dump(plain));
}

TEST_CASE("compilation preserves the language of every corpus pattern", "[mfa]") {
  for (const char* p : kCorpus) {
    auto r = parse_rewb(p);
    REQUIRE(r.ok());
    auto a = compile_pattern(r.value());
    for (auto& s : all_strings("ab", 8)) {
      INFO(p << " on '" << s << "'");
      CHECK(bt_run(a, s).accepted == interpret_accepts(r.value().ast, s, r.value().group_count));
    }
  }
}

TEST_CASE("path fragments on the (a*)\\1b automaton", "[paths]") {
  auto a = compile_str("(a*)\\1b");
  int open_src = -1, loop = -1;
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q)) {
      if (t.label.kind == LabelKind::Open) open_src = q;
      if (t.target == q) loop = q;
    }
  REQUIRE(open_src >= 0);
  REQUIRE(loop >= 0);

  auto prefix = paths_from_to(a, {a.initial}, {open_src}, std::nullopt);
  for (auto& s : all_strings("ab", 4)) CHECK(prefix.accepts(s) == s.empty());

  auto inner = paths_from_to(a, {loop}, {loop}, 1);
  for (auto& s : all_strings("ab", 4)) CHECK(inner.accepts(s) == (s.find('b') == std::string::npos));

  auto lp = loop_paths(a, loop, 1);
  for (auto& s : all_strings("ab", 4)) CHECK(lp.accepts(s) == (!s.empty() && s.find('b') == std::string::npos));

  int last = -1;
  for (int q = 0; q < a.size(); ++q)
    if (a.is_accepting(q)) last = q;
  CHECK(paths_from_to(a, {last}, {a.initial}, std::nullopt).is_empty());
  CHECK(loop_paths(a, a.initial).is_empty());

  auto b = compile_str("a(b*)c");
  int bloop = -1;
  for (int q = 0; q < b.size(); ++q)
    for (auto& t : b.edges(q))
      if (t.target == q) bloop = q;
  auto bl = loop_paths(b, bloop);
  for (auto& s : all_strings("bc", 4)) CHECK(bl.accepts(s) == (!s.empty() && s.find('c') == std::string::npos));
}

namespace {

PathAutomaton fragment_of(std::string_view p) {
  auto a = compile_str(p);
  std::vector<int> acc;
  for (int q = 0; q < a.size(); ++q)
    if (a.is_accepting(q)) acc.push_back(q);
  return paths_from_to(a, {a.initial}, acc, std::nullopt);
}

}  // namespace

TEST_CASE("intersection of backref-free fragments", "[paths]") {
  auto x = intersect_backref_free(fragment_of("a*"), fragment_of("a+"));
  for (auto& s : all_strings("ab", 5)) CHECK(x.accepts(s) == (!s.empty() && s.find('b') == std::string::npos));
  auto y = intersect_backref_free(fragment_of("a*"), fragment_of("b*"));
  for (auto& s : all_strings("ab", 5)) CHECK(y.accepts(s) == s.empty());
  auto z = intersect_backref_free(fragment_of("(?:ab)*"), fragment_of("[ab]*"));
  auto abstar = fragment_of("(?:ab)*");
  for (auto& s : all_strings("ab", 8)) CHECK(z.accepts(s) == abstar.accepts(s));
  CHECK_THROWS_AS(intersect_backref_free(fragment_of("(a)\\1"), fragment_of("aa")), Error);
}

TEST_CASE("product soundness on random strings", "[paths]") {
  const std::pair<const char*, const char*> pairs[] = {
      {"(?:a|ba)*b?", "[ab]*a[ab]"}, {"a*b*a*", "(?:ab|ba)*"}, {"(?:aa|b)*", "a(?:a|b)*"}, {"[^b]*b[ab]?", "(?:a*b)+"}};
  std::mt19937 rng(99);
  for (auto [p, q] : pairs) {
    auto x = fragment_of(p), y = fragment_of(q);
    auto both = intersect_backref_free(x, y);
    for (int k = 0; k < 1000; ++k) {
      std::string s(std::uniform_int_distribution<std::size_t>(0, 10)(rng), 'a');
      for (auto& c : s) c = (rng() & 1) ? 'a' : 'b';
      INFO(p << " & " << q << " on " << s);
      CHECK(both.accepts(s) == (x.accepts(s) && y.accepts(s)));
    }
  }
}

TEST_CASE("overlap witnesses", "[paths]") {
  CHECK(nonempty_overlap_witness({fragment_of("a*"), fragment_of("a+"), fragment_of("")}) == "a");
  CHECK_FALSE(nonempty_overlap_witness({fragment_of("a+"), fragment_of("b+")}).has_value());
  CHECK(nonempty_overlap_witness({fragment_of("(?:ab)+"), fragment_of("(?:abab)+")}) == "ab");
  // Every power of the unit must start with a, so the unit is "a", which (abc)+ rejects.
  CHECK_FALSE(nonempty_overlap_witness({fragment_of("(?:abc)+"), fragment_of("(?:bca)*a")}).has_value());
  CHECK(nonempty_overlap_witness({fragment_of("(?:abc)+"), fragment_of("a(?:bca)*bc")}) == "abc");
  // \w+ against a literal that starts with a non-word byte: proved absent.
  CHECK_FALSE(nonempty_overlap_witness({fragment_of("\\w+"), fragment_of("\\w*\\.write\\(.*")}).has_value());
}

TEST_CASE("overlap witnesses agree with brute force over short units", "[paths]") {
  const std::vector<std::vector<const char*>> cases{
      {"a*b", "(?:ab)+"}, {"(?:ab)*", "(?:ba)*b"}, {"[ab]+", "b*a"}, {"(?:aab)+", "a(?:aba)*ab"}, {"a+", "(?:aa)+b?"}};
  for (auto& c : cases) {
    std::vector<PathAutomaton> segs;
    for (auto p : c) segs.push_back(fragment_of(p));
    std::optional<std::string> brute;
    for (auto& u : all_strings("ab", 4)) {
      if (u.empty()) continue;
      bool ok = true;
      for (auto& s : segs) {
        bool any = s.contains_epsilon();
        std::string w;
        for (int k = 1; k <= 6 && !any; ++k) any = s.accepts(w += u);
        ok = ok && any;
      }
      if (ok) {
        brute = u;
        break;
      }
    }
    auto got = nonempty_overlap_witness(segs);
    INFO(c[0] << " / " << c[1]);
    CHECK(got.has_value() == brute.has_value());
    if (got && brute) CHECK(got->size() == brute->size());
  }
}
