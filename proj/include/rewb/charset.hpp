#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <string>

namespace rewb {

// A set of input bytes. Patterns and subjects are byte strings, so the whole
// alphabet fits in 256 bits.
class CharSet {
 public:
  static constexpr int kSize = 256;

  CharSet() = default;

  static CharSet single(unsigned char c) {
    CharSet s;
    s.bits_.set(c);
    return s;
  }
  static CharSet range(unsigned lo, unsigned hi) {
    CharSet s;
    for (unsigned c = lo; c <= hi && c < kSize; ++c) s.bits_.set(c);
    return s;
  }
  static CharSet all() {
    CharSet s;
    s.bits_.set();
    return s;
  }
  static CharSet digit() { return range('0', '9'); }
  static CharSet word() {
    CharSet s = range('a', 'z') | range('A', 'Z') | digit();
    s.add('_');
    return s;
  }
  // PCRE's \s: space, \t \n \v \f \r.
  static CharSet space() { return range('\t', '\r') | single(' '); }
  static CharSet hspace() { return single('\t') | single(' ') | single(0xa0); }
  static CharSet vspace() { return range('\n', '\r') | single(0x85); }

  void add(unsigned char c) { bits_.set(c); }
  void add(const CharSet& o) { bits_ |= o.bits_; }
  bool test(unsigned char c) const { return bits_.test(c); }
  bool empty() const { return bits_.none(); }
  bool full() const { return bits_.all(); }
  std::size_t count() const { return bits_.count(); }

  CharSet complement() const {
    CharSet s;
    s.bits_ = ~bits_;
    return s;
  }
  bool intersects(const CharSet& o) const { return (bits_ & o.bits_).any(); }
  bool subset_of(const CharSet& o) const { return (bits_ & ~o.bits_).none(); }

  // Adds the other-case variant of every ASCII letter in the set.
  CharSet case_folded() const {
    CharSet s = *this;
    for (int c = 'a'; c <= 'z'; ++c) {
      if (bits_.test(c) || bits_.test(c - 32)) {
        s.bits_.set(c);
        s.bits_.set(c - 32);
      }
    }
    return s;
  }

  // Lowest byte, or -1 when empty.
  int first() const {
    for (int c = 0; c < kSize; ++c)
      if (bits_.test(c)) return c;
    return -1;
  }

  // A readable member: lowercase, uppercase, digits, other printable, rest.
  int representative() const {
    int best = -1, best_rank = 1 << 20;
    for (int c = 0; c < kSize; ++c) {
      if (!bits_.test(c)) continue;
      int r = preference_rank(static_cast<unsigned char>(c));
      if (r < best_rank) {
        best_rank = r;
        best = c;
      }
    }
    return best;
  }

  static int preference_rank(unsigned char c) {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c >= 'A' && c <= 'Z') return 26 + (c - 'A');
    if (c >= '0' && c <= '9') return 52 + (c - '0');
    if (c > ' ' && c < 0x7f) return 100 + c;
    if (c == ' ') return 300;
    return 400 + c;
  }

  friend CharSet operator|(CharSet a, const CharSet& b) {
    a.bits_ |= b.bits_;
    return a;
  }
  friend CharSet operator&(CharSet a, const CharSet& b) {
    a.bits_ &= b.bits_;
    return a;
  }
  bool operator==(const CharSet& o) const { return bits_ == o.bits_; }
  bool operator!=(const CharSet& o) const { return bits_ != o.bits_; }

  // Strict weak order so sets can key ordered containers.
  bool operator<(const CharSet& o) const {
    for (int w = kSize - 1; w >= 0; --w) {
      if (bits_.test(w) != o.bits_.test(w)) return o.bits_.test(w);
    }
    return false;
  }

  // Compact display form, e.g. "a", "[0-9A-Z_]", "ANY".
  std::string to_string() const {
    if (full()) return "ANY";
    std::string out;
    int n = 0;
    for (int c = 0; c < kSize;) {
      if (!bits_.test(c)) {
        ++c;
        continue;
      }
      int e = c;
      while (e + 1 < kSize && bits_.test(e + 1)) ++e;
      out += show(c);
      if (e > c + 1) out += "-";
      if (e > c) out += show(e);
      n += e - c + 1;
      c = e + 1;
    }
    if (n == 1) return out;
    return "[" + out + "]";
  }

 private:
  static std::string show(int c) {
    if (c > ' ' && c < 0x7f && c != '[' && c != ']' && c != '-' && c != '\\')
      return std::string(1, static_cast<char>(c));
    static const char* hex = "0123456789abcdef";
    return std::string("\\x") + hex[c >> 4] + hex[c & 15];
  }

  std::bitset<kSize> bits_;
};

}  // namespace rewb
