#pragma once

#include <stdexcept>
#include <string>

namespace rewb {

enum class ErrorKind {
  malformed_rule,
  backref_fragment,
  search_bound_exceeded,
  bound_exceeded,
  degenerate_family,
  arity_mismatch,
  no_negative_suffix,
  ill_conditioned,
  no_finding,
  precondition,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::malformed_rule: return "malformed-rule";
    case ErrorKind::backref_fragment: return "backref-fragment";
    case ErrorKind::search_bound_exceeded: return "search-bound-exceeded";
    case ErrorKind::bound_exceeded: return "bound-exceeded";
    case ErrorKind::degenerate_family: return "degenerate-family";
    case ErrorKind::arity_mismatch: return "arity-mismatch";
    case ErrorKind::no_negative_suffix: return "no-negative-suffix";
    case ErrorKind::ill_conditioned: return "ill-conditioned";
    case ErrorKind::no_finding: return "no-finding";
    case ErrorKind::precondition: return "precondition";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rewb
