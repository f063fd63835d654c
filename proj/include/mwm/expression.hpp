#pragma once

// Numeric fields in scenario files: a literal or a small arithmetic
// expression over declared parameters ("1-$p_fire", "100*$lifespan").

#include "mwm/core.hpp"

#include <cctype>
#include <cstdlib>

namespace mwm {

using ParamMap = std::map<std::string, double>;

/// Keeps its source text so that scenarios serialise back verbatim.
struct Number {
  std::string text;

  Number() = default;
  Number(std::string t) : text(std::move(t)) {}
  Number(const char* t) : text(t) {}

  double eval(const ParamMap& params) const;
  bool is_inf() const { return text == "inf"; }
  friend bool operator==(const Number&, const Number&) = default;
};

namespace detail {

class ExprParser {
public:
  ExprParser(std::string_view src, const ParamMap& params) : src_(src), params_(params) {}

  double parse() {
    const double v = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(src_.substr(pos_)) + "'");
    if (!std::isfinite(v)) fail("value is not finite");
    return v;
  }

private:
  [[noreturn]] void fail(const std::string& why) const {
    throw Error("bad number '" + std::string(src_) + "': " + why);
  }
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = factor();
    for (;;) {
      if (eat('*')) v *= factor();
      else if (eat('/')) {
        const double d = factor();
        if (d == 0.0) fail("division by zero");
        v /= d;
      } else return v;
    }
  }
  double factor() {
    if (eat('-')) return -factor();
    if (eat('+')) return factor();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '$') {
      std::size_t end = ++pos_;
      while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_')) ++end;
      const std::string name(src_.substr(pos_, end - pos_));
      pos_ = end;
      if (name.empty()) fail("empty parameter name");
      auto it = params_.find(name);
      if (it == params_.end()) throw Error("unknown parameter '$" + name + "'");
      return it->second;
    }
    // Literal: digits, optional fraction, optional exponent.
    std::size_t end = pos_;
    while (end < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.')) ++end;
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
      if (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
        end = e;
        while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
      }
    }
    if (end == pos_) fail("expected a number or $parameter");
    const std::string lit(src_.substr(pos_, end - pos_));
    char* stop = nullptr;
    const double v = std::strtod(lit.c_str(), &stop);
    if (stop != lit.c_str() + lit.size()) fail("malformed literal '" + lit + "'");
    pos_ = end;
    return v;
  }

  std::string_view src_;
  const ParamMap& params_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline double Number::eval(const ParamMap& params) const {
  if (is_inf()) throw Error("'inf' is not allowed here");
  return detail::ExprParser(text, params).parse();
}

/// Evaluates to a non-negative integer.
inline long long eval_count(const Number& n, const ParamMap& params) {
  const double v = n.eval(params);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) throw Error("'" + n.text + "' is not a non-negative integer");
  return static_cast<long long>(v);
}

} // namespace mwm
