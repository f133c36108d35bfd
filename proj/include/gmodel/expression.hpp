#pragma once

// Initial-data expressions over x:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary ('*' unary)*
//   unary   := ('+' | '-') unary | product
//   product := primary primary*          (juxtaposition, e.g. "2x", "3sin(x)")
//   primary := number | 'x' | ('sin' | 'cos') '(' expr ')' | '(' expr ')'

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gmodel/error.hpp"
#include "gmodel/grid.hpp"

namespace gmodel {

class ParseError : public Error {
 public:
  ParseError(std::size_t position, std::string expected, const std::string& found)
      : Error("parse error at position " + std::to_string(position) + ": expected " +
              expected + ", found " + found),
        position_(position),
        expected_(std::move(expected)) {}

  /// 0-based offset into the expression text.
  std::size_t position() const noexcept { return position_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::string expected_;
};

/// Parsed expression; evaluation is a tree walk.
class Expression {
 public:
  double operator()(double x) const { return eval(root_, x); }
  std::string_view text() const noexcept { return text_; }

  RealField sample(const PeriodicGrid& grid) const {
    return RealField::from_function(grid, [this](double z) { return (*this)(z); });
  }

 private:
  enum class Op { Number, X, Neg, Add, Sub, Mul, Sin, Cos };
  struct Node {
    Op op;
    double value = 0.0;
    int lhs = -1;
    int rhs = -1;
  };

  double eval(int i, double x) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::Number: return n.value;
      case Op::X: return x;
      case Op::Neg: return -eval(n.lhs, x);
      case Op::Add: return eval(n.lhs, x) + eval(n.rhs, x);
      case Op::Sub: return eval(n.lhs, x) - eval(n.rhs, x);
      case Op::Mul: return eval(n.lhs, x) * eval(n.rhs, x);
      case Op::Sin: return std::sin(eval(n.lhs, x));
      case Op::Cos: return std::cos(eval(n.lhs, x));
    }
    return 0.0;
  }

  int add(Node n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
  }

  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;

  friend class ExpressionParser;
};

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) { e_.text_ = std::string(text); }

  Expression parse() {
    e_.root_ = expr();
    skip_space();
    if (pos_ != src().size()) fail("operator or end of input");
    return std::move(e_);
  }

 private:
  using Op = Expression::Op;

  std::string_view src() const { return e_.text_; }

  void skip_space() {
    while (pos_ < src().size() && std::isspace(static_cast<unsigned char>(src()[pos_]))) ++pos_;
  }

  char peek() {
    skip_space();
    return pos_ < src().size() ? src()[pos_] : '\0';
  }

  [[noreturn]] void fail(const std::string& expected) {
    skip_space();
    const std::string found =
        pos_ < src().size() ? "'" + std::string(1, src()[pos_]) + "'" : "end of input";
    throw ParseError(pos_, expected, found);
  }

  bool starts_primary() {
    const char c = peek();
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '(' ||
           std::isalpha(static_cast<unsigned char>(c));
  }

  int expr() {
    int lhs = term();
    for (char c = peek(); c == '+' || c == '-'; c = peek()) {
      ++pos_;
      const int rhs = term();
      lhs = e_.add({c == '+' ? Op::Add : Op::Sub, 0.0, lhs, rhs});
    }
    return lhs;
  }

  int term() {
    int lhs = unary();
    while (peek() == '*') {
      ++pos_;
      const int rhs = unary();
      lhs = e_.add({Op::Mul, 0.0, lhs, rhs});
    }
    return lhs;
  }

  int unary() {
    const char c = peek();
    if (c == '-' || c == '+') {
      ++pos_;
      const int operand = unary();
      return c == '-' ? e_.add({Op::Neg, 0.0, operand, -1}) : operand;
    }
    int lhs = primary();
    while (starts_primary()) lhs = e_.add({Op::Mul, 0.0, lhs, primary()});
    return lhs;
  }

  int primary() {
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      const int inner = expr();
      expect(')');
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < src().size() && std::isalpha(static_cast<unsigned char>(src()[pos_]))) ++pos_;
      const std::string_view name = src().substr(start, pos_ - start);
      if (name == "x") return e_.add({Op::X});
      if (name == "sin" || name == "cos") {
        expect('(');
        const int arg = expr();
        expect(')');
        return e_.add({name == "sin" ? Op::Sin : Op::Cos, 0.0, arg, -1});
      }
      pos_ = start;
      throw ParseError(start, "'x', 'sin' or 'cos'",
                       "unknown identifier '" + std::string(name) + "'");
    }
    fail("number, 'x', 'sin', 'cos' or '('");
  }

  int number() {
    const std::size_t start = pos_;
    double value = 0.0;
    const char* first = src().data() + pos_;
    const char* last = src().data() + src().size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc()) fail("number");
    pos_ = start + static_cast<std::size_t>(ptr - first);
    return e_.add({Op::Number, value});
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("'") + c + "'");
    ++pos_;
  }

  Expression e_;
  std::size_t pos_ = 0;
};

inline Expression parse_expression(std::string_view text) {
  return ExpressionParser(text).parse();
}

/// Parses `text` and samples it on the grid nodes.
inline RealField init_expression_parser(std::string_view text, const PeriodicGrid& grid) {
  return parse_expression(text).sample(grid);
}

}  // namespace gmodel
