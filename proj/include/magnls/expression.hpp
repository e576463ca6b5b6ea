#pragma once
// Closed-form scalar expressions in x1..xN, compiled to postfix code.
//
// Grammar (usual precedence, '^' right-associative):
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'x' digit | 'pi' | func '(' expr (',' expr)? ')' | '(' expr ')'
//   func   := exp | sin | cos | sqrt | pow
//
// Evaluation is templated so the same code yields values, gradients (Dual) and
// Hessians (Dual<Dual>).

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "magnls/dual.hpp"

namespace magnls {

class ExpressionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Expression {
 public:
  enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Sin, Cos, Sqrt };
  struct Instr {
    Op op;
    double value = 0.0;
    int var = 0;
  };

  Expression() = default;

  static Expression constant(double c) {
    Expression e;
    e.source_ = std::to_string(c);
    e.code_.push_back({Op::Const, c, 0});
    return e;
  }

  // Variables are x1..x<dimension>; referencing a higher index is an error.
  static Expression parse(const std::string& text, int dimension) {
    Parser p{text, dimension, 0, {}};
    p.skip_ws();
    p.expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("unexpected trailing input");
    Expression e;
    e.source_ = text;
    e.code_ = std::move(p.code);
    return e;
  }

  const std::string& source() const { return source_; }
  bool empty() const { return code_.empty(); }

  template <class T>
  T eval(const Vec<T>& x) const {
    using std::cos;
    using std::exp;
    using std::sin;
    using std::sqrt;
    if (code_.empty()) return T(0.0);
    T stack[32];
    int top = 0;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::Const: stack[top++] = T(in.value); break;
        case Op::Var: stack[top++] = x[in.var]; break;
        case Op::Add: --top; stack[top - 1] = stack[top - 1] + stack[top]; break;
        case Op::Sub: --top; stack[top - 1] = stack[top - 1] - stack[top]; break;
        case Op::Mul: --top; stack[top - 1] = stack[top - 1] * stack[top]; break;
        case Op::Div: --top; stack[top - 1] = stack[top - 1] / stack[top]; break;
        case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
        case Op::Pow: --top; stack[top - 1] = pow(stack[top - 1], stack[top]); break;
        case Op::Exp: stack[top - 1] = exp(stack[top - 1]); break;
        case Op::Sin: stack[top - 1] = sin(stack[top - 1]); break;
        case Op::Cos: stack[top - 1] = cos(stack[top - 1]); break;
        case Op::Sqrt: stack[top - 1] = sqrt(stack[top - 1]); break;
      }
    }
    return stack[0];
  }

 private:
  struct Parser {
    const std::string& s;
    int dimension;
    std::size_t pos;
    std::vector<Instr> code;
    int depth = 0;
    int stack_size = 0;
    int max_stack = 0;

    [[noreturn]] void fail(const std::string& what) const {
      throw ExpressionError("expression '" + s + "' at offset " + std::to_string(pos) + ": " + what);
    }
    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    void emit(Op op, double value = 0.0, int var = 0) {
      code.push_back({op, value, var});
      switch (op) {
        case Op::Const:
        case Op::Var: ++stack_size; break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow: --stack_size; break;
        default: break;
      }
      if (stack_size > max_stack) max_stack = stack_size;
      if (max_stack >= 32) fail("expression nests too deeply");
    }

    void expr() {
      if (++depth > 64) fail("expression nests too deeply");
      term();
      for (;;) {
        if (accept('+')) {
          term();
          emit(Op::Add);
        } else if (accept('-')) {
          term();
          emit(Op::Sub);
        } else {
          break;
        }
      }
      --depth;
    }
    void term() {
      unary();
      for (;;) {
        if (accept('*')) {
          unary();
          emit(Op::Mul);
        } else if (accept('/')) {
          unary();
          emit(Op::Div);
        } else {
          break;
        }
      }
    }
    void unary() {
      if (accept('-')) {
        unary();
        emit(Op::Neg);
      } else if (accept('+')) {
        unary();
      } else {
        power();
      }
    }
    void power() {
      atom();
      if (accept('^')) {
        unary();
        emit(Op::Pow);
      }
    }
    std::string identifier() {
      std::size_t start = pos;
      while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
      return s.substr(start, pos - start);
    }
    void atom() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of input");
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("malformed number");
        }
        pos += used;
        emit(Op::Const, v);
        return;
      }
      if (accept('(')) {
        expr();
        expect(')');
        return;
      }
      if (!std::isalpha(static_cast<unsigned char>(c))) fail(std::string("unexpected character '") + c + "'");
      const std::string id = identifier();
      if (id.size() >= 2 && id[0] == 'x' &&
          id.find_first_not_of("0123456789", 1) == std::string::npos) {
        const int k = std::stoi(id.substr(1));
        if (k < 1 || k > dimension) fail("variable " + id + " outside x1..x" + std::to_string(dimension));
        emit(Op::Var, 0.0, k - 1);
        return;
      }
      if (id == "pi") {
        emit(Op::Const, std::numbers::pi);
        return;
      }
      Op op;
      if (id == "exp") op = Op::Exp;
      else if (id == "sin") op = Op::Sin;
      else if (id == "cos") op = Op::Cos;
      else if (id == "sqrt") op = Op::Sqrt;
      else if (id == "pow") op = Op::Pow;
      else fail("unknown identifier '" + id + "'");
      expect('(');
      expr();
      if (op == Op::Pow) {
        expect(',');
        expr();
      }
      expect(')');
      emit(op);
    }
  };

  std::string source_;
  std::vector<Instr> code_;
};

}  // namespace magnls
