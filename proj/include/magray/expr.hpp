#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "magray/error.hpp"

namespace magray {

// Expression trees over the variables x, y and the imaginary unit i.
// Parsed trees are kept verbatim so that printing and reparsing reproduces them;
// trees built through the arithmetic operators are lightly simplified.
class Expr {
 public:
  enum class Kind { Number, ImagUnit, VarX, VarY, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt, Tanh };
  enum class Var { X, Y };

  struct Node {
    Kind kind;
    double value = 0.0;
    std::shared_ptr<const Node> a, b;
  };

  Expr() : Expr(0.0) {}
  Expr(double v) : node_(make(Kind::Number, v)) {}

  static Expr number(double v) { return Expr(v); }
  static Expr imag() { return Expr(make(Kind::ImagUnit)); }
  static Expr x() { return Expr(make(Kind::VarX)); }
  static Expr y() { return Expr(make(Kind::VarY)); }
  static Expr raw(Kind k, const Expr& a, const Expr& b = Expr()) { return Expr(make(k, 0.0, a.node_, b.node_)); }

  Kind kind() const { return node_->kind; }
  double value() const { return node_->value; }
  Expr lhs() const { return Expr(node_->a); }
  Expr rhs() const { return Expr(node_->b); }
  bool is_unary() const { return is_unary_kind(kind()); }
  bool is_binary() const { return is_binary_kind(kind()); }

  bool is_number() const { return kind() == Kind::Number; }
  bool is_number(double v) const { return is_number() && value() == v; }

  // True when the tree contains neither x nor y.
  bool is_constant() const { return !depends(node_.get()); }
  // True when the tree contains no imaginary unit.
  bool is_real() const { return !has_imag(node_.get()); }

  friend bool operator==(const Expr& p, const Expr& q) { return equal(p.node_.get(), q.node_.get()); }

  friend Expr operator+(const Expr& p, const Expr& q) {
    if (p.is_number(0.0)) return q;
    if (q.is_number(0.0)) return p;
    if (p.is_number() && q.is_number()) return Expr(p.value() + q.value());
    if (q.kind() == Kind::Neg) return p - q.lhs();
    return raw(Kind::Add, p, q);
  }
  friend Expr operator-(const Expr& p, const Expr& q) {
    if (q.is_number(0.0)) return p;
    if (p.is_number(0.0)) return -q;
    if (p.is_number() && q.is_number()) return Expr(p.value() - q.value());
    if (q.kind() == Kind::Neg) return p + q.lhs();
    return raw(Kind::Sub, p, q);
  }
  friend Expr operator*(const Expr& p, const Expr& q) {
    if (p.is_number(0.0) || q.is_number(0.0)) return Expr(0.0);
    if (p.is_number(1.0)) return q;
    if (q.is_number(1.0)) return p;
    if (p.is_number(-1.0)) return -q;
    if (q.is_number(-1.0)) return -p;
    if (p.is_number() && q.is_number()) return Expr(p.value() * q.value());
    if (p.kind() == Kind::Neg) return -(p.lhs() * q);
    if (q.kind() == Kind::Neg) return -(p * q.lhs());
    return raw(Kind::Mul, p, q);
  }
  friend Expr operator/(const Expr& p, const Expr& q) {
    if (p.is_number(0.0)) return Expr(0.0);
    if (q.is_number(1.0)) return p;
    if (p.is_number() && q.is_number() && q.value() != 0.0) return Expr(p.value() / q.value());
    return raw(Kind::Div, p, q);
  }
  friend Expr operator-(const Expr& p) {
    if (p.is_number()) return Expr(-p.value());
    if (p.kind() == Kind::Neg) return p.lhs();
    return raw(Kind::Neg, p);
  }
  friend Expr pow(const Expr& p, const Expr& q) {
    if (q.is_number(0.0)) return Expr(1.0);
    if (q.is_number(1.0)) return p;
    if (p.is_number() && q.is_number()) return Expr(std::pow(p.value(), q.value()));
    return raw(Kind::Pow, p, q);
  }
  friend Expr sin(const Expr& p) { return p.is_number(0.0) ? Expr(0.0) : raw(Kind::Sin, p); }
  friend Expr cos(const Expr& p) { return p.is_number(0.0) ? Expr(1.0) : raw(Kind::Cos, p); }
  friend Expr exp(const Expr& p) { return p.is_number(0.0) ? Expr(1.0) : raw(Kind::Exp, p); }
  friend Expr log(const Expr& p) { return p.is_number(1.0) ? Expr(0.0) : raw(Kind::Log, p); }
  friend Expr sqrt(const Expr& p) { return raw(Kind::Sqrt, p); }
  friend Expr tanh(const Expr& p) { return p.is_number(0.0) ? Expr(0.0) : raw(Kind::Tanh, p); }

  Expr& operator+=(const Expr& q) { return *this = *this + q; }
  Expr& operator-=(const Expr& q) { return *this = *this - q; }
  Expr& operator*=(const Expr& q) { return *this = *this * q; }

  Expr derivative(Var v) const { return diff(*this, v); }
  Expr dx() const { return derivative(Var::X); }
  Expr dy() const { return derivative(Var::Y); }

  // Slow tree-walking evaluation; use CompiledExpr in loops.
  std::complex<double> evaluate(double x, double y) const { return eval(node_.get(), x, y); }

  std::string to_string() const {
    std::string out;
    print(node_.get(), out, true);
    return out;
  }

  const Node* node() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static std::shared_ptr<const Node> make(Kind k, double v = 0.0, std::shared_ptr<const Node> a = nullptr,
                                          std::shared_ptr<const Node> b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->value = v;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  static bool is_unary_kind(Kind k) { return k == Kind::Neg || k >= Kind::Sin; }
  static bool is_binary_kind(Kind k) { return k >= Kind::Add && k <= Kind::Pow; }

  static bool depends(const Node* n) {
    if (n->kind == Kind::VarX || n->kind == Kind::VarY) return true;
    return (n->a && depends(n->a.get())) || (n->b && depends(n->b.get()));
  }
  static bool has_imag(const Node* n) {
    if (n->kind == Kind::ImagUnit) return true;
    return (n->a && has_imag(n->a.get())) || (n->b && has_imag(n->b.get()));
  }
  static bool equal(const Node* p, const Node* q) {
    if (p == q) return true;
    if (!p || !q || p->kind != q->kind) return false;
    if (p->kind == Kind::Number && p->value != q->value) return false;
    return equal(p->a.get(), q->a.get()) && equal(p->b.get(), q->b.get());
  }

  static Expr diff(const Expr& e, Var v) {
    const Expr a = e.node_->a ? e.lhs() : Expr();
    const Expr b = e.node_->b ? e.rhs() : Expr();
    switch (e.kind()) {
      case Kind::Number:
      case Kind::ImagUnit: return Expr(0.0);
      case Kind::VarX: return Expr(v == Var::X ? 1.0 : 0.0);
      case Kind::VarY: return Expr(v == Var::Y ? 1.0 : 0.0);
      case Kind::Add: return diff(a, v) + diff(b, v);
      case Kind::Sub: return diff(a, v) - diff(b, v);
      case Kind::Mul: return diff(a, v) * b + a * diff(b, v);
      case Kind::Div: return (diff(a, v) * b - a * diff(b, v)) / pow(b, Expr(2.0));
      case Kind::Neg: return -diff(a, v);
      case Kind::Pow:
        if (b.is_constant()) return b * pow(a, b - Expr(1.0)) * diff(a, v);
        return e * (diff(b, v) * log(a) + b * diff(a, v) / a);
      case Kind::Sin: return cos(a) * diff(a, v);
      case Kind::Cos: return -(sin(a) * diff(a, v));
      case Kind::Exp: return e * diff(a, v);
      case Kind::Log: return diff(a, v) / a;
      case Kind::Sqrt: return diff(a, v) / (Expr(2.0) * e);
      case Kind::Tanh: return (Expr(1.0) - pow(e, Expr(2.0))) * diff(a, v);
    }
    return Expr(0.0);
  }

  static std::complex<double> eval(const Node* n, double x, double y) {
    using C = std::complex<double>;
    switch (n->kind) {
      case Kind::Number: return n->value;
      case Kind::ImagUnit: return C(0, 1);
      case Kind::VarX: return x;
      case Kind::VarY: return y;
      case Kind::Add: return eval(n->a.get(), x, y) + eval(n->b.get(), x, y);
      case Kind::Sub: return eval(n->a.get(), x, y) - eval(n->b.get(), x, y);
      case Kind::Mul: return eval(n->a.get(), x, y) * eval(n->b.get(), x, y);
      case Kind::Div: return eval(n->a.get(), x, y) / eval(n->b.get(), x, y);
      case Kind::Pow: return cpow(eval(n->a.get(), x, y), eval(n->b.get(), x, y));
      case Kind::Neg: return -eval(n->a.get(), x, y);
      case Kind::Sin: return std::sin(eval(n->a.get(), x, y));
      case Kind::Cos: return std::cos(eval(n->a.get(), x, y));
      case Kind::Exp: return std::exp(eval(n->a.get(), x, y));
      case Kind::Log: return std::log(eval(n->a.get(), x, y));
      case Kind::Sqrt: return std::sqrt(eval(n->a.get(), x, y));
      case Kind::Tanh: return std::tanh(eval(n->a.get(), x, y));
    }
    return 0.0;
  }

 public:
  // Integer powers are expanded by repeated multiplication so that real bases stay real.
  static std::complex<double> cpow(std::complex<double> base, std::complex<double> ex) {
    if (ex.imag() == 0.0 && ex.real() == std::round(ex.real()) && std::abs(ex.real()) <= 64)
      return ipow(base, static_cast<int>(ex.real()));
    return std::pow(base, ex);
  }
  template <class T>
  static T ipow(T base, int k) {
    bool inv = k < 0;
    unsigned m = static_cast<unsigned>(inv ? -k : k);
    T r = T(1.0);
    while (m) {
      if (m & 1u) r *= base;
      base *= base;
      m >>= 1u;
    }
    return inv ? T(1.0) / r : r;
  }

 private:
  static int precedence(Kind k) {
    switch (k) {
      case Kind::Add:
      case Kind::Sub: return 1;
      case Kind::Mul:
      case Kind::Div: return 2;
      case Kind::Neg: return 3;
      case Kind::Pow: return 4;
      default: return 5;
    }
  }

  static void print_number(double v, std::string& out) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    std::string s(buf.data(), ptr);
    if (v < 0) s = "(" + s + ")";
    out += s;
  }

  // Operands are parenthesized whenever their precedence does not bind tighter than the parent,
  // so every printed form reparses to the identical tree.
  static void print_child(const Node* c, int parent_prec, std::string& out) {
    bool paren = precedence(c->kind) <= parent_prec;
    if (c->kind == Kind::Number && c->value < 0) paren = false;
    if (paren) out += "(";
    print(c, out, false);
    if (paren) out += ")";
  }

  static void print(const Node* n, std::string& out, bool) {
    switch (n->kind) {
      case Kind::Number: print_number(n->value, out); return;
      case Kind::ImagUnit: out += "i"; return;
      case Kind::VarX: out += "x"; return;
      case Kind::VarY: out += "y"; return;
      case Kind::Neg:
        out += "-";
        print_child(n->a.get(), precedence(Kind::Neg), out);
        return;
      case Kind::Add:
      case Kind::Sub:
      case Kind::Mul:
      case Kind::Div:
      case Kind::Pow: {
        static const char* ops[] = {" + ", " - ", " * ", " / ", "^"};
        int p = precedence(n->kind);
        // Left operand of a left-associative operator may share its precedence.
        if (n->kind != Kind::Pow && precedence(n->a->kind) == p) {
          print(n->a.get(), out, false);
        } else {
          print_child(n->a.get(), p, out);
        }
        out += ops[static_cast<int>(n->kind) - static_cast<int>(Kind::Add)];
        if (n->kind == Kind::Pow && n->b->kind == Kind::Neg) {
          print(n->b.get(), out, false);
        } else {
          print_child(n->b.get(), p, out);
        }
        return;
      }
      default: {
        static const char* names[] = {"sin", "cos", "exp", "log", "sqrt", "tanh"};
        out += names[static_cast<int>(n->kind) - static_cast<int>(Kind::Sin)];
        out += "(";
        print(n->a.get(), out, false);
        out += ")";
        return;
      }
    }
  }

  std::shared_ptr<const Node> node_;
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr parse() {
    skip();
    Expr e = parse_sum();
    skip();
    if (pos_ != src_.size()) fail({"+", "-", "*", "/", "^", "end of input"});
    return e;
  }

 private:
  using K = Expr::Kind;

  [[noreturn]] void fail(std::vector<std::string> expected) {
    std::string found = pos_ < src_.size() ? "'" + std::string(1, src_[pos_]) + "'" : "end of input";
    throw SyntaxError(pos_, std::move(expected), found);
  }
  void skip() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }
  bool peek(char c) {
    skip();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  Expr parse_sum() {
    Expr e = parse_product();
    while (true) {
      if (peek('+')) {
        ++pos_;
        e = Expr::raw(K::Add, e, parse_product());
      } else if (peek('-')) {
        ++pos_;
        e = Expr::raw(K::Sub, e, parse_product());
      } else {
        return e;
      }
    }
  }
  Expr parse_product() {
    Expr e = parse_unary();
    while (true) {
      if (peek('*')) {
        ++pos_;
        e = Expr::raw(K::Mul, e, parse_unary());
      } else if (peek('/')) {
        ++pos_;
        e = Expr::raw(K::Div, e, parse_unary());
      } else {
        return e;
      }
    }
  }
  Expr parse_unary() {
    if (peek('-')) {
      ++pos_;
      return Expr::raw(K::Neg, parse_unary());
    }
    return parse_power();
  }
  Expr parse_power() {
    Expr base = parse_primary();
    if (peek('^')) {
      ++pos_;
      return Expr::raw(K::Pow, base, parse_unary());
    }
    return base;
  }
  Expr parse_primary() {
    skip();
    if (pos_ >= src_.size()) fail({"number", "identifier", "(", "-"});
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!peek(')')) fail({"+", "-", "*", "/", "^", ")"});
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail({"number", "identifier", "(", "-"});
  }
  Expr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) fail({"digit"});
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail({"digit"});
    }
    double v = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc()) {
      pos_ = start;
      fail({"number"});
    }
    return Expr(v);
  }
  Expr parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    static const std::pair<const char*, K> funcs[] = {{"sin", K::Sin}, {"cos", K::Cos},   {"exp", K::Exp},
                                                     {"log", K::Log}, {"sqrt", K::Sqrt}, {"tanh", K::Tanh}};
    for (auto& [fname, kind] : funcs) {
      if (name == fname) {
        if (!peek('(')) fail({"("});
        ++pos_;
        Expr arg = parse_sum();
        if (!peek(')')) fail({"+", "-", "*", "/", "^", ")"});
        ++pos_;
        return Expr::raw(kind, arg);
      }
    }
    if (name == "x") return Expr::x();
    if (name == "y") return Expr::y();
    if (name == "i") return Expr::imag();
    throw UnknownIdentifier(name, start);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expression(std::string_view src) { return detail::Parser(src).parse(); }

// Postfix program evaluated with a small value stack.
class CompiledExpr {
 public:
  CompiledExpr() : CompiledExpr(Expr()) {}
  explicit CompiledExpr(const Expr& e) : source_(e) {
    int depth = 0;
    emit(e, depth);
    real_ = e.is_real();
    constant_ = e.is_constant();
    if (constant_) cval_ = run<std::complex<double>>(0.0, 0.0);
  }

  std::complex<double> operator()(double x, double y) const {
    if (constant_) return cval_;
    return run<std::complex<double>>(x, y);
  }
  // Real-valued evaluation; only meaningful for expressions without i.
  double real(double x, double y) const {
    if (constant_) return cval_.real();
    if (!real_) return (*this)(x, y).real();
    return run<double>(x, y);
  }
  bool is_constant() const { return constant_; }
  bool is_real() const { return real_; }
  bool is_zero() const { return constant_ && cval_ == std::complex<double>(0.0); }
  const Expr& source() const { return source_; }

 private:
  enum class Op : unsigned char { Const, X, Y, Add, Sub, Mul, Div, Pow, IPow, Neg, Sin, Cos, Exp, Log, Sqrt, Tanh };
  struct Instr {
    Op op;
    int k = 0;
    std::complex<double> c{};
  };

  void emit(const Expr& e, int& depth) {
    using K = Expr::Kind;
    auto push = [&](Instr in) {
      code_.push_back(in);
    };
    auto track = [&](int d) {
      depth += d;
      if (depth > max_depth_) max_depth_ = depth;
    };
    // Fold subtrees free of x and y.
    if (e.is_constant()) {
      push({Op::Const, 0, e.evaluate(0.0, 0.0)});
      track(1);
      return;
    }
    switch (e.kind()) {
      case K::ImagUnit: push({Op::Const, 0, {0.0, 1.0}}); track(1); return;
      case K::VarX: push({Op::X}); track(1); return;
      case K::VarY: push({Op::Y}); track(1); return;
      case K::Pow: {
        Expr ex = e.rhs();
        if (ex.is_constant()) {
          auto v = ex.evaluate(0, 0);
          if (v.imag() == 0.0 && v.real() == std::round(v.real()) && std::abs(v.real()) <= 64) {
            emit(e.lhs(), depth);
            push({Op::IPow, static_cast<int>(v.real())});
            return;
          }
        }
        emit(e.lhs(), depth);
        emit(e.rhs(), depth);
        push({Op::Pow});
        track(-1);
        return;
      }
      case K::Add:
      case K::Sub:
      case K::Mul:
      case K::Div: {
        emit(e.lhs(), depth);
        emit(e.rhs(), depth);
        static const Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
        push({ops[static_cast<int>(e.kind()) - static_cast<int>(K::Add)]});
        track(-1);
        return;
      }
      default: {
        emit(e.lhs(), depth);
        static const Op ops[] = {Op::Neg, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Sqrt, Op::Tanh};
        int idx = e.kind() == K::Neg ? 0 : 1 + static_cast<int>(e.kind()) - static_cast<int>(K::Sin);
        push({ops[idx]});
        return;
      }
    }
  }

  template <class T>
  T run(double x, double y) const {
    constexpr int kStack = 48;
    std::array<T, kStack> small{};
    std::vector<T> big;
    T* st = small.data();
    if (max_depth_ > kStack) {
      big.resize(static_cast<std::size_t>(max_depth_));
      st = big.data();
    }
    int sp = -1;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::Const:
          if constexpr (std::is_same_v<T, double>) st[++sp] = in.c.real();
          else st[++sp] = in.c;
          break;
        case Op::X: st[++sp] = T(x); break;
        case Op::Y: st[++sp] = T(y); break;
        case Op::Add: st[sp - 1] += st[sp]; --sp; break;
        case Op::Sub: st[sp - 1] -= st[sp]; --sp; break;
        case Op::Mul: st[sp - 1] *= st[sp]; --sp; break;
        case Op::Div: st[sp - 1] /= st[sp]; --sp; break;
        case Op::Pow:
          if constexpr (std::is_same_v<T, double>) st[sp - 1] = std::pow(st[sp - 1], st[sp]);
          else st[sp - 1] = Expr::cpow(st[sp - 1], st[sp]);
          --sp;
          break;
        case Op::IPow: st[sp] = Expr::ipow(st[sp], in.k); break;
        case Op::Neg: st[sp] = -st[sp]; break;
        case Op::Sin: st[sp] = std::sin(st[sp]); break;
        case Op::Cos: st[sp] = std::cos(st[sp]); break;
        case Op::Exp: st[sp] = std::exp(st[sp]); break;
        case Op::Log: st[sp] = std::log(st[sp]); break;
        case Op::Sqrt: st[sp] = std::sqrt(st[sp]); break;
        case Op::Tanh: st[sp] = std::tanh(st[sp]); break;
      }
    }
    return st[0];
  }

  Expr source_;
  std::vector<Instr> code_;
  int max_depth_ = 0;
  bool real_ = true;
  bool constant_ = false;
  std::complex<double> cval_{};
};

}  // namespace magray

