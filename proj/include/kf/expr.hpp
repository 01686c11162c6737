#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "kf/jet.hpp"

namespace kf {

/// Expression AST over variables x1..xn, bound named parameters, literals,
/// + - * / ^ (integer exponents), unary minus, and a fixed set of elementary
/// functions.  Programs are immutable after parsing; evaluation is generic
/// over the scalar type (double, complex, jets).
enum class FnId { sin, cos, exp, log, sqrt, tanh };

inline const char* fn_name(FnId f) {
    switch (f) {
        case FnId::sin: return "sin";
        case FnId::cos: return "cos";
        case FnId::exp: return "exp";
        case FnId::log: return "log";
        case FnId::sqrt: return "sqrt";
        case FnId::tanh: return "tanh";
    }
    return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    struct Num { double value; };
    struct Var { int index; };                 // 0-based
    struct Param { std::string name; double value; };
    struct Neg { ExprPtr a; };
    struct Bin { char op; ExprPtr a, b; };     // + - * /
    struct Pow { ExprPtr base; long exponent; };
    struct Call { FnId fn; ExprPtr a; };

    std::variant<Num, Var, Param, Neg, Bin, Pow, Call> node;
};

namespace detail {

template <typename S>
S eval_node(const Expr& e, std::span<const S> x, const S& proto);

template <typename S>
S make_scalar_like(const S& proto, double v) {
    if constexpr (std::is_same_v<S, double>) {
        (void)proto;
        return v;
    } else if constexpr (std::is_same_v<S, std::complex<double>>) {
        (void)proto;
        return S(v, 0.0);
    } else {
        // Jet: constant with the same table
        return S(proto.table_ptr(), typename std::decay_t<decltype(proto.value())>(v));
    }
}

template <typename S>
S eval_node(const Expr& e, std::span<const S> x, const S& proto) {
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    using std::tanh;
    return std::visit(
        [&](const auto& n) -> S {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Expr::Num>) {
                return make_scalar_like(proto, n.value);
            } else if constexpr (std::is_same_v<T, Expr::Var>) {
                return x[n.index];
            } else if constexpr (std::is_same_v<T, Expr::Param>) {
                return make_scalar_like(proto, n.value);
            } else if constexpr (std::is_same_v<T, Expr::Neg>) {
                return -eval_node(*n.a, x, proto);
            } else if constexpr (std::is_same_v<T, Expr::Bin>) {
                S a = eval_node(*n.a, x, proto);
                S b = eval_node(*n.b, x, proto);
                switch (n.op) {
                    case '+': return a + b;
                    case '-': return a - b;
                    case '*': return a * b;
                    default: break;
                }
                if constexpr (std::is_same_v<S, double>) {
                    if (b == 0.0) throw Error(ErrKind::domain_error, "division by zero");
                }
                return a / b;
            } else if constexpr (std::is_same_v<T, Expr::Pow>) {
                S b = eval_node(*n.base, x, proto);
                if constexpr (std::is_same_v<S, double> ||
                              std::is_same_v<S, std::complex<double>>) {
                    long ex = n.exponent < 0 ? -n.exponent : n.exponent;
                    if (ex == 0) return make_scalar_like(proto, 1.0);
                    S acc = b;
                    for (long i = 1; i < ex; ++i) acc = acc * b;  // plain chain keeps evaluation order fixed
                    if (n.exponent < 0) {
                        if constexpr (std::is_same_v<S, double>) {
                            if (acc == 0.0)
                                throw Error(ErrKind::domain_error, "division by zero in x^negative");
                        }
                        return make_scalar_like(proto, 1.0) / acc;
                    }
                    return acc;
                } else {
                    return pow_int(b, n.exponent);
                }
            } else {
                S a = eval_node(*n.a, x, proto);
                switch (n.fn) {
                    case FnId::sin: return sin(a);
                    case FnId::cos: return cos(a);
                    case FnId::exp: return exp(a);
                    case FnId::log:
                        if constexpr (std::is_same_v<S, double>) {
                            if (!(a > 0.0))
                                throw Error(ErrKind::domain_error, "log of nonpositive value");
                        }
                        return log(a);
                    case FnId::sqrt:
                        if constexpr (std::is_same_v<S, double>) {
                            if (a < 0.0)
                                throw Error(ErrKind::domain_error, "sqrt of negative value");
                        }
                        return sqrt(a);
                    case FnId::tanh: return tanh(a);
                }
                throw Error(ErrKind::invalid_input, "unknown function");
            }
        },
        e.node);
}

void print_node(std::ostream& os, const Expr& e);

}  // namespace detail

/// Parsed vector field or map: n expressions over x1..xn with parameters
/// bound to real values at parse time.
class FieldProgram {
public:
    FieldProgram(int n, std::vector<ExprPtr> comps, std::map<std::string, double> params,
                 std::string source)
        : n_(n), comps_(std::move(comps)), params_(std::move(params)),
          source_(std::move(source)) {}

    int dimension() const { return n_; }
    const std::string& source() const { return source_; }
    const std::map<std::string, double>& params() const { return params_; }

    template <typename S>
    std::vector<S> eval(std::span<const S> x, const S& proto) const {
        if (static_cast<int>(x.size()) != n_)
            throw Error(ErrKind::invalid_input, "eval: point dimension mismatch");
        std::vector<S> out;
        out.reserve(n_);
        for (int i = 0; i < n_; ++i) {
            try {
                out.push_back(detail::eval_node<S>(*comps_[i], x, proto));
            } catch (const Error& err) {
                if (err.kind() == ErrKind::domain_error)
                    throw Error(ErrKind::domain_error,
                                "component " + std::to_string(i + 1) + ": " + err.what());
                throw;
            }
        }
        return out;
    }

    std::vector<double> eval(std::span<const double> x) const {
        return eval<double>(x, 0.0);
    }
    std::vector<std::complex<double>> eval(std::span<const std::complex<double>> x) const {
        return eval<std::complex<double>>(x, {});
    }

    std::string pretty_print() const;

private:
    int n_;
    std::vector<ExprPtr> comps_;
    std::map<std::string, double> params_;
    std::string source_;
};

namespace detail {

struct Token {
    enum Kind { number, ident, op, lparen, rparen, lbracket, rbracket, comma, end } kind;
    std::string text;
    double num = 0.0;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) { advance(); }
    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) bump();
        tok_ = Token{Token::end, "", 0.0, line_, col_};
        if (pos_ >= s_.size()) return;
        char c = s_[pos_];
        tok_.line = line_;
        tok_.col = col_;
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
                bump();
            if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
                std::size_t save = pos_;
                bump();
                if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) bump();
                if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
                        bump();
                } else {
                    pos_ = save;  // 'e' belongs to an identifier after all? treat as end of number
                }
            }
            tok_.kind = Token::number;
            tok_.text = s_.substr(start, pos_ - start);
            try {
                tok_.num = std::stod(tok_.text);
            } catch (...) {
                throw ParseError(tok_.line, tok_.col, "bad numeric literal '" + tok_.text + "'");
            }
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                        s_[pos_] == '_'))
                bump();
            tok_.kind = Token::ident;
            tok_.text = s_.substr(start, pos_ - start);
            return;
        }
        bump();
        switch (c) {
            case '(': tok_.kind = Token::lparen; break;
            case ')': tok_.kind = Token::rparen; break;
            case '[': tok_.kind = Token::lbracket; break;
            case ']': tok_.kind = Token::rbracket; break;
            case ',': tok_.kind = Token::comma; break;
            case '+': case '-': case '*': case '/': case '^':
                tok_.kind = Token::op;
                break;
            default:
                throw ParseError(line_, tok_.col, std::string("unexpected character '") + c + "'");
        }
        tok_.text = std::string(1, c);
    }

    void bump() {
        if (s_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

class Parser {
public:
    Parser(const std::string& src, int n, const std::map<std::string, double>& params)
        : lex_(src), n_(n), params_(params) {}

    std::vector<ExprPtr> parse_component_list() {
        expect(Token::lbracket, "expected '[' opening the component list");
        std::vector<ExprPtr> comps;
        if (lex_.peek().kind != Token::rbracket) {
            comps.push_back(parse_expr(0));
            while (lex_.peek().kind == Token::comma) {
                lex_.take();
                comps.push_back(parse_expr(0));
            }
        }
        expect(Token::rbracket, "expected ']' closing the component list");
        if (lex_.peek().kind != Token::end)
            fail("trailing input after ']'");
        return comps;
    }

private:
    // precedence climbing; ^ binds tightest and is right-associative
    ExprPtr parse_expr(int min_bp) {
        ExprPtr lhs = parse_prefix();
        for (;;) {
            const Token& t = lex_.peek();
            if (t.kind != Token::op) break;
            char op = t.text[0];
            int bp;
            switch (op) {
                case '+': case '-': bp = 10; break;
                case '*': case '/': bp = 20; break;
                case '^': bp = 40; break;
                default: bp = -1; break;
            }
            if (bp < min_bp) break;
            lex_.take();
            if (op == '^') {
                ExprPtr rhs = parse_expr(40);  // right-assoc
                lhs = make_pow(lhs, rhs, t);
            } else {
                ExprPtr rhs = parse_expr(bp + 1);
                lhs = std::make_shared<Expr>(Expr{Expr::Bin{op, lhs, rhs}});
            }
        }
        return lhs;
    }

    ExprPtr parse_prefix() {
        const Token t = lex_.take();
        switch (t.kind) {
            case Token::number:
                return std::make_shared<Expr>(Expr{Expr::Num{t.num}});
            case Token::op:
                if (t.text == "-") {
                    // unary minus binds tighter than * but looser than ^
                    ExprPtr a = parse_expr(30);
                    return std::make_shared<Expr>(Expr{Expr::Neg{a}});
                }
                if (t.text == "+") return parse_expr(30);
                fail_at(t, "unexpected operator '" + t.text + "'");
            case Token::lparen: {
                ExprPtr e = parse_expr(0);
                expect(Token::rparen, "expected ')'");
                return e;
            }
            case Token::ident: {
                if (auto fn = lookup_fn(t.text)) {
                    expect(Token::lparen, "expected '(' after function name");
                    ExprPtr a = parse_expr(0);
                    expect(Token::rparen, "expected ')' after function argument");
                    return std::make_shared<Expr>(Expr{Expr::Call{*fn, a}});
                }
                if (t.text.size() > 1 && t.text[0] == 'x') {
                    bool digits = true;
                    for (std::size_t i = 1; i < t.text.size(); ++i)
                        digits = digits && std::isdigit(static_cast<unsigned char>(t.text[i]));
                    if (digits) {
                        int idx = std::atoi(t.text.c_str() + 1);
                        if (idx < 1 || idx > n_)
                            fail_at(t, "variable " + t.text + " out of range for dimension " +
                                           std::to_string(n_));
                        return std::make_shared<Expr>(Expr{Expr::Var{idx - 1}});
                    }
                }
                auto it = params_.find(t.text);
                if (it != params_.end())
                    return std::make_shared<Expr>(Expr{Expr::Param{it->first, it->second}});
                fail_at(t, "unknown identifier '" + t.text + "'");
            }
            default:
                fail_at(t, "unexpected token");
        }
        return nullptr;  // unreachable
    }

    ExprPtr make_pow(ExprPtr base, ExprPtr exponent, const Token& at) {
        double v;
        if (!const_fold(*exponent, v))
            fail_at(at, "exponent must be a constant integer");
        double r = std::round(v);
        if (std::abs(v - r) > 1e-9 || std::abs(r) > 64)
            fail_at(at, "exponent must be an integer with |e| <= 64");
        return std::make_shared<Expr>(Expr{Expr::Pow{base, static_cast<long>(r)}});
    }

    static bool const_fold(const Expr& e, double& out) {
        if (auto* n = std::get_if<Expr::Num>(&e.node)) {
            out = n->value;
            return true;
        }
        if (auto* p = std::get_if<Expr::Param>(&e.node)) {
            out = p->value;
            return true;
        }
        if (auto* g = std::get_if<Expr::Neg>(&e.node)) {
            double a;
            if (!const_fold(*g->a, a)) return false;
            out = -a;
            return true;
        }
        if (auto* b = std::get_if<Expr::Bin>(&e.node)) {
            double x, y;
            if (!const_fold(*b->a, x) || !const_fold(*b->b, y)) return false;
            switch (b->op) {
                case '+': out = x + y; return true;
                case '-': out = x - y; return true;
                case '*': out = x * y; return true;
                case '/': out = x / y; return true;
            }
            return false;
        }
        if (auto* w = std::get_if<Expr::Pow>(&e.node)) {
            double x;
            if (!const_fold(*w->base, x)) return false;
            out = std::pow(x, static_cast<double>(w->exponent));
            return true;
        }
        return false;
    }

    static std::optional<FnId> lookup_fn(const std::string& s) {
        if (s == "sin") return FnId::sin;
        if (s == "cos") return FnId::cos;
        if (s == "exp") return FnId::exp;
        if (s == "log") return FnId::log;
        if (s == "sqrt") return FnId::sqrt;
        if (s == "tanh") return FnId::tanh;
        return std::nullopt;
    }

    void expect(Token::Kind k, const std::string& msg) {
        const Token t = lex_.take();
        if (t.kind != k) fail_at(t, msg);
    }

    [[noreturn]] void fail(const std::string& msg) { fail_at(lex_.peek(), msg); }
    [[noreturn]] void fail_at(const Token& t, const std::string& msg) {
        throw ParseError(t.line, t.col, msg);
    }

    Lexer lex_;
    int n_;
    const std::map<std::string, double>& params_;
};

inline void print_node(std::ostream& os, const Expr& e) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Expr::Num>) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", n.value);
                os << buf;
            } else if constexpr (std::is_same_v<T, Expr::Var>) {
                os << "x" << (n.index + 1);
            } else if constexpr (std::is_same_v<T, Expr::Param>) {
                os << n.name;
            } else if constexpr (std::is_same_v<T, Expr::Neg>) {
                os << "(-";
                print_node(os, *n.a);
                os << ")";
            } else if constexpr (std::is_same_v<T, Expr::Bin>) {
                os << "(";
                print_node(os, *n.a);
                os << " " << n.op << " ";
                print_node(os, *n.b);
                os << ")";
            } else if constexpr (std::is_same_v<T, Expr::Pow>) {
                os << "(";
                print_node(os, *n.base);
                os << "^";
                if (n.exponent < 0) os << "(" << n.exponent << ")";
                else os << n.exponent;
                os << ")";
            } else {
                os << fn_name(n.fn) << "(";
                print_node(os, *n.a);
                os << ")";
            }
        },
        e.node);
}

}  // namespace detail

/// Parse a bracketed comma-separated component list into a FieldProgram.
inline FieldProgram parse_field(const std::string& source, int n,
                                const std::map<std::string, double>& params = {}) {
    if (n < 1) throw Error(ErrKind::invalid_input, "dimension must be >= 1");
    detail::Parser p(source, n, params);
    auto comps = p.parse_component_list();
    if (static_cast<int>(comps.size()) != n)
        throw Error(ErrKind::invalid_input,
                    "expected " + std::to_string(n) + " components, got " +
                        std::to_string(comps.size()));
    return FieldProgram(n, std::move(comps), params, source);
}

inline std::string FieldProgram::pretty_print() const {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < n_; ++i) {
        if (i) os << ", ";
        detail::print_node(os, *comps_[i]);
    }
    os << "]";
    return os.str();
}

/// Evaluate the program at a point (componentwise AST evaluation).
template <typename S>
std::vector<S> eval_field(const FieldProgram& prog, std::span<const S> x) {
    if constexpr (std::is_same_v<S, double>) {
        return prog.eval(x);
    } else {
        return prog.template eval<S>(x, x.empty() ? S{} : x[0]);
    }
}

/// Order-k Taylor expansion of each component about x0: evaluate the AST in
/// jet arithmetic with seed jets x_i = x0_i + (x - x0)_i.
template <typename S = double>
MapJet<S> field_jet(const FieldProgram& prog, std::span<const S> x0, int order) {
    const int n = prog.dimension();
    if (static_cast<int>(x0.size()) != n)
        throw Error(ErrKind::invalid_input, "field_jet: base point dimension mismatch");
    std::vector<Jet<S>> seeds;
    seeds.reserve(n);
    for (int i = 0; i < n; ++i) seeds.push_back(Jet<S>::variable(n, order, i, x0[i]));
    auto vals = prog.template eval<Jet<S>>(
        std::span<const Jet<S>>(seeds.data(), seeds.size()), seeds[0]);
    return MapJet<S>(std::move(vals));
}

}  // namespace kf
