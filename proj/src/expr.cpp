#include "parec/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace parec::expr {

namespace {

constexpr double kPi = 3.14159265358979323846;

enum Func : std::uint8_t { FSin, FCos, FExp, FSqrt, FAbs, FAtan2 };

struct FuncInfo {
    const char* name;
    int arity;
};

constexpr std::array<FuncInfo, 6> kFuncs = {{
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"sqrt", 1}, {"abs", 1}, {"atan2", 2},
}};

std::string format_number(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    ExprFn run() {
        ExprFn fn;
        fn.nodes_.clear();
        nodes_ = &fn.nodes_;
        std::int32_t root = parse_sum();
        skip_ws();
        if (pos_ != src_.size())
            throw ParseError("unexpected trailing input", pos_);
        if (root < 0)
            throw ParseError("empty expression", 0);
        fn.text_ = print(root, 0);
        return fn;
    }

private:
    using Op = ExprFn::Op;
    using Node = ExprFn::Node;

    std::string_view src_;
    std::size_t pos_ = 0;
    int depth_ = 0;
    std::vector<Node>* nodes_ = nullptr;

    std::int32_t push(Node n) {
        nodes_->push_back(n);
        return static_cast<std::int32_t>(nodes_->size() - 1);
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

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    struct DepthGuard {
        Parser* p;
        explicit DepthGuard(Parser* parser, std::size_t at) : p(parser) {
            if (++p->depth_ > 200) throw ParseError("expression nested too deeply", at);
        }
        ~DepthGuard() { --p->depth_; }
    };

    std::int32_t parse_sum() {
        DepthGuard guard(this, pos_);
        std::int32_t lhs = parse_product();
        for (;;) {
            char c = peek();
            if (c != '+' && c != '-') return lhs;
            ++pos_;
            std::int32_t rhs = parse_product();
            lhs = push({c == '+' ? Op::Add : Op::Sub, 0, lhs, rhs, 0.0});
        }
    }

    std::int32_t parse_product() {
        DepthGuard guard(this, pos_);
        std::int32_t lhs = parse_unary();
        for (;;) {
            char c = peek();
            if (c != '*' && c != '/') return lhs;
            ++pos_;
            std::int32_t rhs = parse_unary();
            lhs = push({c == '*' ? Op::Mul : Op::Div, 0, lhs, rhs, 0.0});
        }
    }

    // Unary minus binds tighter than * / but looser than ^, so -x^2 is -(x^2).
    std::int32_t parse_unary() {
        DepthGuard guard(this, pos_);
        if (eat('-')) {
            std::int32_t inner = parse_unary();
            return push({Op::Neg, 0, inner, -1, 0.0});
        }
        return parse_power();
    }

    std::int32_t parse_power() {
        DepthGuard guard(this, pos_);
        std::int32_t base = parse_atom();
        if (!eat('^')) return base;
        std::int32_t exponent = parse_unary();  // right associative, -exponents allowed
        return push({Op::Pow, 0, base, exponent, 0.0});
    }

    std::int32_t parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        char c = src_[pos_];

        if (c == '(') {
            std::size_t open = pos_;
            ++pos_;
            std::int32_t inner = parse_sum();
            if (!eat(')')) throw ParseError("unbalanced '('", open);
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    std::int32_t parse_number() {
        double value = 0.0;
        const char* begin = src_.data() + pos_;
        const char* end = src_.data() + src_.size();
        auto res = std::from_chars(begin, end, value);
        if (res.ec != std::errc())
            throw ParseError("malformed number", pos_);
        pos_ += static_cast<std::size_t>(res.ptr - begin);
        return push({Op::Number, 0, -1, -1, value});
    }

    std::int32_t parse_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string_view name = src_.substr(start, pos_ - start);

        if (name == "x") return push({Op::Var, 0, -1, -1, 0.0});
        if (name == "y") return push({Op::Var, 1, -1, -1, 0.0});
        if (name == "z") return push({Op::Var, 2, -1, -1, 0.0});
        if (name == "t") return push({Op::Var, 3, -1, -1, 0.0});
        if (name == "pi") return push({Op::Number, 0, -1, -1, kPi});

        for (std::uint8_t f = 0; f < kFuncs.size(); ++f) {
            if (name != kFuncs[f].name) continue;
            skip_ws();
            std::size_t open = pos_;
            if (!eat('(')) throw ParseError("expected '(' after function name", pos_);
            std::int32_t a = parse_sum();
            std::int32_t b = -1;
            if (kFuncs[f].arity == 2) {
                if (!eat(',')) throw ParseError("function expects two arguments", pos_);
                b = parse_sum();
            }
            if (!eat(')')) throw ParseError("unbalanced '(' in function call", open);
            return push({Op::Call, f, a, b, 0.0});
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    // Minimal-parentheses printing; the result re-parses to the same tree.
    static int precedence(Op op) {
        switch (op) {
            case Op::Add:
            case Op::Sub: return 1;
            case Op::Mul:
            case Op::Div: return 2;
            case Op::Neg: return 3;
            case Op::Pow: return 4;
            default: return 5;
        }
    }

    std::string print(std::int32_t idx, int parent_prec) const {
        const Node& n = (*nodes_)[static_cast<std::size_t>(idx)];
        std::string out;
        switch (n.op) {
            case Op::Number: out = format_number(n.value); break;
            case Op::Var: out = std::string(1, "xyzt"[n.aux]); break;
            case Op::Neg: out = "-" + print(n.a, precedence(Op::Neg)); break;
            // Right operands are grouped one level tighter: floating point
            // addition and multiplication do not reassociate exactly, so
            // a + (b - c) must not round-trip as (a + b) - c.
            case Op::Add:
                out = print(n.a, 1) + " + " + print(n.b, 2);
                break;
            case Op::Sub:
                out = print(n.a, 1) + " - " + print(n.b, 2);
                break;
            case Op::Mul:
                out = print(n.a, 2) + "*" + print(n.b, 3);
                break;
            case Op::Div:
                out = print(n.a, 2) + "/" + print(n.b, 3);
                break;
            case Op::Pow:
                out = print(n.a, 5) + "^" + print(n.b, 4);
                break;
            case Op::Call: {
                const FuncInfo& info = kFuncs[n.aux];
                out = std::string(info.name) + "(" + print(n.a, 0);
                if (info.arity == 2) out += ", " + print(n.b, 0);
                out += ")";
                return out;  // function calls never need outer parentheses
            }
        }
        if (precedence(n.op) < parent_prec) out = "(" + out + ")";
        return out;
    }
};

ExprFn parse_expr(std::string_view source) {
    return Parser(source).run();
}

// ---------------------------------------------------------------------------
// Evaluation

ExprFn::ExprFn() {
    nodes_.push_back({Op::Number, 0, -1, -1, 0.0});
    text_ = "0";
}

ExprFn ExprFn::constant(double value) {
    ExprFn fn;
    fn.nodes_[0].value = value;
    fn.text_ = format_number(value);
    return fn;
}

double ExprFn::operator()(double x, double y, double z, double t) const {
    const double coords[3] = {x, y, z};
    return eval(coords, 3, t);
}

double ExprFn::eval(const double* coords, int dim, double t) const {
    return eval_node(static_cast<std::int32_t>(nodes_.size() - 1), coords, dim, t);
}

double ExprFn::eval_node(std::int32_t idx, const double* coords, int dim, double t) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    switch (n.op) {
        case Op::Number: return n.value;
        case Op::Var:
            if (n.aux == 3) return t;
            return n.aux < dim ? coords[n.aux] : 0.0;
        case Op::Neg: return -eval_node(n.a, coords, dim, t);
        case Op::Add: return eval_node(n.a, coords, dim, t) + eval_node(n.b, coords, dim, t);
        case Op::Sub: return eval_node(n.a, coords, dim, t) - eval_node(n.b, coords, dim, t);
        case Op::Mul: return eval_node(n.a, coords, dim, t) * eval_node(n.b, coords, dim, t);
        case Op::Div: {
            double num = eval_node(n.a, coords, dim, t);
            double den = eval_node(n.b, coords, dim, t);
            if (den == 0.0) throw EvalError("division by zero in '" + text_ + "'");
            return num / den;
        }
        case Op::Pow: {
            double base = eval_node(n.a, coords, dim, t);
            double exponent = eval_node(n.b, coords, dim, t);
            double r = std::pow(base, exponent);
            if (std::isnan(r))
                throw EvalError("power outside domain in '" + text_ + "'");
            return r;
        }
        case Op::Call: {
            double a = eval_node(n.a, coords, dim, t);
            switch (static_cast<Func>(n.aux)) {
                case FSin: return std::sin(a);
                case FCos: return std::cos(a);
                case FExp: return std::exp(a);
                case FSqrt:
                    if (a < 0.0) throw EvalError("sqrt of negative value in '" + text_ + "'");
                    return std::sqrt(a);
                case FAbs: return std::fabs(a);
                case FAtan2: return std::atan2(a, eval_node(n.b, coords, dim, t));
            }
            break;
        }
    }
    throw EvalError("corrupt expression node");
}

bool ExprFn::depends_on(char var) const {
    int want;
    switch (var) {
        case 'x': want = 0; break;
        case 'y': want = 1; break;
        case 'z': want = 2; break;
        case 't': want = 3; break;
        default: return false;
    }
    for (const Node& n : nodes_)
        if (n.op == Op::Var && n.aux == want) return true;
    return false;
}

bool ExprFn::is_constant() const {
    for (const Node& n : nodes_)
        if (n.op == Op::Var) return false;
    return true;
}

}  // namespace parec::expr
