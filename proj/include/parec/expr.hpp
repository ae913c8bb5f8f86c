// Small arithmetic expression engine for coefficient and data fields.
//
// Grammar (precedence low to high): + -  |  * /  |  unary -  |  ^ (right assoc),
// atoms are numbers, the variables x y z t, the constant pi, and the functions
// sin cos exp sqrt abs atan2. Parsed expressions are immutable and evaluation
// performs no heap allocation, so fields can be sampled at quadrature points in
// hot loops.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace parec::expr {

// Raised on malformed input; offset is the byte position into the source text.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Raised when evaluation leaves the domain (division by zero, sqrt of a
// negative, fractional power of a negative base). Results are never silent NaN.
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ExprFn {
public:
    // Default-constructed function is the constant 0.
    ExprFn();

    static ExprFn constant(double value);

    double operator()(double x, double y, double z, double t) const;

    // Evaluate with `dim` spatial coordinates; variables beyond dim read as 0.
    double eval(const double* coords, int dim, double t) const;

    // Canonical text form; parsing it back yields an equivalent function.
    const std::string& str() const { return text_; }

    bool depends_on(char var) const;  // var is one of 'x','y','z','t'
    bool is_constant() const;

private:
    enum class Op : std::uint8_t { Number, Var, Add, Sub, Mul, Div, Pow, Neg, Call };

    struct Node {
        Op op;
        std::uint8_t aux = 0;  // Var: coordinate index; Call: function id
        std::int32_t a = -1;
        std::int32_t b = -1;
        double value = 0.0;
    };

    double eval_node(std::int32_t idx, const double* coords, int dim, double t) const;

    std::vector<Node> nodes_;  // children precede parents; root is the last node
    std::string text_;

    friend ExprFn parse_expr(std::string_view source);
    friend class Parser;
};

ExprFn parse_expr(std::string_view source);

inline double eval_expr(const ExprFn& f, double x, double y, double z, double t) {
    return f(x, y, z, t);
}

}  // namespace parec::expr
