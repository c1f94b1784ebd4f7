#include "pisr/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <optional>

namespace pisr {

ParseError::ParseError(const std::string& message, std::size_t position)
    : std::runtime_error(message + " at position " + std::to_string(position)), position_(position) {}

UnknownIdentifierError::UnknownIdentifierError(std::string identifier, std::size_t position)
    : ParseError("unknown identifier '" + identifier + "'", position), identifier_(std::move(identifier)) {}

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind = Tok::End;
    std::size_t pos = 0;
    std::string_view text;
    double number = 0.0;
};

std::optional<Op> function_op(std::string_view name) {
    if (name == "exp") return Op::Exp;
    if (name == "log") return Op::Log;
    if (name == "sin") return Op::Sin;
    if (name == "cos") return Op::Cos;
    return std::nullopt;
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const char ch = text[i];
        if (std::isspace(static_cast<unsigned char>(ch))) {
            ++i;
            continue;
        }
        Token t;
        t.pos = i;
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
            std::size_t j = i;
            while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
            if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
                if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
                    while (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) ++k;
                    j = k;
                }
            }
            const auto* first = text.data() + i;
            const auto* last = text.data() + j;
            auto [ptr, ec] = std::from_chars(first, last, t.number);
            if (ec != std::errc() || ptr != last) {
                throw ParseError("malformed number '" + std::string(text.substr(i, j - i)) + "'", i);
            }
            t.kind = Tok::Number;
            t.text = text.substr(i, j - i);
            i = j;
        } else if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
            std::size_t j = i;
            while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
            t.kind = Tok::Ident;
            t.text = text.substr(i, j - i);
            i = j;
        } else {
            switch (ch) {
            case '+': t.kind = Tok::Plus; break;
            case '-': t.kind = Tok::Minus; break;
            case '*': t.kind = Tok::Star; break;
            case '/': t.kind = Tok::Slash; break;
            case '^': t.kind = Tok::Caret; break;
            case '(': t.kind = Tok::LParen; break;
            case ')': t.kind = Tok::RParen; break;
            default:
                throw ParseError(std::string("unexpected character '") + ch + "'", i);
            }
            t.text = text.substr(i, 1);
            ++i;
        }
        out.push_back(t);
    }
    Token end;
    end.kind = Tok::End;
    end.pos = text.size();
    out.push_back(end);
    return out;
}

// Recursive descent over
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | ident | func '(' expr ')' | '(' expr ')'
// A minus directly before a literal that is not a base of '^' folds into a
// negative constant, which is how render() writes negative constants.
class Parser {
public:
    Parser(std::string_view text, const VariableSchema& schema) : tokens_(tokenize(text)), schema_(schema) {}

    ExpressionTree run() {
        ExpressionTree tree = expr();
        if (peek().kind != Tok::End) {
            throw ParseError("unexpected '" + std::string(peek().text) + "'", peek().pos);
        }
        return tree;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }
    const Token& next() { return tokens_[pos_++]; }

    void expect(Tok kind, const char* what) {
        if (peek().kind != kind) {
            throw ParseError(std::string("expected ") + what, peek().pos);
        }
        ++pos_;
    }

    ExpressionTree expr() {
        ExpressionTree lhs = term();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            const Op op = next().kind == Tok::Plus ? Op::Add : Op::Sub;
            lhs = ExpressionTree::binary(op, lhs, term());
        }
        return lhs;
    }

    ExpressionTree term() {
        ExpressionTree lhs = unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            const Op op = next().kind == Tok::Star ? Op::Mul : Op::Div;
            lhs = ExpressionTree::binary(op, lhs, unary());
        }
        return lhs;
    }

    ExpressionTree unary() {
        if (peek().kind == Tok::Minus) {
            next();
            if (peek().kind == Tok::Number && peek(1).kind != Tok::Caret) {
                return ExpressionTree::constant(-next().number);
            }
            return ExpressionTree::unary(Op::Neg, unary());
        }
        return power();
    }

    ExpressionTree power() {
        ExpressionTree base = primary();
        if (peek().kind == Tok::Caret) {
            next();
            return ExpressionTree::binary(Op::Pow, base, unary());
        }
        return base;
    }

    ExpressionTree primary() {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Number:
            next();
            if (!std::isfinite(t.number)) {
                throw ParseError("number out of range", t.pos);
            }
            return ExpressionTree::constant(t.number);
        case Tok::Ident: {
            next();
            if (auto fn = function_op(t.text)) {
                expect(Tok::LParen, "'(' after function name");
                ExpressionTree arg = expr();
                expect(Tok::RParen, "')'");
                return ExpressionTree::unary(*fn, arg);
            }
            const int idx = schema_.index_of(t.text);
            if (idx < 0) {
                throw UnknownIdentifierError(std::string(t.text), t.pos);
            }
            return ExpressionTree::variable(static_cast<std::uint32_t>(idx));
        }
        case Tok::LParen: {
            next();
            ExpressionTree inner = expr();
            expect(Tok::RParen, "')'");
            return inner;
        }
        case Tok::End:
            throw ParseError("unexpected end of input", t.pos);
        default:
            throw ParseError("unexpected '" + std::string(t.text) + "'", t.pos);
        }
    }

    std::vector<Token> tokens_;
    const VariableSchema& schema_;
    std::size_t pos_ = 0;
};

}  // namespace

ExpressionTree parse(std::string_view text, const VariableSchema& schema) {
    return Parser(text, schema).run();
}

std::vector<std::string> collect_identifiers(std::string_view text) {
    std::vector<std::string> out;
    for (const Token& t : tokenize(text)) {
        if (t.kind != Tok::Ident || function_op(t.text)) {
            continue;
        }
        std::string name(t.text);
        if (std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(std::move(name));
        }
    }
    return out;
}

}  // namespace pisr
