#include "spintwist/notation.hpp"

#include "spintwist/calculus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace spintwist {

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok {
  Name,
  Number,
  Slash,
  Plus,
  Minus,
  Caret,
  Under,
  LBrace,
  RBrace,
  LParen,
  RParen,
  LBrack,
  RBrack,
  Equals,
  End
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  SourceSpan span;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token peek() {
    if (!ahead_) ahead_ = lex();
    return *ahead_;
  }
  Token next() {
    if (ahead_) {
      Token t = *ahead_;
      ahead_.reset();
      return t;
    }
    return lex();
  }

  // raw read of an index block body up to the matching '}'
  std::string read_block_body(SourceSpan& span_out) {
    if (ahead_) {
      // unconsume: only safe when ahead_ is '{' already consumed by caller
      throw SpinError("lexer raw read with lookahead pending");
    }
    std::string out;
    span_out = here();
    while (pos_ < src_.size() && src_[pos_] != '}') {
      out += src_[pos_];
      advance();
    }
    if (pos_ >= src_.size())
      throw ParseError(here(), ParseCategory::Lexical,
                       "unterminated index block");
    advance();  // consume '}'
    span_out.col_end = col_;
    return out;
  }

  SourceSpan here() const {
    SourceSpan s;
    s.line = line_;
    s.col_start = col_;
    s.col_end = col_;
    return s;
  }

 private:
  void advance() {
    if (pos_ < src_.size() && src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  Token lex() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
        continue;
      }
      break;
    }
    Token t;
    t.span = here();
    if (pos_ >= src_.size()) {
      t.kind = Tok::End;
      return t;
    }
    char c = src_[pos_];
    auto single = [&](Tok k) {
      t.kind = k;
      t.text = std::string(1, c);
      advance();
      t.span.col_end = col_;
      return t;
    };
    switch (c) {
      case '/': return single(Tok::Slash);
      case '+': return single(Tok::Plus);
      case '-': return single(Tok::Minus);
      case '^': return single(Tok::Caret);
      case '_': return single(Tok::Under);
      case '{': return single(Tok::LBrace);
      case '}': return single(Tok::RBrace);
      case '(': return single(Tok::LParen);
      case ')': return single(Tok::RParen);
      case '[': return single(Tok::LBrack);
      case ']': return single(Tok::RBrack);
      case '=': return single(Tok::Equals);
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      t.kind = Tok::Number;
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        t.text += src_[pos_];
        advance();
      }
      t.span.col_end = col_;
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      t.kind = Tok::Name;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])))) {
        t.text += src_[pos_];
        advance();
      }
      t.span.col_end = col_;
      return t;
    }
    throw ParseError(t.span, ParseCategory::Lexical,
                     std::string("unexpected character '") + c + "'");
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::optional<Token> ahead_;
};

// ---------------------------------------------------------------------------
// Parser

struct Proto {
  Coefficient c = Coefficient::one();
  std::vector<Factor> factors;
  std::vector<DerivOp> pending;
  std::vector<SymDirective> syms;
};

struct InlineGroup {
  bool antisym = false;
  std::vector<std::string> names;  // display names (prime included)
};

class Parser {
 public:
  Parser(const std::string& src, const SymbolTable& tab)
      : lex_(src), tab_(tab) {}

  Expression parse() {
    auto protos = parse_sum(/*stop_equals=*/false);
    Token t = lex_.peek();
    if (t.kind != Tok::End)
      throw ParseError(t.span, ParseCategory::Grammar,
                       "unexpected trailing input");
    return finish(protos);
  }

 private:
  Expression finish(std::vector<Proto>& protos) {
    Expression e;
    for (auto& p : protos) {
      if (!p.pending.empty())
        throw ParseError(lex_.here(), ParseCategory::Grammar,
                         "dangling derivative operator without operand");
      Term t;
      t.coeff = p.c;
      t.factors = std::move(p.factors);
      t.syms = std::move(p.syms);
      e.terms.push_back(std::move(t));
    }
    try {
      validate_expression(e, tab_);
    } catch (const SpinError& err) {
      throw ParseError(lex_.here(), ParseCategory::IndexBalance, err.what());
    }
    return e;
  }

  std::vector<Proto> parse_sum(bool stop_equals) {
    std::vector<Proto> out;
    bool first = true;
    for (;;) {
      Token t = lex_.peek();
      int sign = 1;
      if (t.kind == Tok::Plus || t.kind == Tok::Minus) {
        lex_.next();
        sign = t.kind == Tok::Minus ? -1 : 1;
      } else if (!first) {
        break;
      }
      auto protos = parse_term();
      for (auto& p : protos) {
        if (sign < 0) p.c.negate();
        out.push_back(std::move(p));
      }
      first = false;
      Token nx = lex_.peek();
      if (nx.kind == Tok::End || nx.kind == Tok::RParen ||
          nx.kind == Tok::RBrack ||
          (stop_equals && nx.kind == Tok::Equals) ||
          nx.kind == Tok::Equals)
        break;
    }
    return out;
  }

  std::vector<Proto> parse_term() {
    std::vector<Proto> protos(1);
    std::vector<InlineGroup> group_stack;
    std::vector<SymDirective> closed_groups;  // innermost first

    bool saw_element = false;
    for (;;) {
      Token t = lex_.peek();
      if (t.kind == Tok::End || t.kind == Tok::Plus || t.kind == Tok::Minus ||
          t.kind == Tok::RParen || t.kind == Tok::RBrack ||
          t.kind == Tok::Equals)
        break;
      saw_element = true;
      if (t.kind == Tok::Number) {
        lex_.next();
        Coefficient frag = Coefficient::of(
            Rational(std::stoll(t.text)));
        if (lex_.peek().kind == Tok::Name && lex_.peek().text == "i") {
          lex_.next();
          frag.mul_ipow(1);
        }
        maybe_divide(frag);
        for (auto& p : protos) p.c = p.c * frag;
        continue;
      }
      if (t.kind == Tok::Name && t.text == "i") {
        lex_.next();
        Coefficient frag = Coefficient::of(Rational(1), 1);
        maybe_divide(frag);
        for (auto& p : protos) p.c = p.c * frag;
        continue;
      }
      if (t.kind == Tok::LParen) {
        lex_.next();
        auto sub = parse_sum(false);
        Token close = lex_.next();
        if (close.kind != Tok::RParen)
          throw ParseError(close.span, ParseCategory::Grammar,
                           "expected ')'");
        multiply_sub(protos, sub, t.span);
        continue;
      }
      if (t.kind == Tok::Name &&
          (t.text == "Sym" || t.text == "AntiSym" || t.text == "SymPairs")) {
        lex_.next();
        SymDirective dir = parse_directive_head(t);
        Token open = lex_.next();
        if (open.kind != Tok::LBrack)
          throw ParseError(open.span, ParseCategory::Grammar,
                           "expected '[' after symmetrizer head");
        auto sub = parse_sum(false);
        Token close = lex_.next();
        if (close.kind != Tok::RBrack)
          throw ParseError(close.span, ParseCategory::Grammar,
                           "expected ']'");
        for (auto& s : sub) s.syms.insert(s.syms.begin(), dir);
        multiply_sub(protos, sub, t.span);
        continue;
      }
      if (t.kind == Tok::Name && t.text == "D") {
        lex_.next();
        auto idx = parse_index_blocks(group_stack, closed_groups, true);
        DerivOp op = make_nabla(idx, t.span);
        for (auto& p : protos) p.pending.push_back(op);
        continue;
      }
      if (t.kind == Tok::Name && t.text == "Box") {
        lex_.next();
        for (auto& p : protos)
          p.pending.push_back(DerivOp{DerivKind::Box, {}});
        continue;
      }
      if (t.kind == Tok::Name && t.text == "Delta") {
        lex_.next();
        auto idx = parse_index_blocks(group_stack, closed_groups, true);
        if (idx.size() != 2 || idx[0].kind == IndexKind::World ||
            idx[0].kind != idx[1].kind)
          throw ParseError(t.span, ParseCategory::Grammar,
                           "Delta needs two spinor indices of one kind");
        for (auto& p : protos)
          p.pending.push_back(DerivOp{DerivKind::Delta, {idx[0], idx[1]}});
        continue;
      }
      if (t.kind == Tok::Name) {
        lex_.next();
        const SymbolDecl* decl = tab_.find(t.text);
        if (!decl)
          throw ParseError(t.span, ParseCategory::UnknownKernel,
                           "unknown kernel: " + t.text);
        auto idx = parse_index_blocks(group_stack, closed_groups, false);
        bool any_pending = false;
        for (auto& p : protos)
          if (!p.pending.empty()) any_pending = true;
        if (decl->scalar_atom && idx.empty() && !any_pending) {
          Coefficient frag = Coefficient::one();
          int expo = 1;
          if (lex_.peek().kind == Tok::Caret) {
            lex_.next();
            Token n = lex_.next();
            if (n.kind != Tok::Number)
              throw ParseError(n.span, ParseCategory::Grammar,
                               "expected exponent after '^'");
            expo = std::stoi(n.text);
          }
          frag.scalars[t.text] = expo;
          maybe_divide(frag);
          for (auto& p : protos) p.c = p.c * frag;
          continue;
        }
        Factor f;
        f.kernel = t.text;
        f.indices = idx;
        for (auto& p : protos) {
          Factor g = f;
          g.derivs = std::move(p.pending);
          p.pending.clear();
          p.factors.push_back(std::move(g));
        }
        continue;
      }
      throw ParseError(t.span, ParseCategory::Grammar,
                       "unexpected token '" + t.text + "'");
    }
    if (!saw_element)
      throw ParseError(lex_.here(), ParseCategory::Grammar, "empty term");
    if (!group_stack.empty())
      throw ParseError(lex_.here(), ParseCategory::Grammar,
                       "unclosed symmetrizer bracket in index block");
    // attach inline groups, outermost first
    for (auto it = closed_groups.rbegin(); it != closed_groups.rend(); ++it)
      for (auto& p : protos) p.syms.insert(p.syms.begin(), *it);
    return protos;
  }

  void maybe_divide(Coefficient& frag) {
    if (lex_.peek().kind == Tok::Slash) {
      lex_.next();
      Token n = lex_.next();
      if (n.kind != Tok::Number)
        throw ParseError(n.span, ParseCategory::Grammar,
                         "expected integer denominator");
      frag.rat = frag.rat / Rational(std::stoll(n.text));
    }
  }

  void multiply_sub(std::vector<Proto>& protos, std::vector<Proto>& sub,
                    SourceSpan where) {
    std::vector<Proto> next;
    for (auto& p : protos) {
      for (auto& s : sub) {
        if (p.pending.empty()) {
          Proto r;
          r.c = p.c * s.c;
          r.factors = p.factors;
          r.factors.insert(r.factors.end(), s.factors.begin(),
                           s.factors.end());
          r.pending = s.pending;
          r.syms = p.syms;
          r.syms.insert(r.syms.end(), s.syms.begin(), s.syms.end());
          next.push_back(std::move(r));
        } else if (s.pending.empty() && !s.factors.empty()) {
          // derivative of a parenthesized product: Leibniz now
          Term body;
          body.coeff = s.c;
          body.factors = s.factors;
          Expression expanded =
              apply_deriv_prefix(p.pending, Expression::from_term(body), tab_);
          for (auto& rt : expanded.terms) {
            Proto r;
            r.c = p.c * rt.coeff;
            r.factors = p.factors;
            r.factors.insert(r.factors.end(), rt.factors.begin(),
                             rt.factors.end());
            r.syms = p.syms;
            r.syms.insert(r.syms.end(), s.syms.begin(), s.syms.end());
            next.push_back(std::move(r));
          }
        } else if (s.pending.empty() && s.factors.empty()) {
          Proto r = p;
          r.c = p.c * s.c;
          for (auto& sd : s.syms) r.syms.push_back(sd);
          next.push_back(std::move(r));
        } else {
          throw ParseError(where, ParseCategory::Grammar,
                           "operator group inside a derivative scope");
        }
      }
    }
    protos = std::move(next);
  }

  SymDirective parse_directive_head(const Token& head) {
    SymDirective dir;
    dir.antisym = head.text == "AntiSym";
    Token open = lex_.next();
    if (open.kind != Tok::LBrace)
      throw ParseError(open.span, ParseCategory::Grammar,
                       "expected '{' after symmetrizer keyword");
    SourceSpan span;
    std::string body = lex_.read_block_body(span);
    // body: (A B')(C D') ...
    std::size_t i = 0;
    auto skip_ws = [&]() {
      while (i < body.size() &&
             std::isspace(static_cast<unsigned char>(body[i])))
        ++i;
    };
    skip_ws();
    while (i < body.size()) {
      if (body[i] != '(')
        throw ParseError(span, ParseCategory::Grammar,
                         "expected '(' in symmetrizer tuple list");
      ++i;
      std::vector<std::string> tup;
      skip_ws();
      while (i < body.size() && body[i] != ')') {
        std::string nm;
        while (i < body.size() &&
               (std::isalnum(static_cast<unsigned char>(body[i])) ||
                body[i] == '\'')) {
          nm += body[i];
          ++i;
        }
        if (nm.empty())
          throw ParseError(span, ParseCategory::Grammar,
                           "malformed symmetrizer tuple");
        tup.push_back(nm);
        skip_ws();
      }
      if (i >= body.size())
        throw ParseError(span, ParseCategory::Grammar,
                         "unterminated symmetrizer tuple");
      ++i;  // ')'
      dir.tuples.push_back(std::move(tup));
      skip_ws();
    }
    if (dir.tuples.size() < 2)
      throw ParseError(span, ParseCategory::Grammar,
                       "symmetrizer needs at least two tuples");
    return dir;
  }

  DerivOp make_nabla(const std::vector<Index>& idx, SourceSpan span) {
    if (idx.size() == 1 && idx[0].kind == IndexKind::World)
      return DerivOp{DerivKind::NablaWorld, {idx[0]}};
    if (idx.size() == 2 && idx[0].kind != IndexKind::World &&
        idx[1].kind != IndexKind::World && idx[0].kind != idx[1].kind) {
      Index u = idx[0].kind == IndexKind::Unprimed ? idx[0] : idx[1];
      Index p = idx[0].kind == IndexKind::Primed ? idx[0] : idx[1];
      return DerivOp{DerivKind::NablaPair, {u, p}};
    }
    throw ParseError(span, ParseCategory::Grammar,
                     "D needs one world index or an unprimed/primed pair");
  }

  std::vector<Index> parse_index_blocks(std::vector<InlineGroup>& groups,
                                        std::vector<SymDirective>& closed,
                                        bool required) {
    std::vector<Index> out;
    bool any = false;
    for (;;) {
      Token t = lex_.peek();
      Variance var;
      if (t.kind == Tok::Under)
        var = Variance::Lower;
      else if (t.kind == Tok::Caret)
        var = Variance::Upper;
      else
        break;
      lex_.next();
      Token brace = lex_.next();
      if (brace.kind != Tok::LBrace)
        throw ParseError(brace.span, ParseCategory::Grammar,
                         "expected '{' after index marker");
      SourceSpan span;
      std::string body = lex_.read_block_body(span);
      parse_block_items(body, span, var, out, groups, closed);
      any = true;
    }
    if (required && !any)
      throw ParseError(lex_.here(), ParseCategory::Grammar,
                       "expected index block");
    return out;
  }

  void parse_block_items(const std::string& body, SourceSpan span,
                         Variance var, std::vector<Index>& out,
                         std::vector<InlineGroup>& groups,
                         std::vector<SymDirective>& closed) {
    std::size_t i = 0;
    while (i < body.size()) {
      char c = body[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '(' || c == '[') {
        groups.push_back(InlineGroup{c == '[', {}});
        ++i;
        continue;
      }
      if (c == ')' || c == ']') {
        if (groups.empty())
          throw ParseError(span, ParseCategory::Grammar,
                           "unmatched closing symmetrizer bracket");
        InlineGroup g = groups.back();
        if (g.antisym != (c == ']'))
          throw ParseError(span, ParseCategory::Grammar,
                           "mismatched symmetrizer bracket style");
        groups.pop_back();
        if (g.names.size() < 2)
          throw ParseError(span, ParseCategory::Grammar,
                           "symmetrizer group needs at least two indices");
        SymDirective dir;
        dir.antisym = g.antisym;
        for (auto& n : g.names) dir.tuples.push_back({n});
        closed.push_back(std::move(dir));
        ++i;
        continue;
      }
      if (!std::isalpha(static_cast<unsigned char>(c)))
        throw ParseError(span, ParseCategory::Lexical,
                         std::string("bad index character '") + c + "'");
      std::string stem(1, c);
      ++i;
      while (i < body.size() &&
             std::isdigit(static_cast<unsigned char>(body[i]))) {
        stem += body[i];
        ++i;
      }
      bool primed = false;
      if (i < body.size() && body[i] == '\'') {
        primed = true;
        ++i;
      }
      Index ix;
      ix.name = stem;
      ix.var = var;
      if (std::isupper(static_cast<unsigned char>(c)))
        ix.kind = primed ? IndexKind::Primed : IndexKind::Unprimed;
      else {
        if (primed)
          throw ParseError(span, ParseCategory::Grammar,
                           "world indices cannot be primed");
        ix.kind = IndexKind::World;
      }
      out.push_back(ix);
      if (!groups.empty()) groups.back().names.push_back(index_text(ix));
    }
  }

  Lexer lex_;
  const SymbolTable& tab_;
};

}  // namespace

Expression parse_expression(const std::string& text, const SymbolTable& tab) {
  Parser p(text, tab);
  return p.parse();
}

// ---------------------------------------------------------------------------
// Formatting

namespace {

void format_indices(std::ostringstream& os, const std::vector<Index>& idx) {
  std::size_t i = 0;
  while (i < idx.size()) {
    Variance v = idx[i].var;
    os << (v == Variance::Upper ? "^{" : "_{");
    while (i < idx.size() && idx[i].var == v) {
      os << index_text(idx[i]);
      ++i;
    }
    os << "}";
  }
}

void format_factor(std::ostringstream& os, const Factor& f) {
  for (const auto& op : f.derivs) {
    switch (op.kind) {
      case DerivKind::Box:
        os << "Box ";
        break;
      case DerivKind::NablaWorld:
      case DerivKind::NablaPair:
        os << "D";
        format_indices(os, op.idx);
        os << " ";
        break;
      case DerivKind::Delta:
        os << "Delta";
        format_indices(os, op.idx);
        os << " ";
        break;
    }
  }
  os << f.kernel;
  format_indices(os, f.indices);
}

}  // namespace

std::string format_term(const Term& t, bool leading) {
  std::ostringstream os;
  if (t.coeff.negative_leading())
    os << (leading ? "- " : "- ");
  else if (!leading)
    os << "+ ";
  std::string cs = t.coeff.abs_str();
  bool unit_coeff = cs == "1";
  if (!unit_coeff || t.factors.empty()) os << cs << (t.factors.empty() ? "" : " ");
  std::ostringstream body;
  for (std::size_t i = 0; i < t.factors.size(); ++i) {
    if (i) body << " ";
    format_factor(body, t.factors[i]);
  }
  std::string inner = body.str();
  for (auto it = t.syms.rbegin(); it != t.syms.rend(); ++it) {
    std::ostringstream head;
    bool pairs = !it->tuples.empty() && it->tuples[0].size() > 1;
    head << (pairs ? "SymPairs" : (it->antisym ? "AntiSym" : "Sym")) << "{";
    for (const auto& tup : it->tuples) {
      head << "(";
      for (std::size_t j = 0; j < tup.size(); ++j) {
        if (j) head << " ";
        head << tup[j];
      }
      head << ")";
    }
    head << "}[ " << inner << " ]";
    inner = head.str();
  }
  os << inner;
  return os.str();
}

std::string format_expression(const Expression& e) {
  if (e.terms.empty()) return "0";
  std::ostringstream os;
  for (std::size_t i = 0; i < e.terms.size(); ++i) {
    if (i) os << " ";
    os << format_term(e.terms[i], i == 0);
  }
  std::string s = os.str();
  if (s.empty()) return "0";
  return s;
}

// ---------------------------------------------------------------------------
// Wrapper split (used by the derivation checker)

std::optional<std::pair<std::string, std::string>> split_wrapper(
    const std::string& text) {
  // single term of shape:  <prefix tokens> ( <inner> )
  // with nothing after the closing paren and no top-level +/- in the prefix
  int depth = 0;
  std::size_t open = std::string::npos, close = std::string::npos;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '(') {
      if (depth == 0) {
        if (open != std::string::npos) return std::nullopt;  // two groups
        open = i;
      }
      ++depth;
    } else if (c == ')') {
      --depth;
      if (depth < 0) return std::nullopt;
      if (depth == 0) close = i;
    } else if (depth == 0 && (c == '+' || (c == '-' && i > 0))) {
      return std::nullopt;
    }
  }
  if (open == std::string::npos || close == std::string::npos || depth != 0)
    return std::nullopt;
  // nothing but whitespace after close
  for (std::size_t i = close + 1; i < text.size(); ++i)
    if (!std::isspace(static_cast<unsigned char>(text[i])))
      return std::nullopt;
  std::string prefix = text.substr(0, open);
  std::string inner = text.substr(open + 1, close - open - 1);
  // prefix must contain something other than whitespace to be a wrapper;
  // a bare parenthesized sum is not a wrapper
  bool has_prefix = false;
  for (char c : prefix)
    if (!std::isspace(static_cast<unsigned char>(c))) has_prefix = true;
  if (!has_prefix) return std::nullopt;
  return std::make_pair(prefix, inner);
}

}  // namespace spintwist
