#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "kgqa/sparql.hpp"

namespace kgqa::sparql {

namespace {

enum class TokenType { kEnd, kVariable, kIri, kPrefixedName, kString, kNumber, kWord, kPunct, kLangTag };

struct Token {
  TokenType type = TokenType::kEnd;
  std::string text;
  std::size_t offset = 0;
};

// Keywords that belong to SPARQL but fall outside the supported subset.
constexpr std::array<std::string_view, 31> kUnsupportedKeywords = {
    "FILTER", "OPTIONAL", "UNION",  "MINUS",    "BIND",   "VALUES", "SERVICE", "GRAPH",
    "ORDER",  "GROUP",    "HAVING", "OFFSET",   "FROM",   "NAMED",  "CONSTRUCT", "DESCRIBE",
    "BASE",   "REDUCED",  "INSERT", "DELETE",   "LOAD",   "CLEAR",  "DROP",    "CREATE",
    "EXISTS", "NOT",      "SUM",    "MIN",      "MAX",    "AVG",    "SAMPLE"};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

bool is_unsupported_keyword(std::string_view word) {
  const auto u = upper(word);
  return std::find(kUnsupportedKeywords.begin(), kUnsupportedKeywords.end(), u) !=
         kUnsupportedKeywords.end();
}

bool is_name_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

bool is_pname_char(unsigned char c) {
  return is_name_char(c) || c == '-' || c == '.' || c == ':';
}

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_space();
    Token tok;
    tok.offset = pos_;
    if (pos_ >= text_.size()) return tok;
    const auto c = static_cast<unsigned char>(text_[pos_]);

    if ((c == '?' || c == '$') && pos_ + 1 < text_.size() &&
        is_name_char(static_cast<unsigned char>(text_[pos_ + 1]))) {
      ++pos_;
      const auto start = pos_;
      while (pos_ < text_.size() && is_name_char(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      tok.type = TokenType::kVariable;
      tok.text = std::string(text_.substr(start, pos_ - start));
      return tok;
    }
    if (c == '<') {
      auto end = pos_ + 1;
      while (end < text_.size()) {
        const auto d = static_cast<unsigned char>(text_[end]);
        if (d == '>' || std::isspace(d) || d == '<' || d == '"' || d == '{' || d == '}') break;
        ++end;
      }
      if (end < text_.size() && text_[end] == '>') {
        tok.type = TokenType::kIri;
        tok.text = std::string(text_.substr(pos_ + 1, end - pos_ - 1));
        pos_ = end + 1;
        return tok;
      }
    }
    if (c == '"' || c == '\'') return lex_string(tok);
    if (c == '@' && pos_ + 1 < text_.size() &&
        std::isalpha(static_cast<unsigned char>(text_[pos_ + 1]))) {
      ++pos_;
      const auto start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '-')) {
        ++pos_;
      }
      tok.type = TokenType::kLangTag;
      tok.text = std::string(text_.substr(start, pos_ - start));
      return tok;
    }
    if (std::isdigit(c) ||
        ((c == '+' || c == '-') && pos_ + 1 < text_.size() &&
         std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      return lex_number(tok);
    }
    if (is_name_char(c) || c == ':') {
      const auto start = pos_;
      while (pos_ < text_.size() && is_pname_char(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      while (pos_ > start + 1 && text_[pos_ - 1] == '.') --pos_;
      tok.text = std::string(text_.substr(start, pos_ - start));
      tok.type = tok.text.find(':') == std::string::npos ? TokenType::kWord
                                                          : TokenType::kPrefixedName;
      return tok;
    }
    static constexpr std::array<std::string_view, 6> kTwoChar = {"^^", "&&", "||", "!=", "<=", ">="};
    for (auto two : kTwoChar) {
      if (text_.substr(pos_, 2) == two) {
        pos_ += 2;
        tok.type = TokenType::kPunct;
        tok.text = std::string(two);
        return tok;
      }
    }
    ++pos_;
    tok.type = TokenType::kPunct;
    tok.text = std::string(1, static_cast<char>(c));
    return tok;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      const auto c = static_cast<unsigned char>(text_[pos_]);
      if (std::isspace(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  Token lex_string(Token& tok) {
    const char quote = text_[pos_];
    ++pos_;
    std::string value;
    while (true) {
      if (pos_ >= text_.size()) {
        throw ParseError(ParseErrorKind::kSyntax, tok.offset,
                         std::string(text_.substr(tok.offset, 16)),
                         "unterminated string literal");
      }
      const char c = text_[pos_++];
      if (c == quote) break;
      if (c == '\n' || c == '\r') {
        throw ParseError(ParseErrorKind::kSyntax, tok.offset,
                         std::string(1, quote), "newline inside string literal");
      }
      if (c != '\\') {
        value.push_back(c);
        continue;
      }
      if (pos_ >= text_.size()) continue;
      const char e = text_[pos_++];
      switch (e) {
        case 't': value.push_back('\t'); break;
        case 'n': value.push_back('\n'); break;
        case 'r': value.push_back('\r'); break;
        case 'b': value.push_back('\b'); break;
        case 'f': value.push_back('\f'); break;
        case '"': value.push_back('"'); break;
        case '\'': value.push_back('\''); break;
        case '\\': value.push_back('\\'); break;
        case 'u':
        case 'U': {
          const std::size_t len = e == 'u' ? 4 : 8;
          const auto hex = text_.substr(pos_, len);
          if (hex.size() != len || !std::all_of(hex.begin(), hex.end(), [](unsigned char h) {
                return std::isxdigit(h) != 0;
              })) {
            throw ParseError(ParseErrorKind::kSyntax, pos_ - 2, "\\" + std::string(1, e),
                             "invalid unicode escape");
          }
          append_utf8(value, std::stoul(std::string(hex), nullptr, 16));
          pos_ += len;
          break;
        }
        default:
          throw ParseError(ParseErrorKind::kSyntax, pos_ - 2, "\\" + std::string(1, e),
                           "invalid escape sequence");
      }
    }
    tok.type = TokenType::kString;
    tok.text = std::move(value);
    return tok;
  }

  Token lex_number(Token& tok) {
    const auto start = pos_;
    if (text_[pos_] == '+' || text_[pos_] == '-') ++pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' &&
        std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      auto save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    tok.type = TokenType::kNumber;
    tok.text = std::string(text_.substr(start, pos_ - start));
    return tok;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

enum class Position { kSubject, kPredicate, kObject };

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  QueryAst parse_query() {
    parse_prologue();
    QueryAst ast;
    if (is_word("SELECT")) {
      advance();
      parse_select_clause(ast);
    } else if (is_word("ASK")) {
      advance();
      ast.form = QueryForm::kAsk;
    } else if (tok_.type == TokenType::kWord && is_unsupported_keyword(tok_.text)) {
      unsupported("query form " + upper(tok_.text) + " is not supported");
    } else {
      syntax("expected SELECT or ASK");
    }
    if (is_word("WHERE")) advance();
    parse_group(ast);
    parse_modifiers(ast);
    if (tok_.type != TokenType::kEnd) syntax("unexpected trailing input");
    check_constrained(ast);
    return ast;
  }

 private:
  [[noreturn]] void syntax(const std::string& message) const {
    fail(ParseErrorKind::kSyntax, message);
  }
  [[noreturn]] void unsupported(const std::string& message) const {
    fail(ParseErrorKind::kUnsupportedConstruct, message);
  }
  [[noreturn]] void fail(ParseErrorKind kind, const std::string& message) const {
    const std::string shown = tok_.type == TokenType::kEnd ? "<end of input>" : tok_.text;
    throw ParseError(kind, tok_.offset, shown, message);
  }

  void advance() { tok_ = lexer_.next(); }

  bool is_word(std::string_view keyword) const {
    return tok_.type == TokenType::kWord && upper(tok_.text) == keyword;
  }
  bool is_punct(std::string_view p) const {
    return tok_.type == TokenType::kPunct && tok_.text == p;
  }
  void expect_punct(std::string_view p) {
    if (!is_punct(p)) syntax("expected '" + std::string(p) + "'");
    advance();
  }
  void reject_unsupported_word() const {
    if (tok_.type == TokenType::kWord && is_unsupported_keyword(tok_.text)) {
      unsupported(upper(tok_.text) + " is not supported");
    }
  }

  void parse_prologue() {
    while (true) {
      if (is_word("BASE")) unsupported("BASE declarations are not supported");
      if (!is_word("PREFIX")) return;
      advance();
      if (tok_.type != TokenType::kPrefixedName || tok_.text.back() != ':' ||
          tok_.text.find(':') != tok_.text.size() - 1) {
        syntax("expected a prefix name such as wd:");
      }
      const auto name = tok_.text.substr(0, tok_.text.size() - 1);
      if (name != "wd" && name != "wdt" && name != "rdfs") {
        unsupported("prefix " + tok_.text + " is not supported (wd:, wdt:, rdfs: only)");
      }
      advance();
      if (tok_.type != TokenType::kIri) syntax("expected an IRI after the prefix name");
      advance();
    }
  }

  void parse_select_clause(QueryAst& ast) {
    if (is_word("DISTINCT")) {
      ast.distinct = true;
      advance();
    }
    reject_unsupported_word();
    if (is_punct("*")) unsupported("SELECT * is not supported");
    if (is_punct("(")) {
      advance();
      if (!is_word("COUNT")) {
        if (tok_.type == TokenType::kWord && is_unsupported_keyword(tok_.text)) {
          unsupported(upper(tok_.text) + " aggregates are not supported");
        }
        unsupported("only COUNT expressions are supported in the projection");
      }
      if (ast.distinct) unsupported("SELECT DISTINCT with COUNT is not supported");
      advance();
      expect_punct("(");
      if (is_word("DISTINCT")) {
        ast.distinct = true;
        advance();
      }
      if (is_punct("*")) unsupported("COUNT(*) is not supported");
      if (tok_.type != TokenType::kVariable) syntax("expected a variable inside COUNT");
      ast.count_variable = tok_.text;
      advance();
      expect_punct(")");
      if (!is_word("AS")) syntax("expected AS");
      advance();
      if (tok_.type != TokenType::kVariable) syntax("expected an alias variable");
      ast.count_alias = tok_.text;
      advance();
      expect_punct(")");
      ast.form = QueryForm::kCount;
      if (tok_.type == TokenType::kVariable || is_punct("(")) {
        unsupported("mixing COUNT with other projections requires GROUP BY");
      }
      return;
    }
    ast.form = QueryForm::kSelect;
    while (tok_.type == TokenType::kVariable) {
      ast.projection.push_back(tok_.text);
      advance();
    }
    if (is_punct("(")) unsupported("mixing COUNT with other projections requires GROUP BY");
    if (ast.projection.empty()) syntax("expected at least one projected variable");
    reject_unsupported_word();
  }

  void parse_group(QueryAst& ast) {
    reject_unsupported_word();
    expect_punct("{");
    while (true) {
      if (is_punct("}")) {
        advance();
        return;
      }
      reject_unsupported_word();
      if (is_punct("{")) unsupported("nested group patterns are not supported");
      TriplePattern pattern;
      pattern.subject = parse_term(Position::kSubject);
      pattern.predicate = parse_term(Position::kPredicate);
      if (tok_.type == TokenType::kPunct &&
          (tok_.text == "/" || tok_.text == "|" || tok_.text == "*" || tok_.text == "+" ||
           tok_.text == "?" || tok_.text == "^")) {
        unsupported("property paths are not supported");
      }
      pattern.object = parse_term(Position::kObject);
      ast.patterns.push_back(std::move(pattern));

      if (is_punct(".")) {
        advance();
        continue;
      }
      if (is_punct("}")) continue;
      if (is_punct(";") || is_punct(",")) {
        unsupported("predicate-object lists (';' and ',') are not supported");
      }
      reject_unsupported_word();
      if (is_punct("{")) unsupported("nested group patterns are not supported");
      syntax("expected '.' or '}' after a triple pattern");
    }
  }

  Term parse_term(Position position) {
    Term term;
    switch (tok_.type) {
      case TokenType::kVariable:
        term = Term::variable(tok_.text);
        advance();
        break;
      case TokenType::kPrefixedName:
        term = resolve_prefixed(tok_.text);
        advance();
        break;
      case TokenType::kIri:
        term = resolve_iri(tok_.text);
        advance();
        break;
      case TokenType::kString:
        term = Term::literal(tok_.text);
        advance();
        if (tok_.type == TokenType::kLangTag) {
          term.language = tok_.text;
          advance();
        } else if (is_punct("^^")) {
          advance();
          if (tok_.type == TokenType::kIri) {
            term.datatype = "<" + tok_.text + ">";
          } else if (tok_.type == TokenType::kPrefixedName) {
            term.datatype = tok_.text;
          } else {
            syntax("expected a datatype IRI after ^^");
          }
          advance();
        }
        break;
      case TokenType::kNumber:
        term = Term::literal(tok_.text);
        advance();
        break;
      case TokenType::kWord: {
        const auto u = upper(tok_.text);
        if (u == "TRUE" || u == "FALSE") {
          term = Term::literal(u == "TRUE" ? "true" : "false");
          advance();
          break;
        }
        if (tok_.text == "a") unsupported("the 'a' (rdf:type) shorthand is not supported");
        reject_unsupported_word();
        syntax("expected a term");
      }
      case TokenType::kPunct:
        if (tok_.text == "[" || tok_.text == "(") {
          unsupported("blank-node and collection syntax is not supported");
        }
        if (tok_.text == "^" || tok_.text == "!") unsupported("property paths are not supported");
        if (tok_.text == "_") unsupported("blank nodes are not supported");
        syntax("expected a term");
      default:
        syntax("expected a term");
    }
    if (position == Position::kPredicate && !term.is_variable() &&
        term.kind != TermKind::kPredicate) {
      syntax("predicate position needs a wdt: property or a variable");
    }
    return term;
  }

  Term resolve_prefixed(const std::string& pname) const {
    const auto colon = pname.find(':');
    const auto prefix = pname.substr(0, colon);
    const auto local = std::string_view(pname).substr(colon + 1);
    if (prefix == "wd" && local.size() > 1 && local[0] == 'Q' && is_digits(local.substr(1))) {
      return Term::entity(std::string(local));
    }
    if (prefix == "wdt" && local.size() > 1 && local[0] == 'P' && is_digits(local.substr(1))) {
      return Term::predicate(std::string(local));
    }
    if (prefix == "_") unsupported("blank nodes are not supported");
    unsupported("term " + pname + " is outside the wd:Q / wdt:P vocabulary");
  }

  Term resolve_iri(const std::string& iri) const {
    std::string_view v(iri);
    auto id_after = [&](std::string_view ns, char lead) -> std::optional<std::string> {
      if (v.substr(0, ns.size()) != ns) return std::nullopt;
      const auto local = v.substr(ns.size());
      if (local.size() > 1 && local[0] == lead && is_digits(local.substr(1))) {
        return std::string(local);
      }
      return std::nullopt;
    };
    if (auto q = id_after(kEntityNamespace, 'Q')) return Term::entity(*q);
    if (auto p = id_after(kDirectPropertyNamespace, 'P')) return Term::predicate(*p);
    unsupported("IRI <" + iri + "> is outside the entity / direct-property namespaces");
  }

  void parse_modifiers(QueryAst& ast) {
    while (tok_.type != TokenType::kEnd) {
      if (is_word("LIMIT")) {
        if (ast.limit) syntax("duplicate LIMIT");
        advance();
        if (tok_.type != TokenType::kNumber || !is_digits(tok_.text)) {
          syntax("LIMIT needs a positive integer");
        }
        std::size_t value = 0;
        try {
          value = std::stoull(tok_.text);
        } catch (const std::exception&) {
          syntax("LIMIT value out of range");
        }
        if (value == 0) syntax("LIMIT must be positive");
        ast.limit = value;
        advance();
        continue;
      }
      reject_unsupported_word();
      return;
    }
  }

  void check_constrained(const QueryAst& ast) const {
    std::map<std::string, std::size_t> uses;  // variable -> number of patterns
    for (const auto& p : ast.patterns) {
      std::set<std::string> vars;
      for (const auto* t : {&p.subject, &p.predicate, &p.object}) {
        if (t->is_variable()) vars.insert(t->value);
      }
      for (const auto& v : vars) ++uses[v];
    }
    for (const auto& p : ast.patterns) {
      if (!p.subject.is_variable() || !p.predicate.is_variable() || !p.object.is_variable()) {
        continue;
      }
      const bool shared = uses[p.subject.value] > 1 || uses[p.predicate.value] > 1 ||
                          uses[p.object.value] > 1;
      if (!shared) {
        throw ParseError(ParseErrorKind::kUnsupportedConstruct, 0,
                         "?" + p.subject.value,
                         "fully unconstrained triple pattern shares no variable");
      }
    }
  }

  Lexer lexer_;
  Token tok_;
};

std::string escape_literal(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string render_term(const Term& t) {
  switch (t.kind) {
    case TermKind::kVariable:
      return "?" + t.value;
    case TermKind::kEntity:
      return "wd:" + t.value;
    case TermKind::kPredicate:
      return "wdt:" + t.value;
    case TermKind::kLiteral: {
      std::string out = "\"" + escape_literal(t.value) + "\"";
      if (!t.language.empty()) {
        out += "@" + t.language;
      } else if (!t.datatype.empty()) {
        out += "^^" + t.datatype;
      }
      return out;
    }
  }
  return {};
}

}  // namespace

std::string_view to_string(ParseErrorKind kind) noexcept {
  return kind == ParseErrorKind::kSyntax ? "syntax-error" : "unsupported-construct";
}

ParseError::ParseError(ParseErrorKind kind, std::size_t offset, std::string token,
                       const std::string& message)
    : Error(ErrorCode::kData, std::string(to_string(kind)) + " at byte " +
                                  std::to_string(offset) + " near '" + token +
                                  "': " + message),
      kind_(kind),
      offset_(offset),
      token_(std::move(token)) {}

QueryAst parse(std::string_view query_text) {
  return Parser(query_text).parse_query();
}

std::string render(const QueryAst& ast) {
  std::string out;
  switch (ast.form) {
    case QueryForm::kSelect:
      out = "SELECT ";
      if (ast.distinct) out += "DISTINCT ";
      for (std::size_t i = 0; i < ast.projection.size(); ++i) {
        if (i > 0) out += ' ';
        out += "?" + ast.projection[i];
      }
      out += " WHERE ";
      break;
    case QueryForm::kCount:
      out = "SELECT (COUNT(";
      if (ast.distinct) out += "DISTINCT ";
      out += "?" + ast.count_variable + ") AS ?" + ast.count_alias + ") WHERE ";
      break;
    case QueryForm::kAsk:
      out = "ASK ";
      break;
  }
  out += "{ ";
  for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
    if (i > 0) out += " . ";
    const auto& p = ast.patterns[i];
    out += render_term(p.subject) + " " + render_term(p.predicate) + " " +
           render_term(p.object);
  }
  out += ast.patterns.empty() ? "}" : " }";
  if (ast.limit) out += " LIMIT " + std::to_string(*ast.limit);
  return out;
}

}  // namespace kgqa::sparql
