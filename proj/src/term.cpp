#include "kexnet/term.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace kexnet {

namespace {

constexpr std::array<std::string_view, 18> kSymbolNames = {
    "ID",   "esk",  "lsk", "pk",  "T",     "K",      "SK",      "senc",    "aenc",
    "sign", "hash", "exp", "tuple", "sendIR", "sendRI", "acceptI", "acceptR", "var",
};

std::uint64_t mix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t label_hash(const NodeLabel& l) noexcept {
  std::uint64_t packed = static_cast<std::uint64_t>(l.symbol) |
                         (static_cast<std::uint64_t>(l.role) << 8) |
                         (static_cast<std::uint64_t>(l.fresh) << 16) |
                         (static_cast<std::uint64_t>(l.instance) << 24);
  return mix(packed);
}

bool has_party_role(Role r) { return r == Role::I || r == Role::R || r == Role::E; }

}  // namespace

NodeKind kind_of(Symbol s) noexcept {
  switch (s) {
    case Symbol::ID:
    case Symbol::Esk:
    case Symbol::Lsk:
    case Symbol::Pk:
    case Symbol::T:
    case Symbol::K:
    case Symbol::SK:
      return NodeKind::Atomic;
    case Symbol::Senc:
    case Symbol::Aenc:
    case Symbol::Sign:
    case Symbol::Hash:
    case Symbol::Exp:
    case Symbol::Tuple:
      return NodeKind::Function;
    case Symbol::SendIR:
    case Symbol::SendRI:
    case Symbol::AcceptI:
    case Symbol::AcceptR:
      return NodeKind::Behavior;
    case Symbol::Var:
      return NodeKind::Variable;
  }
  return NodeKind::Atomic;
}

std::string_view symbol_name(Symbol s) noexcept { return kSymbolNames[static_cast<std::size_t>(s)]; }

std::optional<Symbol> symbol_from_name(std::string_view name) noexcept {
  // "var" is internal and deliberately not parseable.
  for (std::size_t i = 0; i + 1 < kSymbolNames.size(); ++i) {
    if (kSymbolNames[i] == name) return static_cast<Symbol>(i);
  }
  return std::nullopt;
}

char role_char(Role r) noexcept {
  switch (r) {
    case Role::I:
      return 'I';
    case Role::R:
      return 'R';
    case Role::E:
      return 'E';
    case Role::None:
      break;
  }
  return '-';
}

Role partner(Role r) {
  if (r == Role::I) return Role::R;
  if (r == Role::R) return Role::I;
  throw std::invalid_argument("partner: role must be I or R");
}

Term::Term(NodeLabel label, std::vector<Term> children) {
  auto n = std::make_shared<Node>();
  n->label = label;
  std::uint64_t h = label_hash(label);
  std::uint32_t size = 1;
  std::uint32_t depth = 0;
  bool vars = label.symbol == Symbol::Var;
  for (const Term& c : children) {
    h = mix(h ^ (c.hash() + 0x632be59bd9b4e019ULL + (h << 6)));
    size += static_cast<std::uint32_t>(c.size());
    depth = std::max(depth, static_cast<std::uint32_t>(c.depth() + 1));
    vars = vars || c.has_variables();
  }
  n->children = std::move(children);
  n->hash = static_cast<std::size_t>(h);
  n->size = size;
  n->depth = depth;
  n->has_vars = vars;
  node_ = std::move(n);
}

Term Term::atom(Symbol s, Role r, std::uint8_t fresh, std::uint32_t instance) {
  return Term(NodeLabel{s, r, fresh, instance});
}

Term Term::apply(Symbol s, std::vector<Term> children) {
  return Term(NodeLabel{s, Role::None, 0, 0}, std::move(children));
}

Term Term::variable(std::uint32_t id) { return Term(NodeLabel{Symbol::Var, Role::None, 0, id}); }

std::span<const Term> Term::payload() const noexcept {
  std::span<const Term> all = node_->children;
  if (all.empty()) return all;
  return all.first(all.size() - 1);
}

const Term& Term::key() const {
  if (node_->children.empty()) throw std::logic_error("key(): term has no children");
  return node_->children.back();
}

bool Term::contains(const Term& sub) const {
  if (*this == sub) return true;
  if (sub.size() >= size()) return false;
  for (const Term& c : children()) {
    if (c.contains(sub)) return true;
  }
  return false;
}

bool operator==(const Term& a, const Term& b) noexcept {
  if (a.node_ == b.node_) return true;
  if (a.node_->hash != b.node_->hash || a.node_->size != b.node_->size) return false;
  if (a.node_->label != b.node_->label) return false;
  return std::equal(a.node_->children.begin(), a.node_->children.end(), b.node_->children.begin(),
                    b.node_->children.end());
}

std::strong_ordering operator<=>(const Term& a, const Term& b) noexcept {
  if (a.node_ == b.node_) return std::strong_ordering::equal;
  if (auto c = a.node_->label <=> b.node_->label; c != 0) return c;
  return std::lexicographical_compare_three_way(a.node_->children.begin(), a.node_->children.end(),
                                                b.node_->children.begin(), b.node_->children.end());
}

std::optional<std::string> check_term(const Term& t, bool allow_behavior_root) {
  const NodeLabel& l = t.label();
  const std::string name(symbol_name(l.symbol));
  switch (t.kind()) {
    case NodeKind::Variable:
      return "pattern variable in protocol term";
    case NodeKind::Atomic: {
      if (t.arity() != 0) return name + " is atomic and takes no children";
      switch (l.symbol) {
        case Symbol::ID:
        case Symbol::Lsk:
        case Symbol::Pk:
        case Symbol::T:
          if (!has_party_role(l.role)) return name + " requires a party tag (I, R or E)";
          if (l.fresh != 0) return name + " takes no fresh index";
          break;
        case Symbol::Esk:
          if (!has_party_role(l.role)) return name + " requires a party tag (I, R or E)";
          if (l.fresh < 1 || l.fresh > 2) return "esk fresh index must be 1 or 2";
          break;
        case Symbol::K:
          if (l.role != Role::None && l.role != Role::E) return "K takes no party tag other than E";
          if (l.fresh != 0) return "K takes no fresh index";
          break;
        case Symbol::SK:
          if (l.role != Role::None || l.fresh != 0) return "SK takes no fields";
          break;
        default:
          break;
      }
      return std::nullopt;
    }
    case NodeKind::Function: {
      if (l.role != Role::None || l.fresh != 0 || l.instance != 0) return name + " takes no fields";
      switch (l.symbol) {
        case Symbol::Senc:
        case Symbol::Aenc:
        case Symbol::Sign: {
          if (t.arity() < 2) return name + " requires at least one payload child and a key";
          const Term& k = t.key();
          if (l.symbol == Symbol::Senc && !k.is_atom()) return "senc key must be an atomic key";
          if (l.symbol == Symbol::Aenc && k.symbol() != Symbol::Pk) return "aenc key must be a public key";
          if (l.symbol == Symbol::Sign && k.symbol() != Symbol::Lsk) return "sign key must be a long-term secret key";
          break;
        }
        case Symbol::Hash:
          if (t.arity() < 1) return "hash requires at least one child";
          break;
        case Symbol::Exp:
          if (t.arity() != 2) return "exp requires exactly two children";
          break;
        case Symbol::Tuple:
          if (t.arity() < 2) return "tuple requires at least two children";
          break;
        default:
          break;
      }
      break;
    }
    case NodeKind::Behavior: {
      if (!allow_behavior_root) return name + " may only appear at a message root";
      if (l.role != Role::None || l.fresh != 0 || l.instance != 0) return name + " takes no fields";
      if ((l.symbol == Symbol::SendIR || l.symbol == Symbol::SendRI) && t.arity() < 1) {
        return name + " requires at least one message element";
      }
      if ((l.symbol == Symbol::AcceptI || l.symbol == Symbol::AcceptR) && t.arity() != 1) {
        return name + " requires exactly one session-key child";
      }
      break;
    }
  }
  for (const Term& c : t.children()) {
    if (auto err = check_term(c, false)) return err;
  }
  return std::nullopt;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Term parse_all() {
    Term t = parse();
    skip_ws();
    if (pos_ != text_.size()) throw ParseError(pos_, "trailing input after term");
    if (auto err = check_term(t, true)) throw ParseError(0, *err);
    return t;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string_view token() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')' &&
           !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  Term parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError(pos_, "unexpected end of input");
    if (text_[pos_] != '(') throw ParseError(pos_, "expected '('");
    ++pos_;
    skip_ws();
    std::size_t sym_pos = pos_;
    std::string_view name = token();
    if (name.empty()) throw ParseError(sym_pos, "expected symbol");
    auto sym = symbol_from_name(name);
    if (!sym) throw ParseError(sym_pos, "unknown symbol '" + std::string(name) + "'");

    NodeLabel label{*sym, Role::None, 0, 0};
    bool have_role = false, have_fresh = false, have_inst = false;
    std::vector<Term> children;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) throw ParseError(pos_, "unterminated term");
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        children.push_back(parse());
        continue;
      }
      if (!children.empty()) throw ParseError(pos_, "field after child term");
      std::size_t field_pos = pos_;
      std::string_view f = token();
      if (f == "I" || f == "R" || f == "E") {
        if (have_role) throw ParseError(field_pos, "duplicate party tag");
        label.role = f == "I" ? Role::I : (f == "R" ? Role::R : Role::E);
        have_role = true;
      } else if (!f.empty() && f.front() == '#') {
        if (have_inst) throw ParseError(field_pos, "duplicate instance tag");
        label.instance = parse_number(f.substr(1), field_pos);
        have_inst = true;
      } else if (!f.empty() && std::isdigit(static_cast<unsigned char>(f.front()))) {
        if (have_fresh) throw ParseError(field_pos, "duplicate fresh index");
        auto v = parse_number(f, field_pos);
        if (v > 255) throw ParseError(field_pos, "fresh index out of range");
        label.fresh = static_cast<std::uint8_t>(v);
        have_fresh = true;
      } else {
        throw ParseError(field_pos, "unrecognized field '" + std::string(f) + "'");
      }
    }
    // esk without an index canonicalizes to index 1.
    if (label.symbol == Symbol::Esk && !have_fresh) label.fresh = 1;
    Term t(label, std::move(children));
    if (t.kind() != NodeKind::Behavior) {
      if (auto err = check_term(t, false)) throw ParseError(sym_pos, *err);
    }
    return t;
  }

  std::uint32_t parse_number(std::string_view digits, std::size_t at) {
    if (digits.empty() || digits.size() > 9) throw ParseError(at, "bad number");
    std::uint32_t v = 0;
    for (char d : digits) {
      if (!std::isdigit(static_cast<unsigned char>(d))) throw ParseError(at, "bad number");
      v = v * 10 + static_cast<std::uint32_t>(d - '0');
    }
    return v;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void render_into(const Term& t, std::string& out) {
  const NodeLabel& l = t.label();
  out += '(';
  out += symbol_name(l.symbol);
  if (l.symbol == Symbol::Var) {
    out += ' ';
    out += std::to_string(l.instance);
  } else {
    if (l.role != Role::None) {
      out += ' ';
      out += role_char(l.role);
    }
    if (l.fresh != 0) {
      out += ' ';
      out += std::to_string(l.fresh);
    }
    if (l.instance != 0) {
      out += " #";
      out += std::to_string(l.instance);
    }
  }
  for (const Term& c : t.children()) {
    out += ' ';
    render_into(c, out);
  }
  out += ')';
}

}  // namespace

Term parse_term(std::string_view text) { return Parser(text).parse_all(); }

std::string render_term(const Term& t) {
  std::string out;
  out.reserve(t.size() * 8);
  render_into(t, out);
  return out;
}

namespace terms {
Term id(Role r) { return Term::atom(Symbol::ID, r); }
Term esk(Role r, std::uint8_t fresh) { return Term::atom(Symbol::Esk, r, fresh); }
Term lsk(Role r) { return Term::atom(Symbol::Lsk, r); }
Term pk(Role r) { return Term::atom(Symbol::Pk, r); }
Term timestamp(Role r) { return Term::atom(Symbol::T, r); }
Term K() { return Term::atom(Symbol::K); }
Term SK() { return Term::atom(Symbol::SK); }

namespace {
Term keyed(Symbol s, std::vector<Term> payload, Term key) {
  payload.push_back(std::move(key));
  return Term::apply(s, std::move(payload));
}
}  // namespace

Term senc(std::vector<Term> payload, Term key) { return keyed(Symbol::Senc, std::move(payload), std::move(key)); }
Term aenc(std::vector<Term> payload, Term key) { return keyed(Symbol::Aenc, std::move(payload), std::move(key)); }
Term sign(std::vector<Term> payload, Term key) { return keyed(Symbol::Sign, std::move(payload), std::move(key)); }
Term hash(std::vector<Term> payload) { return Term::apply(Symbol::Hash, std::move(payload)); }
Term exp(Term base, Term exponent) { return Term::apply(Symbol::Exp, {std::move(base), std::move(exponent)}); }
Term tuple(std::vector<Term> items) { return Term::apply(Symbol::Tuple, std::move(items)); }
Term send_ir(std::vector<Term> body) { return Term::apply(Symbol::SendIR, std::move(body)); }
Term send_ri(std::vector<Term> body) { return Term::apply(Symbol::SendRI, std::move(body)); }
Term accept_i(Term key) { return Term::apply(Symbol::AcceptI, {std::move(key)}); }
Term accept_r(Term key) { return Term::apply(Symbol::AcceptR, {std::move(key)}); }
}  // namespace terms

}  // namespace kexnet
