#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kexnet {

/// Node taxonomy of a message syntax tree. `Variable` never appears in a
/// protocol; the role compiler uses it for receive patterns.
enum class NodeKind : std::uint8_t { Atomic, Function, Behavior, Variable };

enum class Symbol : std::uint8_t {
  // message components
  ID,
  Esk,
  Lsk,
  Pk,
  T,
  K,
  SK,
  // message structure
  Senc,
  Aenc,
  Sign,
  Hash,
  Exp,
  Tuple,
  // party behavior
  SendIR,
  SendRI,
  AcceptI,
  AcceptR,
  // pattern variable (internal)
  Var,
};

/// Party tag. `E` is the adversary identity.
enum class Role : std::uint8_t { None, I, R, E };

NodeKind kind_of(Symbol s) noexcept;
std::string_view symbol_name(Symbol s) noexcept;
std::optional<Symbol> symbol_from_name(std::string_view name) noexcept;
char role_char(Role r) noexcept;

/// Label of one syntax-tree node.
///
/// `fresh` distinguishes ephemeral keys of one party (esk_I1, esk_I2).
/// `instance` is zero in protocols; the active oracle uses it to tell apart
/// values generated in different sessions, and a Var node stores its
/// variable id there.
struct NodeLabel {
  Symbol symbol = Symbol::ID;
  Role role = Role::None;
  std::uint8_t fresh = 0;
  std::uint32_t instance = 0;

  NodeKind kind() const noexcept { return kind_of(symbol); }
  friend auto operator<=>(const NodeLabel&, const NodeLabel&) = default;
};

class Term;

struct TermHash {
  std::size_t operator()(const Term& t) const noexcept;
};

using TermSet = std::unordered_set<Term, TermHash>;
template <class V>
using TermMap = std::unordered_map<Term, V, TermHash>;

/// Immutable node-labeled ordered tree with structural hashing.
///
/// Copies share structure. Size, depth and hash are computed once at
/// construction, so equality checks between distinct terms are cheap.
class Term {
 public:
  explicit Term(NodeLabel label, std::vector<Term> children = {});

  static Term atom(Symbol s, Role r = Role::None, std::uint8_t fresh = 0,
                   std::uint32_t instance = 0);
  static Term apply(Symbol s, std::vector<Term> children);
  static Term variable(std::uint32_t id);

  const NodeLabel& label() const noexcept { return node_->label; }
  Symbol symbol() const noexcept { return node_->label.symbol; }
  NodeKind kind() const noexcept { return node_->label.kind(); }
  std::span<const Term> children() const noexcept { return node_->children; }
  const Term& child(std::size_t i) const { return node_->children.at(i); }
  std::size_t arity() const noexcept { return node_->children.size(); }

  /// Node count of the tree.
  std::size_t size() const noexcept { return node_->size; }
  /// Edges on the longest root-to-leaf path; an atom has depth 0.
  std::size_t depth() const noexcept { return node_->depth; }
  std::size_t hash() const noexcept { return node_->hash; }

  bool is_atom() const noexcept { return kind() == NodeKind::Atomic; }
  bool is_variable() const noexcept { return kind() == NodeKind::Variable; }
  bool has_variables() const noexcept { return node_->has_vars; }

  /// Payload children of senc/aenc/sign (all but the trailing key).
  std::span<const Term> payload() const noexcept;
  /// Trailing key child of senc/aenc/sign.
  const Term& key() const;

  bool contains(const Term& sub) const;

  friend bool operator==(const Term& a, const Term& b) noexcept;
  friend std::strong_ordering operator<=>(const Term& a, const Term& b) noexcept;

 private:
  struct Node {
    NodeLabel label;
    std::vector<Term> children;
    std::size_t hash = 0;
    std::uint32_t size = 1;
    std::uint32_t depth = 0;
    bool has_vars = false;
  };
  std::shared_ptr<const Node> node_;
};

inline std::size_t TermHash::operator()(const Term& t) const noexcept { return t.hash(); }

/// Thrown by parse_term / parse_protocol_line with a byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : std::runtime_error(what + " at offset " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Structural check of one node and its subtree. Returns the first violation
/// found, or nullopt. `allow_behavior_root` permits a behavior label at the
/// top of `t` only.
std::optional<std::string> check_term(const Term& t, bool allow_behavior_root = false);

/// Parses the canonical prefix syntax, e.g. "(aenc (ID R) (pk R))".
/// Fields after the symbol: a role letter (I, R, E), a fresh index, and an
/// optional "#n" instance tag. Whitespace-insensitive.
Term parse_term(std::string_view text);

/// Canonical one-line rendering. parse_term(render_term(t)) == t.
std::string render_term(const Term& t);

// Shorthand constructors used throughout the library and tests.
namespace terms {
Term id(Role r);
Term esk(Role r, std::uint8_t fresh = 1);
Term lsk(Role r);
Term pk(Role r);
Term timestamp(Role r);
Term K();
Term SK();
Term senc(std::vector<Term> payload, Term key);
Term aenc(std::vector<Term> payload, Term key);
Term sign(std::vector<Term> payload, Term key);
Term hash(std::vector<Term> payload);
Term exp(Term base, Term exponent);
Term tuple(std::vector<Term> items);
Term send_ir(std::vector<Term> body);
Term send_ri(std::vector<Term> body);
Term accept_i(Term key);
Term accept_r(Term key);
}  // namespace terms

/// The party a role tag is paired with (I <-> R).
Role partner(Role r);

}  // namespace kexnet
