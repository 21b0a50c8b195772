#include "kexnet/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

namespace kexnet {

std::string_view kind_name(ProtocolKind k) noexcept {
  return k == ProtocolKind::Transport ? "transport" : "establishment";
}

ProtocolKind kind_from_name(std::string_view s) {
  if (s == "transport") return ProtocolKind::Transport;
  if (s == "establishment") return ProtocolKind::Establishment;
  throw std::invalid_argument("unknown protocol kind '" + std::string(s) + "'");
}

std::string_view verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::Secure:
      return "secure";
    case Verdict::Insecure:
      return "insecure";
    case Verdict::Unknown:
      break;
  }
  return "unknown";
}

Verdict verdict_from_name(std::string_view s) {
  if (s == "secure") return Verdict::Secure;
  if (s == "insecure") return Verdict::Insecure;
  if (s == "unknown") return Verdict::Unknown;
  throw std::invalid_argument("unknown verdict '" + std::string(s) + "'");
}

namespace {
bool is_send(const Term& m) { return m.symbol() == Symbol::SendIR || m.symbol() == Symbol::SendRI; }
bool is_accept(const Term& m) { return m.symbol() == Symbol::AcceptI || m.symbol() == Symbol::AcceptR; }
Owner owner_of(Role r) { return r == Role::I ? Owner::I : Owner::R; }
}  // namespace

std::size_t Protocol::send_count() const {
  return static_cast<std::size_t>(std::count_if(messages.begin(), messages.end(), is_send));
}

bool Protocol::has_accepts() const { return std::any_of(messages.begin(), messages.end(), is_accept); }

std::size_t protocol_size(const Protocol& p) {
  std::size_t n = 0;
  for (const Term& m : p.messages) n += m.size();
  return n;
}

Role sender_of(const Term& m) {
  switch (m.symbol()) {
    case Symbol::SendIR:
    case Symbol::AcceptI:
      return Role::I;
    case Symbol::SendRI:
    case Symbol::AcceptR:
      return Role::R;
    default:
      throw std::invalid_argument("sender_of: not a behavior root");
  }
}

Role receiver_of(const Term& m) { return partner(sender_of(m)); }

std::optional<Term> session_key(const Protocol& p) {
  for (const Term& m : p.messages) {
    if (is_accept(m)) return m.child(0);
  }
  if (sk_owner(p)) return terms::SK();
  return std::nullopt;
}

std::optional<Role> sk_owner(const Protocol& p) {
  const Term sk = terms::SK();
  for (const Term& m : p.messages) {
    if (is_send(m) && m.contains(sk)) return sender_of(m);
  }
  return std::nullopt;
}

KnowledgeSet party_initial_knowledge(const Protocol& p, Role party) {
  KnowledgeSet k = initial_knowledge(owner_of(party), public_atoms());
  if (sk_owner(p) == party) k = absorb(std::move(k), terms::SK());
  return k;
}

KnowledgeSet party_final_knowledge(const Protocol& p, Role party) {
  KnowledgeSet k = party_initial_knowledge(p, party);
  for (const Term& m : p.messages) {
    if (is_send(m) && receiver_of(m) == party) k = absorb(std::move(k), m);
  }
  return k;
}

std::vector<std::string> validate_protocol(const Protocol& p) {
  std::vector<std::string> v;
  if (p.messages.empty()) {
    v.emplace_back("empty protocol");
    return v;
  }
  for (std::size_t i = 0; i < p.messages.size(); ++i) {
    const Term& m = p.messages[i];
    if (m.kind() != NodeKind::Behavior) {
      v.push_back("message " + std::to_string(i + 1) + ": root is not a behavior");
      return v;
    }
    if (auto err = check_term(m, true)) v.push_back("arity: message " + std::to_string(i + 1) + ": " + *err);
  }
  if (!v.empty()) return v;

  std::size_t sends = 0;
  bool seen_accept = false, accept_i = false, accept_r = false;
  for (const Term& m : p.messages) {
    if (is_send(m)) {
      if (seen_accept) v.emplace_back("accept order: send after accept");
      Symbol expect = sends % 2 == 0 ? Symbol::SendIR : Symbol::SendRI;
      if (m.symbol() != expect) v.push_back("alternation: message " + std::to_string(sends + 1));
      ++sends;
    } else {
      seen_accept = true;
      bool& flag = m.symbol() == Symbol::AcceptI ? accept_i : accept_r;
      if (flag) v.emplace_back("accept order: duplicate " + std::string(symbol_name(m.symbol())));
      flag = true;
    }
  }
  if (sends == 0) v.emplace_back("no send message");
  if (protocol_size(p) < 2) v.emplace_back("size below 2");
  if (!v.empty()) return v;

  KnowledgeSet ki = party_initial_knowledge(p, Role::I);
  KnowledgeSet kr = party_initial_knowledge(p, Role::R);
  std::size_t idx = 0;
  for (const Term& m : p.messages) {
    ++idx;
    if (!is_send(m)) continue;
    Role s = sender_of(m);
    const KnowledgeSet& ks = s == Role::I ? ki : kr;
    for (const Term& c : m.children()) {
      if (!derivable(ks, c)) {
        v.push_back("not derivable by sender: message " + std::to_string(idx) + " element " + render_term(c));
      }
    }
    if (s == Role::I) {
      kr = absorb(std::move(kr), m);
    } else {
      ki = absorb(std::move(ki), m);
    }
  }
  std::optional<Term> body;
  for (const Term& m : p.messages) {
    if (!is_accept(m)) continue;
    const KnowledgeSet& k = sender_of(m) == Role::I ? ki : kr;
    if (!derivable(k, m.child(0))) v.push_back("accept not derivable: " + render_term(m));
    if (body && !(*body == m.child(0))) v.emplace_back("accept mismatch: parties accept different keys");
    body = m.child(0);
  }
  return v;
}

std::string record_to_line(const ProtocolRecord& r) {
  nlohmann::ordered_json j;
  if (!r.name.empty()) j["name"] = r.name;
  std::vector<std::string> msgs;
  msgs.reserve(r.protocol.messages.size());
  for (const Term& m : r.protocol.messages) msgs.push_back(render_term(m));
  j["messages"] = msgs;
  j["kind"] = kind_name(r.protocol.kind);
  j["seed"] = r.protocol.seed;
  if (r.label) j["label"] = verdict_name(*r.label);
  if (!r.provenance.empty()) j["provenance"] = r.provenance;
  if (!r.origin.empty()) j["origin"] = r.origin;
  return j.dump();
}

ProtocolRecord record_from_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.byte, std::string("bad record: ") + e.what());
  }
  ProtocolRecord r;
  if (!j.contains("messages") || !j["messages"].is_array()) throw ParseError(0, "record without messages");
  for (const auto& m : j["messages"]) r.protocol.messages.push_back(parse_term(m.get<std::string>()));
  r.protocol.kind = kind_from_name(j.value("kind", std::string("transport")));
  r.protocol.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("label")) r.label = verdict_from_name(j["label"].get<std::string>());
  r.provenance = j.value("provenance", std::string());
  r.name = j.value("name", std::string());
  r.origin = j.value("origin", std::string());
  return r;
}

std::vector<ProtocolRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ProtocolRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::string& path, const std::vector<ProtocolRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) out << record_to_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string render_protocol(const Protocol& p) {
  std::string s;
  for (const Term& m : p.messages) {
    s += render_term(m);
    s += '\n';
  }
  return s;
}

Protocol parse_protocol_text(std::string_view text) {
  Protocol p;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos && line[first] != '#') p.messages.push_back(parse_term(line));
    start = end + 1;
  }
  p.kind = p.has_accepts() && !p.messages.back().child(0).is_atom() ? ProtocolKind::Establishment
                                                                     : ProtocolKind::Transport;
  return p;
}

}  // namespace kexnet
