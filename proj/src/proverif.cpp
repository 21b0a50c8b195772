#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "kexnet/labeling.hpp"
#include "kexnet/role.hpp"

namespace kexnet {

std::string pv_atom_name(const Term& atom) {
  const NodeLabel& l = atom.label();
  std::string base;
  switch (l.symbol) {
    case Symbol::ID:
      base = "ID";
      break;
    case Symbol::Esk:
      base = "esk";
      break;
    case Symbol::Lsk:
      base = "lsk";
      break;
    case Symbol::Pk:
      base = "pk";
      break;
    case Symbol::T:
      base = "T";
      break;
    case Symbol::K:
      base = "K";
      break;
    case Symbol::SK:
      base = "SK";
      break;
    default:
      throw UnsupportedConstruct("not an atom: " + render_term(atom));
  }
  if (l.role != Role::None) base += std::string("_") + role_char(l.role);
  if (l.symbol == Symbol::Esk) base += std::to_string(l.fresh);
  if (l.instance != 0) base += "_s" + std::to_string(l.instance);
  return base;
}

namespace {

void check_supported(const Term& t) {
  if (t.is_variable()) throw UnsupportedConstruct("pattern variable in protocol");
  if (t.is_atom()) {
    if (t.label().role == Role::E) throw UnsupportedConstruct("adversary atom " + render_term(t));
    if (t.label().instance != 0) throw UnsupportedConstruct("session-tagged atom " + render_term(t));
    return;
  }
  for (const Term& c : t.children()) check_supported(c);
}

class RoleWriter {
 public:
  explicit RoleWriter(const CompiledRole& r) : r_(r) {}

  std::string expr(const Term& t) const {
    if (t.is_variable()) return r_.vars.at(t.label().instance).name;
    if (t.is_atom()) return pv_atom_name(t);
    switch (t.symbol()) {
      case Symbol::Senc:
      case Symbol::Aenc:
      case Symbol::Sign:
        return std::string(symbol_name(t.symbol())) + "(" + joined(t.payload()) + "," + expr(t.key()) + ")";
      case Symbol::Hash:
        return "hash(" + joined(t.children()) + ")";
      case Symbol::Exp:
        return "exp(" + expr(t.child(0)) + "," + expr(t.child(1)) + ")";
      case Symbol::Tuple:
        return "(" + list(t.children()) + ")";
      default:
        throw UnsupportedConstruct("unexpected symbol " + std::string(symbol_name(t.symbol())));
    }
  }

  // Receive-side pattern: "=expr" for values the party can compute,
  // "name:bitstring" for values it binds.
  std::string pat(const Term& t, const std::vector<std::uint32_t>& binds) const {
    if (t.is_variable() && std::find(binds.begin(), binds.end(), t.label().instance) != binds.end()) {
      return r_.vars[t.label().instance].name + ":bitstring";
    }
    if (t.symbol() == Symbol::Tuple && has_binds(t, binds)) {
      std::string s = "(";
      for (std::size_t i = 0; i < t.arity(); ++i) s += (i ? "," : "") + pat(t.child(i), binds);
      return s + ")";
    }
    return "=" + expr(t);
  }

  std::vector<std::string> body() const {
    std::vector<std::string> out;
    for (const Step& s : r_.steps) {
      switch (s.kind) {
        case StepKind::Send:
          out.push_back("out(c,(" + list(s.pattern.children()) + "));");
          break;
        case StepKind::Receive: {
          std::string l = "in(c, (";
          for (std::size_t i = 0; i < s.pattern.arity(); ++i) {
            l += (i ? "," : "") + pat(s.pattern.child(i), s.new_vars);
          }
          out.push_back(l + "));");
          break;
        }
        case StepKind::Open:
          open_lines(s, out);
          break;
        case StepKind::Check:
          out.push_back("if " + r_.vars[s.var].name + " = " + expr(s.pattern) + " then");
          break;
        case StepKind::Accept: {
          std::string key = expr(s.pattern);
          if (!(s.pattern.is_variable() || s.pattern.is_atom()) || key != "SK") {
            out.push_back("let SK_" + std::string(1, role_char(r_.role)) + " = " + key + " in");
            key = "SK_" + std::string(1, role_char(r_.role));
          }
          out.push_back("event accept" + std::string(1, role_char(r_.role)) + "(" + key + ");");
          out.push_back("out(c, senc(message, " + key + ")).");
          break;
        }
      }
    }
    if (out.empty() || out.back().back() != '.') out.push_back("0.");
    return out;
  }

 private:
  static bool has_binds(const Term& t, const std::vector<std::uint32_t>& binds) {
    if (t.is_variable()) return std::find(binds.begin(), binds.end(), t.label().instance) != binds.end();
    for (const Term& c : t.children()) {
      if (has_binds(c, binds)) return true;
    }
    return false;
  }

  // Variables that an Open pattern binds for the first time.
  void collect(const Term& t, std::vector<std::uint32_t>& out) const {
    if (t.is_variable()) {
      const auto id = t.label().instance;
      if (!bound_before(id) && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
      return;
    }
    for (const Term& c : t.children()) collect(c, out);
  }
  bool bound_before(std::uint32_t id) const {
    for (const Step& s : r_.steps) {
      if (s.kind == StepKind::Receive && std::find(s.new_vars.begin(), s.new_vars.end(), id) != s.new_vars.end()) {
        return true;
      }
    }
    return opened_.count(id) > 0;
  }

  void open_lines(const Step& s, std::vector<std::string>& out) const {
    const std::string v = r_.vars[s.var].name;
    const auto payload = s.pattern.payload();
    std::vector<std::uint32_t> binds;
    for (const Term& c : payload) collect(c, binds);
    std::string lhs;
    for (std::size_t i = 0; i < payload.size(); ++i) lhs += (i ? "," : "") + pat(payload[i], binds);
    if (payload.size() > 1 || lhs.front() == '=') lhs = "(" + lhs + ")";
    switch (s.pattern.symbol()) {
      case Symbol::Aenc:
        out.push_back("let " + lhs + " = adec(" + v + "," + pv_atom_name(secret_key_for(s.pattern.key())) + ") in");
        break;
      case Symbol::Senc:
        out.push_back("let " + lhs + " = sdec(" + v + "," + expr(s.pattern.key()) + ") in");
        break;
      case Symbol::Sign:
        if (!binds.empty()) out.push_back("let " + lhs + " = getmess(" + v + ") in");
        out.push_back("if verif(" + v + ", " + tuple_expr(payload) + "," +
                      pv_atom_name(Term::atom(Symbol::Pk, s.pattern.key().label().role)) + ")=true then");
        break;
      default:
        throw UnsupportedConstruct("cannot open " + std::string(symbol_name(s.pattern.symbol())));
    }
    for (auto id : binds) opened_.insert(id);
  }

  std::string tuple_expr(std::span<const Term> ts) const {
    return ts.size() == 1 ? expr(ts[0]) : "(" + list(ts) + ")";
  }
  std::string joined(std::span<const Term> ts) const { return tuple_expr(ts); }
  std::string list(std::span<const Term> ts) const {
    std::string s;
    for (std::size_t i = 0; i < ts.size(); ++i) s += (i ? "," : "") + expr(ts[i]);
    return s;
  }

  const CompiledRole& r_;
  mutable std::unordered_set<std::uint32_t> opened_;
};

const char* kPreamble =
    "free c:channel.\n"
    "\n"
    "free ID_I:bitstring.\n"
    "free ID_R:bitstring.\n"
    "free message:bitstring [private].\n"
    "\n"
    "fun senc(bitstring,bitstring):bitstring.\n"
    "reduc forall m:bitstring,k:bitstring; sdec(senc(m,k),k) = m.\n"
    "\n"
    "fun pkey(bitstring):bitstring.\n"
    "fun aenc(bitstring,bitstring):bitstring.\n"
    "reduc forall m:bitstring,k:bitstring; adec(aenc(m,pkey(k)),k) = m.\n"
    "\n"
    "fun sign(bitstring,bitstring):bitstring.\n"
    "reduc forall m:bitstring,k:bitstring; getmess(sign(m,k)) = m.\n"
    "reduc forall m:bitstring,k:bitstring; verif(sign(m,k),m,pkey(k)) = true.\n"
    "\n"
    "fun hash(bitstring):bitstring.\n"
    "\n"
    "fun exp(bitstring,bitstring):bitstring.\n"
    "equation forall b:bitstring,x:bitstring,y:bitstring; exp(exp(b,x),y) = exp(exp(b,y),x).\n"
    "\n"
    "event protocol_start_I(bitstring).\n"
    "event protocol_start_R(bitstring).\n"
    "event acceptI(bitstring).\n"
    "event acceptR(bitstring).\n"
    "\n"
    "query attacker(message).\n";

void write_role(std::ostringstream& os, const Protocol& p, const CompiledRole& r) {
  const bool init = r.role == Role::I;
  const char me = role_char(r.role);
  const char peer = role_char(partner(r.role));
  os << "(* " << (init ? "Initiator" : "Responder") << " *)\n";
  os << "let " << (init ? "Initiator" : "Responder") << "(lsk_" << me << ":bitstring, pk_" << me
     << ":bitstring, pk_" << peer << ":bitstring, K:bitstring) =\n";
  os << "  event protocol_start_" << me << "(ID_" << peer << ");\n";
  os << "  new esk_" << me << "1:bitstring;\n";
  os << "  new esk_" << me << "2:bitstring;\n";
  if (sk_owner(p) == r.role) os << "  new SK:bitstring;\n";
  os << "  new T_" << me << ":bitstring;\n\n";
  if (init) {
    os << "  out (c, T_I);\n  in (c, T_R:bitstring);\n\n";
  } else {
    os << "  in (c, T_I:bitstring);\n  out (c, T_R);\n\n";
  }
  os << "  (* AUTOMATIC_" << me << " *)\n";
  for (const std::string& line : RoleWriter(r).body()) os << "  " << line << "\n";
}

}  // namespace

std::string emit_proverif(const Protocol& p) {
  for (const Term& m : p.messages) check_supported(m);
  CompiledRole ri, rr;
  try {
    ri = compile_role(p, Role::I);
    rr = compile_role(p, Role::R);
  } catch (const CompileError& e) {
    throw UnsupportedConstruct(e.what());
  }
  std::ostringstream os;
  os << "(* " << kProverifTemplateVersion << " *)\n\n" << kPreamble << "\n";
  write_role(os, p, ri);
  os << "\n";
  write_role(os, p, rr);
  os << "\n"
        "process\n"
        "  new lsk_I:bitstring; new lsk_R:bitstring; new K:bitstring;\n"
        "  let pk_I = pkey(lsk_I) in let pk_R = pkey(lsk_R) in\n"
        "  out(c, pk_I); out(c, pk_R);\n"
        "  ((!Initiator(lsk_I, pk_I, pk_R, K)) | (!Responder(lsk_R, pk_R, pk_I, K)))\n";
  return os.str();
}

ExternalResult run_external_verifier(const std::string& script, const std::string& executable, int timeout_s) {
  ExternalResult res;
  const std::string probe = "command -v " + executable + " >/dev/null 2>&1";
  if (std::system(probe.c_str()) != 0) return res;
  res.available = true;
  namespace fs = std::filesystem;
  fs::path file = fs::temp_directory_path() / ("kexnet-" + std::to_string(std::hash<std::string>{}(script)) + ".pv");
  {
    std::ofstream f(file, std::ios::binary);
    f << script;
  }
  const std::string cmd = "timeout " + std::to_string(timeout_s) + " " + executable + " " + file.string() + " 2>&1";
  if (FILE* pipe = popen(cmd.c_str(), "r")) {
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) res.output.append(buf.data(), n);
    pclose(pipe);
  }
  fs::remove(file);
  if (res.output.find("RESULT not attacker(message[]) is true") != std::string::npos) {
    res.verdict = Verdict::Secure;
  } else if (res.output.find("RESULT not attacker(message[]) is false") != std::string::npos) {
    res.verdict = Verdict::Insecure;
  } else if (res.output.find("cannot be proved") != std::string::npos) {
    res.verdict = Verdict::Unknown;
  }
  return res;
}

}  // namespace kexnet
