#include "kexnet/practical.hpp"

#include <stdexcept>

#include "kexnet/augment.hpp"

namespace kexnet {

namespace {

struct Source {
  const char* number;
  const char* name;
  bool attack;
  const char* text;
  const char* note;
  bool twin;
};

// Nonces and ephemeral secrets are esk atoms, timestamps are T atoms, the
// pre-shared symmetric key is K. Where the original derives the key with a
// one-way function, the accept events carry a hash of the inputs.
const Source kSources[] = {
    {"1.9", "STS protocol", false,
     "(sendIR (exp (T I) (esk I 1)))\n"
     "(sendRI (exp (T I) (esk R 1)) (sign (exp (T I) (esk R 1)) (exp (T I) (esk I 1)) (lsk R)))\n"
     "(sendIR (sign (exp (T I) (esk I 1)) (exp (T I) (esk R 1)) (lsk I)))\n"
     "(acceptI (exp (exp (T I) (esk I 1)) (esk R 1)))\n"
     "(acceptR (exp (exp (T I) (esk I 1)) (esk R 1)))\n",
     "signatures sent in clear: encryption under the derived key is not expressible", true},
    {"1.10", "STS protocol modified to include identifiers", false,
     "(sendIR (exp (T I) (esk I 1)))\n"
     "(sendRI (exp (T I) (esk R 1)) (sign (exp (T I) (esk R 1)) (exp (T I) (esk I 1)) (ID I) (lsk R)))\n"
     "(sendIR (sign (exp (T I) (esk I 1)) (exp (T I) (esk R 1)) (ID R) (lsk I)))\n"
     "(acceptI (exp (exp (T I) (esk I 1)) (esk R 1)))\n"
     "(acceptR (exp (exp (T I) (esk I 1)) (esk R 1)))\n",
     "signatures sent in clear: encryption under the derived key is not expressible", false},
    {"3.14", "Revised Andrew protocol of Burrows et al.", true,
     "(sendIR (ID I) (esk I 1))\n"
     "(sendRI (senc (esk I 1) (SK) (K)))\n"
     "(sendIR (senc (esk I 1) (SK)))\n"
     "(sendRI (esk R 1))\n",
     "", false},
    {"3.16", "Boyd two-pass protocol", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (esk R 1))\n"
     "(acceptI (hash (K) (esk I 1) (esk R 1)))\n"
     "(acceptR (hash (K) (esk I 1) (esk R 1)))\n",
     "", true},
    {"3.17", "ISO/IEC 11770-2 Key Establishment Mechanism 1", false,
     "(sendIR (ID I) (T I))\n"
     "(acceptI (hash (K) (T I)))\n"
     "(acceptR (hash (K) (T I)))\n",
     "", true},
    {"3.18", "ISO/IEC 11770-2 Key Establishment Mechanism 2", false,
     "(sendIR (senc (T I) (ID R) (esk I 1) (K)))\n"
     "(acceptI (hash (K) (esk I 1)))\n"
     "(acceptR (hash (K) (esk I 1)))\n",
     "keying material F is an esk atom", true},
    {"3.19", "ISO/IEC 11770-2 Key Establishment Mechanism 3", false,
     "(sendIR (ID I) (senc (T I) (ID R) (SK) (K)))\n",
     "", false},
    {"3.20", "ISO/IEC 11770-2 Key Establishment Mechanism 4", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (senc (esk I 1) (ID I) (SK) (K)))\n",
     "roles swapped so that the nonce requester sends first", true},
    {"3.21", "ISO/IEC 11770-2 Key Establishment Mechanism 5", false,
     "(sendIR (senc (T I) (ID R) (esk I 2) (K)))\n"
     "(sendRI (senc (T R) (ID I) (esk R 2) (K)))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "", true},
    {"3.22", "ISO/IEC 11770-2 Key Establishment Mechanism 6", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (senc (esk R 1) (esk I 1) (ID I) (esk R 2) (K)))\n"
     "(sendIR (senc (esk I 1) (esk R 1) (esk I 2) (K)))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "", true},
    {"4.11", "ISO/IEC 11770-3 Key Transport Mechanism 1", false,
     "(sendIR (aenc (ID I) (SK) (pk R)))\n",
     "ElGamal-style encryption written as public key encryption", true},
    {"4.12", "ISO/IEC 11770-3 Key Transport Mechanism 2", false,
     "(sendIR (aenc (ID I) (SK) (T I) (pk R)))\n",
     "", true},
    {"4.13", "ISO/IEC 11770-3 Key Transport Mechanism 3", false,
     "(sendIR (ID R) (T I) (aenc (ID I) (SK) (pk R)) (sign (ID R) (T I) (aenc (ID I) (SK) (pk R)) (lsk I)))\n",
     "", true},
    {"4.14", "Denning-Sacco public key protocol", false,
     "(sendIR (aenc (sign (SK) (T I) (lsk I)) (pk R)))\n",
     "certificates omitted: public keys are known to both parties", true},
    {"4.15", "ISO/IEC 11770-3 Key Transport Mechanism 4", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) "
     "(sign (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) (lsk R)))\n",
     "", true},
    {"4.16", "ISO/IEC 11770-3 Key Transport Mechanism 5", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (esk R 1) (aenc (ID R) (esk R 2) (pk I)) (sign (esk R 1) (esk I 1) (ID I) (aenc (ID R) (esk R 2) (pk I)) "
     "(lsk R)))\n"
     "(sendIR (aenc (ID I) (esk I 2) (pk R)) (sign (esk I 1) (esk R 1) (ID R) (aenc (ID I) (esk I 2) (pk R)) (lsk I)))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "the two transported keys are combined with hash", true},
    {"4.17", "ISO/IEC 11770-3 Key Transport Mechanism 6", false,
     "(sendIR (aenc (ID I) (esk I 2) (esk I 1) (pk R)))\n"
     "(sendRI (aenc (ID R) (esk R 2) (esk I 1) (esk R 1) (pk I)))\n"
     "(sendIR (esk R 1))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "the two transported keys are combined with hash", true},
    {"4.18", "Helsinki protocol", true,
     "(sendIR (aenc (ID I) (esk I 2) (esk I 1) (pk R)))\n"
     "(sendRI (aenc (esk R 2) (esk I 1) (esk R 1) (pk I)))\n"
     "(sendIR (esk R 1))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "the two transported keys are combined with hash", false},
    {"4.19", "Blake-Wilson-Menezes key transport protocol", false,
     "(sendIR (esk I 1))\n"
     "(sendRI (esk R 1) (sign (ID I) (esk I 1) (esk R 1) (lsk R)))\n"
     "(sendIR (aenc (ID I) (SK) (pk R)) (sign (ID R) (esk I 1) (esk R 1) (aenc (ID I) (SK) (pk R)) (lsk I)))\n",
     "", true},
    {"4.20", "Needham-Schroeder public key protocol", true,
     "(sendIR (aenc (esk I 1) (ID I) (pk R)))\n"
     "(sendRI (aenc (esk I 1) (esk R 1) (pk I)))\n"
     "(sendIR (aenc (esk R 1) (pk R)))\n"
     "(acceptI (hash (esk I 1) (esk R 1)))\n"
     "(acceptR (hash (esk I 1) (esk R 1)))\n",
     "session key is the hash of the two nonces", false},
    {"4.22", "Needham-Schroeder-Lowe protocol modified by Basin et al.", false,
     "(sendIR (aenc (esk I 1) (ID I) (pk R)))\n"
     "(sendRI (aenc (esk I 1) (esk R 1) (ID R) (pk I)))\n"
     "(sendIR (aenc (esk R 1) (pk R)))\n"
     "(acceptI (hash (esk I 1) (esk R 1)))\n"
     "(acceptR (hash (esk I 1) (esk R 1)))\n",
     "session key is the hash of the two nonces", true},
    {"4.24", "X.509 one-pass authentication", false,
     "(sendIR (T I) (esk I 1) (ID R) (aenc (SK) (pk R)) (sign (T I) (esk I 1) (ID R) (aenc (SK) (pk R)) (lsk I)))\n",
     "", true},
    {"4.26", "X.509 two-pass authentication", false,
     "(sendIR (T I) (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (sign (T I) (esk I 1) (ID R) (aenc (esk I 2) (pk R)) "
     "(lsk I)))\n"
     "(sendRI (T R) (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) "
     "(sign (T R) (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (lsk R)))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "the two transported keys are combined with hash", true},
    {"4.27", "X.509 three-pass authentication", false,
     "(sendIR (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (sign (esk I 1) (ID R) (aenc (esk I 2) (pk R)) (lsk I)))\n"
     "(sendRI (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) "
     "(sign (esk R 1) (ID I) (esk I 1) (aenc (esk R 2) (pk I)) (lsk R)))\n"
     "(sendIR (sign (esk R 1) (ID R) (lsk I)))\n"
     "(acceptI (hash (esk I 2) (esk R 2)))\n"
     "(acceptR (hash (esk I 2) (esk R 2)))\n",
     "the two transported keys are combined with hash", true},
    {"5.1", "Diffie-Hellman key agreement", true,
     "(sendIR (exp (T I) (esk I 1)))\n"
     "(sendRI (exp (T I) (esk R 1)))\n"
     "(acceptI (exp (exp (T I) (esk I 1)) (esk R 1)))\n"
     "(acceptR (exp (exp (T I) (esk I 1)) (esk R 1)))\n",
     "the public generator is written T_I", false},
};

}  // namespace

std::vector<PracticalEntry> practical_corpus() {
  std::vector<PracticalEntry> out;
  for (const Source& s : kSources) {
    Protocol p = parse_protocol_text(s.text);
    if (auto errs = validate_protocol(p); !errs.empty())
      throw std::logic_error(std::string("practical encoding ") + s.number + ": " + errs.front());
    out.push_back(PracticalEntry{s.number, s.name, s.attack, std::move(p), s.note, ""});
  }
  const std::size_t originals = out.size();
  for (std::size_t i = 0; i < originals; ++i) {
    if (!kSources[i].twin) continue;
    const PracticalEntry& src = out[i];
    const auto key = session_key(src.protocol);
    const auto where = key ? leak_positions(src.protocol, *key) : std::vector<std::size_t>{};
    if (where.empty()) throw std::logic_error("practical twin " + src.number + ": session key never sendable");
    PracticalEntry twin;
    twin.number = src.number + "-leak";
    twin.name = src.name + " (session key leaked)";
    twin.attack = true;
    twin.protocol = append_element(src.protocol, where.back(), *key);
    twin.note = "session key appended in clear to message " + std::to_string(where.back() + 1);
    twin.twin_of = src.number;
    out.push_back(std::move(twin));
  }
  return out;
}

std::vector<UnsupportedEntry> practical_unsupported() {
  return {{"1.15", "Protocol ntor of Goldberg, Stebila and Ustaoglu",
           "needs a static Diffie-Hellman key g^b tied to the responder's long-term secret"}};
}

std::vector<ProtocolRecord> practical_records() {
  std::vector<ProtocolRecord> out;
  for (PracticalEntry& e : practical_corpus()) {
    ProtocolRecord r;
    r.protocol = std::move(e.protocol);
    r.label = e.attack ? Verdict::Insecure : Verdict::Secure;
    r.provenance = "reference";
    r.name = e.number + " " + e.name;
    r.origin = e.twin_of.empty() ? "practical" : "practical_leak";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace kexnet
