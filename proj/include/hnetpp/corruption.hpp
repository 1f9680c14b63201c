#ifndef HNETPP_CORRUPTION_HPP
#define HNETPP_CORRUPTION_HPP

// Seeded robustness transforms over UTF-8 text. Each one decodes, edits
// codepoints and re-encodes; invalid input raises DataError.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hnetpp/errors.hpp"
#include "hnetpp/rng.hpp"
#include "hnetpp/utf8.hpp"

namespace hnetpp {

enum class CorruptionKind { Zwnj, Diacritic, Substitution, Reorder };

inline CorruptionKind parse_corruption_kind(std::string_view s) {
  if (s == "zwnj") return CorruptionKind::Zwnj;
  if (s == "diacritic" || s == "diacritics") return CorruptionKind::Diacritic;
  if (s == "substitution") return CorruptionKind::Substitution;
  if (s == "reorder") return CorruptionKind::Reorder;
  throw ConfigError("unknown corruption kind '" + std::string(s) + "' (zwnj, diacritic, substitution, reorder)");
}

struct SubstitutionRule {
  char32_t to = 0;
  bool word_final_only = false;
};

struct CorruptionTables {
  std::set<char32_t> diacritics;
  std::map<char32_t, SubstitutionRule> substitutions;

  static CorruptionTables defaults() {
    CorruptionTables t;
    for (char32_t c = 0x064B; c <= 0x0652; ++c) t.diacritics.insert(c);
    t.diacritics.insert(0x0654);  // hamza above
    t.diacritics.insert(0x0670);  // superscript alef
    t.diacritics.insert(0x0640);  // tatweel
    t.substitutions[0x06CC] = {0x064A, false};  // Farsi yeh -> Arabic yeh
    t.substitutions[0x06A9] = {0x0643, false};  // keheh -> kaf
    t.substitutions[0x0647] = {0x0629, true};   // heh -> teh marbuta
    return t;
  }
};

/// {"diacritics": [cp...], "substitutions": [{"from": cp, "to": cp, "word_final": bool}]}
/// Codepoints may be integers or "U+XXXX" strings. Present keys replace the
/// corresponding default table.
inline CorruptionTables load_corruption_tables(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corruption table " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed corruption table " + path + ": " + e.what());
  }
  auto codepoint = [&](const nlohmann::json& v) -> char32_t {
    if (v.is_number_unsigned()) return static_cast<char32_t>(v.get<std::uint32_t>());
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s.size() > 2 && (s[0] == 'U' || s[0] == 'u') && s[1] == '+') {
        try {
          return static_cast<char32_t>(std::stoul(s.substr(2), nullptr, 16));
        } catch (const std::exception&) {
        }
      }
    }
    throw ConfigError(path + ": bad codepoint " + v.dump());
  };
  auto t = CorruptionTables::defaults();
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "diacritics") {
      t.diacritics.clear();
      for (const auto& v : value) t.diacritics.insert(codepoint(v));
    } else if (key == "substitutions") {
      t.substitutions.clear();
      for (const auto& v : value) {
        if (!v.is_object() || !v.contains("from") || !v.contains("to")) {
          throw ConfigError(path + ": substitution entries need from/to");
        }
        t.substitutions[codepoint(v["from"])] = {codepoint(v["to"]), v.value("word_final", false)};
      }
    } else {
      throw ConfigError(path + ": unknown key " + key);
    }
  }
  return t;
}

namespace detail {

inline std::u32string decode_or_throw(std::string_view text) {
  auto cps = utf8::decode(text);
  if (!cps) throw DataError("corruption input is not valid UTF-8");
  return *cps;
}

inline void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corruption rate must lie in [0, 1]");
}

// A position is word-final when the next codepoint is absent, whitespace,
// punctuation or ZWNJ.
inline bool word_final(const std::u32string& cps, std::size_t i) {
  if (i + 1 >= cps.size()) return true;
  const char32_t next = cps[i + 1];
  return utf8::is_whitespace(next) || next == utf8::kZwnj || utf8::category(next) == utf8::Category::Punctuation;
}

}  // namespace detail

/// Optional counters for sweep bookkeeping.
struct CorruptionCounts {
  std::size_t candidates = 0;
  std::size_t changed = 0;
};

/// Each U+200C is corrupted with probability `rate`; a corrupted one is
/// deleted or replaced by U+0020 with equal odds.
inline std::string corrupt_zwnj(std::string_view text, double rate, std::uint64_t seed,
                                CorruptionCounts* counts = nullptr) {
  detail::check_rate(rate);
  const auto cps = detail::decode_or_throw(text);
  Rng rng(derive_seed(seed, {0x2C}));
  std::u32string out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    if (c != utf8::kZwnj) {
      out.push_back(c);
      continue;
    }
    if (counts) ++counts->candidates;
    const bool hit = rng.bernoulli(rate);
    const bool to_space = rng.bernoulli(0.5);
    if (!hit) {
      out.push_back(c);
      continue;
    }
    if (counts) ++counts->changed;
    if (to_space) out.push_back(U' ');
  }
  return utf8::encode(out);
}

inline std::string remove_diacritics(std::string_view text, const CorruptionTables& tables = CorruptionTables::defaults()) {
  const auto cps = detail::decode_or_throw(text);
  std::u32string out;
  out.reserve(cps.size());
  for (char32_t c : cps)
    if (!tables.diacritics.count(c)) out.push_back(c);
  return utf8::encode(out);
}

inline std::string substitute_arabic(std::string_view text, double rate, std::uint64_t seed,
                                     const CorruptionTables& tables = CorruptionTables::defaults(),
                                     CorruptionCounts* counts = nullptr) {
  detail::check_rate(rate);
  auto cps = detail::decode_or_throw(text);
  Rng rng(derive_seed(seed, {0x5B}));
  for (std::size_t i = 0; i < cps.size(); ++i) {
    auto it = tables.substitutions.find(cps[i]);
    if (it == tables.substitutions.end()) continue;
    if (it->second.word_final_only && !detail::word_final(cps, i)) continue;
    if (counts) ++counts->candidates;
    if (rng.bernoulli(rate)) {
      cps[i] = it->second.to;
      if (counts) ++counts->changed;
    }
  }
  return utf8::encode(cps);
}

/// Whitespace tokenization into consecutive windows of three tokens; each
/// window is permuted with probability `rate`. Tokens move between the
/// original slots, so the whitespace runs between them are kept as they were.
inline std::string reorder_words(std::string_view text, double rate, std::uint64_t seed,
                                 CorruptionCounts* counts = nullptr) {
  detail::check_rate(rate);
  const auto cps = detail::decode_or_throw(text);
  std::vector<std::u32string> tokens;
  std::vector<std::u32string> gaps(1);  // gaps[i] precedes tokens[i]; gaps.back() trails
  bool in_token = false;
  for (char32_t c : cps) {
    if (utf8::is_whitespace(c)) {
      gaps.back().push_back(c);
      in_token = false;
    } else {
      if (!in_token) {
        tokens.emplace_back();
        gaps.emplace_back();
        in_token = true;
      }
      tokens.back().push_back(c);
    }
  }
  Rng rng(derive_seed(seed, {0x3E}));
  for (std::size_t w = 0; w < tokens.size(); w += 3) {
    const std::size_t end = std::min(tokens.size(), w + 3);
    if (end - w < 2) continue;
    if (counts) ++counts->candidates;
    if (!rng.bernoulli(rate)) continue;
    rng.shuffle(tokens.begin() + static_cast<std::ptrdiff_t>(w), tokens.begin() + static_cast<std::ptrdiff_t>(end));
    if (counts) ++counts->changed;
  }
  std::u32string out = gaps[0];
  for (std::size_t i = 0; i < tokens.size(); ++i) out += tokens[i] + gaps[i + 1];
  return utf8::encode(out);
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Zwnj;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// Applies `spec` to one document. Documents of a corpus should pass
/// distinct seeds, e.g. derive_seed(spec.seed, {line}).
inline std::string apply_corruption(std::string_view text, const CorruptionSpec& spec,
                                    const CorruptionTables& tables = CorruptionTables::defaults(),
                                    CorruptionCounts* counts = nullptr) {
  switch (spec.kind) {
    case CorruptionKind::Zwnj:
      return corrupt_zwnj(text, spec.rate, spec.seed, counts);
    case CorruptionKind::Diacritic:
      // Removal is total; rate 0 leaves the text alone.
      detail::check_rate(spec.rate);
      return spec.rate == 0.0 ? std::string(text) : remove_diacritics(text, tables);
    case CorruptionKind::Substitution:
      return substitute_arabic(text, spec.rate, spec.seed, tables, counts);
    default:
      return reorder_words(text, spec.rate, spec.seed, counts);
  }
}

}  // namespace hnetpp

#endif  // HNETPP_CORRUPTION_HPP
