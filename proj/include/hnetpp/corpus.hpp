#ifndef HNETPP_CORPUS_HPP
#define HNETPP_CORPUS_HPP

// Corpus files: UTF-8 text with one document per line, or JSONL (".jsonl")
// with {"text": "...", "boundaries": [byte offsets]} per line.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "hnetpp/byte_frontend.hpp"
#include "hnetpp/errors.hpp"
#include "hnetpp/rng.hpp"
#include "hnetpp/utf8.hpp"

namespace hnetpp {

struct LoadStats {
  std::size_t lines = 0;
  std::size_t documents = 0;
  std::size_t skipped_invalid_utf8 = 0;
  std::size_t skipped_empty = 0;
};

using LogFn = std::function<void(const std::string&)>;

inline void log_to_stderr(const std::string& msg) { std::cerr << msg << '\n'; }

inline bool is_jsonl_path(const std::string& path) {
  return std::filesystem::path(path).extension() == ".jsonl";
}

/// Validates and normalizes gold offsets: every offset must lie inside the
/// document; the result is sorted and duplicate-free.
inline std::vector<std::size_t> validate_gold(std::vector<std::size_t> gold, std::size_t length, const std::string& where) {
  for (std::size_t g : gold) {
    if (g >= length) {
      throw DataError(where + ": boundary offset " + std::to_string(g) + " outside document of " +
                      std::to_string(length) + " bytes");
    }
  }
  std::sort(gold.begin(), gold.end());
  gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
  return gold;
}

/// Streams documents from `path` in file order. Lines that are not valid
/// UTF-8 are skipped and counted; a final summary goes to `log` when any were.
template <typename Fn>
void for_each_document(const std::string& path, Fn&& fn, LoadStats* stats = nullptr, const LogFn& log = log_to_stderr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path);
  const bool jsonl = is_jsonl_path(path);
  const std::string name = std::filesystem::path(path).filename().string();
  LoadStats local;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ++local.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!utf8::is_valid(line)) {
      ++local.skipped_invalid_utf8;
      continue;
    }
    const std::string where = name + ":" + std::to_string(lineno);
    ByteSequence doc;
    if (jsonl) {
      if (line.find_first_not_of(" \t") == std::string::npos) {
        ++local.skipped_empty;
        continue;
      }
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": malformed JSON: " + e.what());
      }
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        throw DataError(where + ": expected an object with a string \"text\"");
      }
      const std::string text = j["text"].get<std::string>();
      if (text.empty()) {
        ++local.skipped_empty;
        continue;
      }
      doc = encode_document(text, where);
      if (j.contains("boundaries")) {
        const auto& b = j["boundaries"];
        if (!b.is_array()) throw DataError(where + ": \"boundaries\" must be an array");
        std::vector<std::size_t> gold;
        for (const auto& v : b) {
          if (!v.is_number_unsigned()) throw DataError(where + ": boundary offsets must be nonnegative integers");
          gold.push_back(v.get<std::size_t>());
        }
        doc.gold = validate_gold(std::move(gold), doc.size(), where);
      }
    } else {
      if (line.empty()) {
        ++local.skipped_empty;
        continue;
      }
      doc = encode_document(line, where);
    }
    ++local.documents;
    fn(std::move(doc));
  }
  if (local.skipped_invalid_utf8 && log) {
    log(path + ": skipped " + std::to_string(local.skipped_invalid_utf8) + " line(s) with invalid UTF-8");
  }
  if (stats) {
    stats->lines += local.lines;
    stats->documents += local.documents;
    stats->skipped_invalid_utf8 += local.skipped_invalid_utf8;
    stats->skipped_empty += local.skipped_empty;
  }
}

inline std::vector<ByteSequence> read_documents(const std::string& path, LoadStats* stats = nullptr,
                                                const LogFn& log = log_to_stderr) {
  std::vector<ByteSequence> docs;
  for_each_document(path, [&](ByteSequence d) { docs.push_back(std::move(d)); }, stats, log);
  return docs;
}

inline void write_jsonl(const std::string& path, const std::vector<ByteSequence>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& d : docs) {
    nlohmann::json j = {{"text", d.text()}};
    if (d.has_gold()) j["boundaries"] = d.gold;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits

enum SplitIndex : std::size_t { kTrain = 0, kValidation = 1, kTest = 2 };

inline const char* split_name(std::size_t s) {
  static const char* names[] = {"train", "validation", "test"};
  return names[s];
}

/// Largest-remainder rounding of n * fractions; ties on the remainder go to
/// the earlier split.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (!(std::abs(total - 1.0) <= 1e-9)) throw ConfigError("split fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (fractions[i] < 0) throw ConfigError("split fractions must be nonnegative");
    const double exact = static_cast<double>(n) * fractions[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

/// Split id of each of n documents: a seeded permutation cut into
/// consecutive blocks of split_sizes(n).
inline std::vector<std::uint8_t> split_assignment(std::size_t n, const std::array<double, 3>& fractions,
                                                  std::uint64_t seed) {
  const auto sizes = split_sizes(n, fractions);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0x5D}));
  rng.shuffle(perm.begin(), perm.end());
  std::vector<std::uint8_t> out(n);
  std::size_t pos = 0;
  for (std::uint8_t s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < sizes[s]; ++k) out[perm[pos++]] = s;
  return out;
}

struct CorpusSplits {
  std::array<std::vector<ByteSequence>, 3> parts;
  LoadStats stats;

  const std::vector<ByteSequence>& train() const { return parts[kTrain]; }
  const std::vector<ByteSequence>& validation() const { return parts[kValidation]; }
  const std::vector<ByteSequence>& test() const { return parts[kTest]; }
};

/// Two streaming passes over `paths`: one to count documents, one to route
/// each into its split. Documents keep file order within a split.
inline CorpusSplits load_corpus(const std::vector<std::string>& paths, const std::array<double, 3>& fractions,
                                std::uint64_t seed, const LogFn& log = log_to_stderr) {
  if (paths.empty()) throw DataError("load_corpus: no input files");
  std::size_t n = 0;
  for (const auto& p : paths) for_each_document(p, [&](ByteSequence) { ++n; }, nullptr, nullptr);
  if (n == 0) throw DataError("load_corpus: corpus has no documents");
  const auto assignment = split_assignment(n, fractions, seed);
  CorpusSplits out;
  std::size_t i = 0;
  for (const auto& p : paths) {
    for_each_document(p, [&](ByteSequence d) { out.parts[assignment[i++]].push_back(std::move(d)); }, &out.stats, log);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: Persian-like words built from a toy morpheme lexicon.
// Gold boundaries are the byte offsets where each morpheme starts.

struct Morpheme {
  std::string text;
  enum Role { NounStem, VerbPrefix, VerbStem, Plural, Clitic, Person, Punct } role;
};

struct SyntheticLexicon {
  std::vector<std::string> noun_stems{"کتاب", "دوست", "شهر", "درخت", "باغ", "دست", "سنگ", "کار"};
  std::vector<std::string> verb_prefixes{"می", "نمی"};
  std::vector<std::string> verb_stems{"رو", "خور", "گو", "بین", "نویس"};
  std::vector<std::string> plurals{"ها"};
  std::vector<std::string> clitics{"ش", "م", "ت", "مان", "تان", "شان"};
  std::vector<std::string> persons{"م", "ی", "د", "یم", "ید", "ند"};
  std::vector<std::string> punctuation{".", "،", "؟"};

  std::vector<std::string> all() const {
    std::vector<std::string> v;
    for (const auto* list : {&noun_stems, &verb_prefixes, &verb_stems, &plurals, &clitics, &persons, &punctuation})
      v.insert(v.end(), list->begin(), list->end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }
};

/// Number of ways `word` splits into a sequence of lexicon morphemes
/// (ZWNJ removed first), capped at 2.
inline std::size_t segmentation_count(const std::string& word, const std::vector<std::string>& morphemes) {
  std::string w;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word.compare(i, 3, "\xE2\x80\x8C") == 0) {
      i += 2;
      continue;
    }
    w.push_back(word[i]);
  }
  std::vector<std::size_t> ways(w.size() + 1, 0);
  ways[0] = 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!ways[i]) continue;
    for (const auto& m : morphemes)
      if (!m.empty() && w.compare(i, m.size(), m) == 0) ways[i + m.size()] = std::min<std::size_t>(2, ways[i + m.size()] + ways[i]);
  }
  return ways[w.size()];
}

struct SyntheticOptions {
  std::size_t target_bytes = 2048;
  std::size_t min_words = 3;
  std::size_t max_words = 7;
  double zwnj_probability = 0.5;  // joiner between stem and plural / prefix and stem
  double verb_probability = 0.4;
  double plural_probability = 0.4;
  double clitic_probability = 0.3;
};

struct SyntheticWord {
  std::string text;
  std::vector<std::size_t> starts;  // morpheme starts relative to the word
};

namespace detail {

inline const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

inline SyntheticWord synth_word(const SyntheticLexicon& lex, const SyntheticOptions& o, Rng& rng) {
  SyntheticWord w;
  auto push = [&](const std::string& m, bool joiner) {
    if (joiner) w.text += "\xE2\x80\x8C";
    w.starts.push_back(w.text.size());
    w.text += m;
  };
  if (rng.bernoulli(o.verb_probability)) {
    push(pick(lex.verb_prefixes, rng), false);
    push(pick(lex.verb_stems, rng), rng.bernoulli(o.zwnj_probability));
    push(pick(lex.persons, rng), false);
  } else {
    push(pick(lex.noun_stems, rng), false);
    if (rng.bernoulli(o.plural_probability)) push(pick(lex.plurals, rng), rng.bernoulli(o.zwnj_probability));
    if (rng.bernoulli(o.clitic_probability)) push(pick(lex.clitics, rng), false);
  }
  return w;
}

}  // namespace detail

/// Seeded documents of whitespace-separated synthetic words ending in a
/// punctuation mark, generated until `target_bytes` is reached. Words whose
/// morpheme split is not unique under the lexicon are redrawn.
inline std::vector<ByteSequence> generate_synthetic_corpus(std::uint64_t seed, const SyntheticOptions& o = {},
                                                           const SyntheticLexicon& lex = {}) {
  if (o.min_words == 0 || o.max_words < o.min_words) throw ConfigError("synthetic corpus: bad word-count range");
  const auto inventory = lex.all();
  Rng rng(derive_seed(seed, {0x5E}));
  std::vector<ByteSequence> docs;
  std::size_t total = 0;
  while (total < o.target_bytes) {
    std::string text;
    std::vector<std::size_t> gold;
    const std::size_t words = o.min_words + rng.below(o.max_words - o.min_words + 1);
    for (std::size_t k = 0; k < words; ++k) {
      SyntheticWord w;
      do {
        w = detail::synth_word(lex, o, rng);
      } while (segmentation_count(w.text, inventory) != 1);
      if (k) text += ' ';
      for (std::size_t s : w.starts) gold.push_back(text.size() + s);
      text += w.text;
    }
    gold.push_back(text.size());
    text += detail::pick(lex.punctuation, rng);
    ByteSequence d = encode_document(text, "synthetic:" + std::to_string(docs.size() + 1));
    d.gold = std::move(gold);
    total += d.size() + 1;  // newline in the file form
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace hnetpp

#endif  // HNETPP_CORPUS_HPP
