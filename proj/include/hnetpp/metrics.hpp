#ifndef HNETPP_METRICS_HPP
#define HNETPP_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hnetpp/errors.hpp"
#include "hnetpp/model.hpp"

namespace hnetpp {

// ---------------------------------------------------------------------------
// Bits per byte

struct BpbAccumulator {
  double nats = 0.0;
  std::size_t bytes = 0;

  void add(std::span<const double> log_probs) {
    for (double lp : log_probs) nats -= lp;
    bytes += log_probs.size();
  }
  double value() const {
    if (bytes == 0) throw DataError("bits_per_byte: no bytes scored");
    return nats / (std::numbers::ln2 * static_cast<double>(bytes));
  }
};

/// Eval mode: argmax gates, xi = mu, no dropout. Documents are summed in order.
template <typename Real>
double bits_per_byte(const HNetModel<Real>& model, const std::vector<ByteSequence>& docs) {
  if (docs.empty()) throw DataError("bits_per_byte: empty corpus");
  BpbAccumulator acc;
  for (const auto& d : docs) acc.add(byte_log_probs(model, d));
  return acc.value();
}

// ---------------------------------------------------------------------------
// Boundary scoring

struct SegmentationResult {
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> gold;
  std::size_t true_positives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline std::vector<std::size_t> scored_offsets(const std::vector<std::size_t>& v) {
  std::set<std::size_t> s(v.begin(), v.end());
  s.erase(0);
  return {s.begin(), s.end()};
}

}  // namespace detail

/// Offsets are treated as sets; offset 0 is never scored. Empty predictions
/// give precision 0, empty gold gives recall 0.
inline SegmentationResult segmentation_prf(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold) {
  SegmentationResult r;
  r.predicted = detail::scored_offsets(predicted);
  r.gold = detail::scored_offsets(gold);
  std::vector<std::size_t> common;
  std::set_intersection(r.predicted.begin(), r.predicted.end(), r.gold.begin(), r.gold.end(), std::back_inserter(common));
  r.true_positives = common.size();
  const double tp = static_cast<double>(r.true_positives);
  r.precision = r.predicted.empty() ? 0.0 : tp / static_cast<double>(r.predicted.size());
  r.recall = r.gold.empty() ? 0.0 : tp / static_cast<double>(r.gold.size());
  r.f1 = detail::f1_of(r.precision, r.recall);
  return r;
}

/// Micro-averaged counts over a corpus.
struct SegmentationTotals {
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t true_positives = 0;

  void add(const SegmentationResult& r) {
    predicted += r.predicted.size();
    gold += r.gold.size();
    true_positives += r.true_positives;
  }
  double precision() const { return predicted ? double(true_positives) / double(predicted) : 0.0; }
  double recall() const { return gold ? double(true_positives) / double(gold) : 0.0; }
  double f1() const { return detail::f1_of(precision(), recall()); }

  nlohmann::json to_json() const {
    return {{"precision", precision()},
            {"recall", recall()},
            {"f1", f1()},
            {"predicted", predicted},
            {"gold", gold},
            {"true_positives", true_positives}};
  }
};

/// Level-1 eval-mode boundaries scored against each document's gold offsets.
template <typename Real>
SegmentationTotals evaluate_segmentation(const HNetModel<Real>& model, const std::vector<ByteSequence>& docs) {
  SegmentationTotals t;
  for (const auto& d : docs) t.add(segmentation_prf(compose_boundaries(eval_routing(model, d), 1), d.gold));
  return t;
}

// ---------------------------------------------------------------------------
// Chunk statistics

inline const std::vector<std::string>& chunk_categories() {
  static const std::vector<std::string> c{"simple", "compound", "clitic", "punctuation", "other"};
  return c;
}

/// Chunk text -> category. File format: JSON object {"chunk text": "category"}
/// with categories from chunk_categories().
struct ChunkLexicon {
  std::map<std::string, std::string> tags;

  static ChunkLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed lexicon " + path + ": " + e.what());
    }
    if (!j.is_object()) throw DataError(path + ": lexicon must be a JSON object");
    ChunkLexicon lex;
    const auto& cats = chunk_categories();
    for (const auto& [text, cat] : j.items()) {
      if (!cat.is_string() || std::find(cats.begin(), cats.end(), cat.get<std::string>()) == cats.end()) {
        throw DataError(path + ": bad category for '" + text + "': " + cat.dump());
      }
      lex.tags[text] = cat.get<std::string>();
    }
    return lex;
  }

  /// Surrounding ASCII whitespace is ignored for lookup.
  std::string category(std::string_view chunk) const {
    auto first = chunk.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return "other";
    auto last = chunk.find_last_not_of(" \t\r\n");
    auto it = tags.find(std::string(chunk.substr(first, last - first + 1)));
    return it == tags.end() ? "other" : it->second;
  }
};

struct CategoryStats {
  std::size_t count = 0;
  std::size_t total_length = 0;
  double frequency = 0.0;
  double mean_length = 0.0;
};

struct ChunkStats {
  std::map<std::size_t, std::size_t> length_histogram;  // bytes -> chunks
  std::map<std::string, CategoryStats> categories;
  std::size_t chunks = 0;

  void add_chunk(std::string_view text, const ChunkLexicon& lex) {
    ++length_histogram[text.size()];
    auto& c = categories[lex.category(text)];
    ++c.count;
    c.total_length += text.size();
    ++chunks;
  }

  void finish() {
    for (const auto& name : chunk_categories()) categories[name];
    for (auto& [name, c] : categories) {
      c.frequency = chunks ? static_cast<double>(c.count) / static_cast<double>(chunks) : 0.0;
      c.mean_length = c.count ? static_cast<double>(c.total_length) / static_cast<double>(c.count) : 0.0;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json hist = nlohmann::json::object();
    for (auto [len, n] : length_histogram) hist[std::to_string(len)] = n;
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [name, c] : categories) {
      cats[name] = {{"count", c.count}, {"frequency", c.frequency}, {"mean_length", c.mean_length}};
    }
    return {{"chunks", chunks}, {"length_histogram", hist}, {"categories", cats}};
  }
};

/// Statistics of the byte spans cut at `starts` (sorted, starting at 0).
inline void add_chunks(ChunkStats& stats, const ByteSequence& doc, const std::vector<std::size_t>& starts,
                       const ChunkLexicon& lex) {
  const std::string text = doc.text();
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : text.size();
    stats.add_chunk(std::string_view(text).substr(starts[k], end - starts[k]), lex);
  }
}

template <typename Real>
ChunkStats chunk_statistics(const HNetModel<Real>& model, const std::vector<ByteSequence>& docs, const ChunkLexicon& lex) {
  ChunkStats s;
  for (const auto& d : docs) add_chunks(s, d, compose_boundaries(eval_routing(model, d), 1), lex);
  s.finish();
  return s;
}

// ---------------------------------------------------------------------------
// Compression

/// Total bytes over total chunks at each level, from per-document chunk starts.
inline std::vector<double> compression_from_routing(const std::vector<std::vector<std::vector<std::size_t>>>& routing,
                                                    const std::vector<std::size_t>& byte_lengths) {
  if (routing.empty()) throw DataError("compression_ratio: empty corpus");
  const std::size_t levels = routing[0].size();
  std::vector<double> chunks(levels, 0.0);
  double bytes = 0.0;
  for (std::size_t d = 0; d < routing.size(); ++d) {
    bytes += static_cast<double>(byte_lengths[d]);
    for (std::size_t l = 0; l < levels; ++l) chunks[l] += static_cast<double>(routing[d][l].size());
  }
  std::vector<double> ratio(levels);
  for (std::size_t l = 0; l < levels; ++l) ratio[l] = bytes / chunks[l];
  return ratio;
}

template <typename Real>
std::vector<double> compression_ratio(const HNetModel<Real>& model, const std::vector<ByteSequence>& docs) {
  std::vector<std::vector<std::vector<std::size_t>>> routing;
  std::vector<std::size_t> lengths;
  for (const auto& d : docs) {
    routing.push_back(eval_routing(model, d));
    lengths.push_back(d.size());
  }
  return compression_from_routing(routing, lengths);
}

}  // namespace hnetpp

#endif  // HNETPP_METRICS_HPP
