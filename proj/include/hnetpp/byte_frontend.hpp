#ifndef HNETPP_BYTE_FRONTEND_HPP
#define HNETPP_BYTE_FRONTEND_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/nn.hpp"
#include "hnetpp/utf8.hpp"

namespace hnetpp {

/// One document as raw UTF-8 bytes. `zwnj` is set on all three bytes of
/// every encoded U+200C. `gold` holds optional morpheme-start byte offsets.
struct ByteSequence {
  std::vector<std::uint8_t> bytes;
  std::vector<bool> zwnj;
  std::string doc_id;
  std::vector<std::size_t> gold;

  std::size_t size() const noexcept { return bytes.size(); }
  bool empty() const noexcept { return bytes.empty(); }
  bool has_gold() const noexcept { return !gold.empty(); }

  std::string text() const { return std::string(bytes.begin(), bytes.end()); }
};

/// Flags bytes belonging to U+200C (E2 80 8C). Works on raw bytes, so a
/// cropped window is flagged consistently with the full document.
inline std::vector<bool> zwnj_flags(std::span<const std::uint8_t> bytes) {
  std::vector<bool> flags(bytes.size(), false);
  for (std::size_t i = 0; i + 2 < bytes.size(); ++i) {
    if (bytes[i] == 0xE2 && bytes[i + 1] == 0x80 && bytes[i + 2] == 0x8C) {
      flags[i] = flags[i + 1] = flags[i + 2] = true;
      i += 2;
    }
  }
  return flags;
}

/// Encodes text as a ByteSequence. The input must already be valid UTF-8;
/// invalid input is rejected with DataError.
inline ByteSequence encode_document(std::string_view text, std::string doc_id = {}) {
  if (!utf8::is_valid(text)) throw DataError("encode_document: input is not valid UTF-8");
  ByteSequence seq;
  seq.bytes.assign(text.begin(), text.end());
  seq.zwnj = zwnj_flags(seq.bytes);
  seq.doc_id = std::move(doc_id);
  return seq;
}

inline ByteSequence encode_document(std::u32string_view codepoints, std::string doc_id = {}) {
  return encode_document(utf8::encode(codepoints), std::move(doc_id));
}

// ---------------------------------------------------------------------------
// Byte classes for the decoder's type embedding.

enum class ByteClass : std::uint8_t { Alphabetic = 0, Numeric = 1, Punctuation = 2, Control = 3 };

inline constexpr std::size_t kByteClassCount = 4;

inline ByteClass class_of_codepoint(char32_t cp) {
  switch (utf8::category(cp)) {
    case utf8::Category::Letter:
      return ByteClass::Alphabetic;
    case utf8::Category::Digit:
      return ByteClass::Numeric;
    case utf8::Category::Punctuation:
      return ByteClass::Punctuation;
    default:
      return ByteClass::Control;
  }
}

/// Class of the codepoint that the byte at `position` belongs to.
/// Continuation bytes inherit their lead byte's class; bytes of malformed
/// sequences are Control.
inline ByteClass classify_byte(std::span<const std::uint8_t> bytes, std::size_t position) {
  if (position >= bytes.size()) throw ShapeError("classify_byte: position out of range");
  std::size_t lead = position;
  for (int back = 0; back < 3 && lead > 0 && utf8::is_continuation(bytes[lead]); ++back) --lead;
  const std::string_view view(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t n = 0;
  auto cp = utf8::decode_at(view, lead, &n);
  if (!cp || lead + n <= position) return ByteClass::Control;
  return class_of_codepoint(*cp);
}

inline ByteClass classify_byte(const ByteSequence& seq, std::size_t position) {
  return classify_byte(std::span<const std::uint8_t>(seq.bytes), position);
}

inline std::vector<ByteClass> classify_all(const ByteSequence& seq) {
  std::vector<ByteClass> out(seq.size(), ByteClass::Control);
  const std::string_view view(reinterpret_cast<const char*>(seq.bytes.data()), seq.bytes.size());
  std::size_t pos = 0;
  while (pos < seq.size()) {
    std::size_t n = 0;
    auto cp = utf8::decode_at(view, pos, &n);
    if (!cp) {
      out[pos++] = ByteClass::Control;
      continue;
    }
    const ByteClass c = class_of_codepoint(*cp);
    for (std::size_t k = 0; k < n; ++k) out[pos + k] = c;
    pos += n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sinusoidal positions: pe[2i] = sin(p / 10000^(2i/dim)), pe[2i+1] = cos(...).

template <typename Real = double>
std::vector<Real> positional_encoding(std::size_t position, std::size_t dim) {
  if (dim % 2 != 0) throw ConfigError("positional_encoding: dimension must be even, got " + std::to_string(dim));
  std::vector<Real> pe(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    const double angle = static_cast<double>(position) * freq;
    pe[2 * i] = static_cast<Real>(std::sin(angle));
    pe[2 * i + 1] = static_cast<Real>(std::cos(angle));
  }
  return pe;
}

/// rows x dim matrix of encodings for positions 0..rows-1.
template <typename Real>
Tensor<Real> positional_table(std::size_t rows, std::size_t dim) {
  auto t = Tensor<Real>::matrix(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    auto pe = positional_encoding<Real>(r, dim);
    std::copy(pe.begin(), pe.end(), t.data() + r * dim);
  }
  return t;
}

// ---------------------------------------------------------------------------
// ZWNJ-aware byte embedding: row t is byte_embed[x_t], plus zwnj_embed when
// byte t belongs to a U+200C.

template <typename Real>
struct ByteEmbeddingTable {
  Parameter<Real>* byte_embed = nullptr;  // 256 x d
  Parameter<Real>* zwnj_embed = nullptr;  // 1 x d

  static ByteEmbeddingTable create(ParameterStore<Real>& store, const std::string& name, std::size_t dim, Rng& rng) {
    ByteEmbeddingTable t;
    t.byte_embed = &store.add(name + ".byte", nn::uniform_init<Real>(256, dim, 1.0 / std::sqrt(double(dim)), rng));
    t.zwnj_embed = &store.add(name + ".zwnj", nn::uniform_init<Real>(1, dim, 1.0 / std::sqrt(double(dim)), rng));
    return t;
  }

  std::size_t dim() const { return byte_embed->value.cols(); }
};

template <typename Real>
Var<Real> embed_bytes(const ByteSequence& seq, const Var<Real>& byte_table, const Var<Real>& zwnj_row) {
  if (seq.empty()) throw ShapeError("embed_bytes: empty sequence");
  if (byte_table.rows() != 256 || zwnj_row.cols() != byte_table.cols()) {
    throw ShapeError("embed_bytes: tables " + shape_string(byte_table.shape()) + " and " +
                     shape_string(zwnj_row.shape()) + " are inconsistent");
  }
  std::vector<std::size_t> idx(seq.bytes.begin(), seq.bytes.end());
  Var<Real> out = ad::embedding_lookup(byte_table, std::move(idx));
  bool any = false;
  auto flags = Tensor<Real>::matrix(seq.size(), 1);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq.zwnj[t]) {
      flags[t] = Real{1};
      any = true;
    }
  }
  if (!any) return out;
  return out + byte_table.graph().constant(std::move(flags)) * zwnj_row;
}

template <typename Real>
Var<Real> embed_bytes(Graph<Real>& g, const ByteSequence& seq, const ByteEmbeddingTable<Real>& table) {
  return embed_bytes(seq, g.param(*table.byte_embed), g.param(*table.zwnj_embed));
}

}  // namespace hnetpp

#endif  // HNETPP_BYTE_FRONTEND_HPP
