#ifndef HNETPP_UTF8_HPP
#define HNETPP_UTF8_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hnetpp::utf8 {

inline constexpr char32_t kZwnj = 0x200C;

inline constexpr bool is_continuation(unsigned char b) noexcept { return (b & 0xC0) == 0x80; }

/// Expected sequence length from a lead byte, 0 for bytes that cannot lead.
inline constexpr std::size_t sequence_length(unsigned char lead) noexcept {
  if (lead < 0x80) return 1;
  if (lead >= 0xC2 && lead <= 0xDF) return 2;
  if (lead >= 0xE0 && lead <= 0xEF) return 3;
  if (lead >= 0xF0 && lead <= 0xF4) return 4;
  return 0;
}

/// Decodes one codepoint starting at `pos`. Returns nullopt on any malformed,
/// overlong, surrogate or out-of-range sequence.
inline std::optional<char32_t> decode_at(std::string_view s, std::size_t pos, std::size_t* length = nullptr) {
  if (pos >= s.size()) return std::nullopt;
  const auto lead = static_cast<unsigned char>(s[pos]);
  const std::size_t n = sequence_length(lead);
  if (n == 0 || pos + n > s.size()) return std::nullopt;
  char32_t cp = n == 1 ? lead : n == 2 ? (lead & 0x1F) : n == 3 ? (lead & 0x0F) : (lead & 0x07);
  for (std::size_t i = 1; i < n; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if (!is_continuation(b)) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if ((n == 3 && cp < 0x800) || (n == 4 && cp < 0x10000)) return std::nullopt;
  if (cp >= 0xD800 && cp <= 0xDFFF) return std::nullopt;
  if (cp > 0x10FFFF) return std::nullopt;
  if (length != nullptr) *length = n;
  return cp;
}

inline std::optional<std::u32string> decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t n = 0;
    auto cp = decode_at(s, pos, &n);
    if (!cp) return std::nullopt;
    out.push_back(*cp);
    pos += n;
  }
  return out;
}

inline bool is_valid(std::string_view s) { return decode(s).has_value(); }

inline void append(std::string& out, char32_t cp) {
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

inline std::string encode(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size() * 2);
  for (char32_t cp : cps) append(out, cp);
  return out;
}

inline std::string encode(char32_t cp) {
  std::string out;
  append(out, cp);
  return out;
}

/// Coarse Unicode general-category buckets.
enum class Category : std::uint8_t { Letter, Digit, Punctuation, Other };

namespace detail {
struct Range {
  char32_t lo, hi;
  Category cat;
};

// Sorted, non-overlapping. Covers ASCII, Latin, Greek, Cyrillic, Hebrew,
// Arabic (incl. Persian letters/digits), general punctuation and the
// common CJK/Hangul letter blocks. Anything unlisted is Other.
inline constexpr Range kRanges[] = {
    {0x0020, 0x002F, Category::Punctuation}, {0x0030, 0x0039, Category::Digit},
    {0x003A, 0x0040, Category::Punctuation}, {0x0041, 0x005A, Category::Letter},
    {0x005B, 0x0060, Category::Punctuation}, {0x0061, 0x007A, Category::Letter},
    {0x007B, 0x007E, Category::Punctuation}, {0x00A0, 0x00BF, Category::Punctuation},
    {0x00C0, 0x00D6, Category::Letter},      {0x00D7, 0x00D7, Category::Punctuation},
    {0x00D8, 0x00F6, Category::Letter},      {0x00F7, 0x00F7, Category::Punctuation},
    {0x00F8, 0x02AF, Category::Letter},      {0x0370, 0x0373, Category::Letter},
    {0x0376, 0x0377, Category::Letter},      {0x037B, 0x037D, Category::Letter},
    {0x0386, 0x0386, Category::Letter},      {0x0388, 0x03FF, Category::Letter},
    {0x0400, 0x0481, Category::Letter},      {0x048A, 0x052F, Category::Letter},
    {0x0531, 0x0556, Category::Letter},      {0x0561, 0x0587, Category::Letter},
    {0x05BE, 0x05BE, Category::Punctuation}, {0x05D0, 0x05EA, Category::Letter},
    {0x05F3, 0x05F4, Category::Punctuation}, {0x0609, 0x060D, Category::Punctuation},
    {0x061B, 0x061B, Category::Punctuation}, {0x061D, 0x061F, Category::Punctuation},
    {0x0620, 0x063F, Category::Letter},      {0x0640, 0x0640, Category::Letter},
    {0x0641, 0x064A, Category::Letter},      {0x0660, 0x0669, Category::Digit},
    {0x066A, 0x066D, Category::Punctuation}, {0x066E, 0x066F, Category::Letter},
    {0x0671, 0x06D3, Category::Letter},      {0x06D4, 0x06D4, Category::Punctuation},
    {0x06D5, 0x06D5, Category::Letter},      {0x06E5, 0x06E6, Category::Letter},
    {0x06EE, 0x06EF, Category::Letter},      {0x06F0, 0x06F9, Category::Digit},
    {0x06FA, 0x06FC, Category::Letter},      {0x06FD, 0x06FE, Category::Punctuation},
    {0x06FF, 0x06FF, Category::Letter},      {0x0750, 0x077F, Category::Letter},
    {0x08A0, 0x08C9, Category::Letter},      {0x0966, 0x096F, Category::Digit},
    {0x1E00, 0x1FFF, Category::Letter},      {0x2000, 0x200A, Category::Punctuation},
    {0x2010, 0x2027, Category::Punctuation}, {0x202F, 0x205F, Category::Punctuation},
    {0x20A0, 0x20C0, Category::Punctuation}, {0x2100, 0x214F, Category::Punctuation},
    {0x2190, 0x2BFF, Category::Punctuation}, {0x3000, 0x303F, Category::Punctuation},
    {0x3041, 0x3096, Category::Letter},      {0x30A1, 0x30FA, Category::Letter},
    {0x3400, 0x4DBF, Category::Letter},      {0x4E00, 0x9FFF, Category::Letter},
    {0xAC00, 0xD7A3, Category::Letter},      {0xFB50, 0xFDFF, Category::Letter},
    {0xFE70, 0xFEFC, Category::Letter},      {0xFF01, 0xFF0F, Category::Punctuation},
    {0xFF10, 0xFF19, Category::Digit},       {0xFF1A, 0xFF20, Category::Punctuation},
    {0xFF21, 0xFF3A, Category::Letter},      {0xFF41, 0xFF5A, Category::Letter},
};
}  // namespace detail

inline Category category(char32_t cp) noexcept {
  std::size_t lo = 0;
  std::size_t hi = std::size(detail::kRanges);
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const auto& r = detail::kRanges[mid];
    if (cp < r.lo) {
      hi = mid;
    } else if (cp > r.hi) {
      lo = mid + 1;
    } else {
      return r.cat;
    }
  }
  return Category::Other;
}

inline bool is_whitespace(char32_t cp) noexcept {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\v' || cp == U'\f' ||
         cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x3000;
}

}  // namespace hnetpp::utf8

#endif  // HNETPP_UTF8_HPP
