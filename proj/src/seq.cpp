#include "normlab/seq.hpp"

#include <algorithm>
#include <cctype>

namespace normlab {

namespace {

// Structural punctuation split into single-character tokens. Underscore,
// hyphen and braces stay glued to words (ids like actor_3 and template
// placeholders like {observation} must remain single tokens).
constexpr std::string_view kPunct = ".,!?;:()[]\"'|\\";

bool is_punct(char c) { return kPunct.find(c) != std::string_view::npos; }

// Characters that get a backslash in serialized record text. Commas are
// deliberately not escaped: the record grammar disambiguates them because
// clause boundaries require an unescaped colon, and colons are escaped.
bool needs_escape(char c) {
  return c == ':' || c == '[' || c == ']' || c == '\\';
}

std::string escape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (needs_escape(c)) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// Collapses the token-joined spelling of an escape ("\ [") back to the
// compact spelling ("\[") so one parser handles both forms.
std::string normalize_escapes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back(s[i]);
    if (s[i] == '\\' && i + 2 < s.size() && s[i + 1] == ' ' && is_punct(s[i + 2])) {
      ++i;  // drop the space between the backslash and the mark it escapes
    }
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out.push_back(s[i + 1]);
      ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace

Sequence Sequence::tokenize(std::string_view text) {
  std::vector<std::string> toks;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      toks.push_back(word);
      word.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_punct(c)) {
      flush();
      toks.emplace_back(1, c);
    } else {
      word.push_back(c);
    }
  }
  flush();
  return Sequence(std::move(toks));
}

std::string Sequence::text() const {
  std::string out;
  for (std::size_t i = 0; i < toks_.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks_[i];
  }
  return out;
}

std::string Sequence::compact_text() const {
  static constexpr std::string_view kNoSpaceBefore = ".,!?;:)]'";
  static constexpr std::string_view kNoSpaceAfter = "([";
  std::string out;
  bool suppress_space = false;
  for (std::size_t i = 0; i < toks_.size(); ++i) {
    const std::string& t = toks_[i];
    const bool glue_left =
        t.size() == 1 && kNoSpaceBefore.find(t[0]) != std::string_view::npos;
    if (i && !suppress_space && !glue_left) out.push_back(' ');
    out += t;
    suppress_space =
        t.size() == 1 && kNoSpaceAfter.find(t[0]) != std::string_view::npos;
  }
  return out;
}

void Sequence::append(const Sequence& other) {
  toks_.insert(toks_.end(), other.toks_.begin(), other.toks_.end());
}

bool Sequence::contains(const Sequence& needle) const {
  if (needle.empty()) return true;
  return std::search(toks_.begin(), toks_.end(), needle.toks_.begin(),
                     needle.toks_.end()) != toks_.end();
}

bool Sequence::starts_with(const Sequence& prefix) const {
  if (prefix.size() > size()) return false;
  return std::equal(prefix.toks_.begin(), prefix.toks_.end(), toks_.begin());
}

bool Sequence::ends_with(const Sequence& suffix) const {
  if (suffix.size() > size()) return false;
  return std::equal(suffix.toks_.rbegin(), suffix.toks_.rend(), toks_.rbegin());
}

Sequence replace_all(const Sequence& c, const Sequence& u, const Sequence& v) {
  if (u.empty()) throw EmptyPattern("replace_all: pattern u is empty");
  std::vector<std::string> out;
  const auto& src = c.tokens();
  std::size_t i = 0;
  while (i < src.size()) {
    if (i + u.size() <= src.size() &&
        std::equal(u.tokens().begin(), u.tokens().end(), src.begin() + i)) {
      out.insert(out.end(), v.tokens().begin(), v.tokens().end());
      i += u.size();
    } else {
      out.push_back(src[i]);
      ++i;
    }
  }
  return Sequence(std::move(out));
}

bool valid_actor_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c == ':' || c == ',' || c == '[' || c == ']' || c == '\\') return false;
    if (std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

ActionRecord make_record(const Sequence& obs, const std::string& actor_id,
                         const Sequence& action) {
  if (!valid_actor_id(actor_id)) {
    throw InvalidActorId("invalid actor id: '" + actor_id + "'");
  }
  return ActionRecord{obs, actor_id, action};
}

std::string ActionRecord::serialize() const {
  return "[" + escape_field(observation.compact_text()) + ", " + actor_id +
         ":" + escape_field(action.compact_text()) + "]";
}

std::string SanctionedRecord::serialize() const {
  return "[" + escape_field(base.observation.compact_text()) + ", " +
         base.actor_id + ":" + escape_field(base.action.compact_text()) + ", " +
         sanctioner_id + ":" + escape_field(sanction.compact_text()) + "]";
}

ActionRecord ParsedRecord::to_action_record() const {
  if (clauses.empty()) throw ParseError("record has no attribution clause");
  return ActionRecord{observation, clauses.front().first, clauses.front().second};
}

std::string ParsedRecord::serialize() const {
  std::string out = "[" + escape_field(observation.compact_text());
  for (const auto& [id, text] : clauses) {
    out += ", " + id + ":" + escape_field(text.compact_text());
  }
  out += "]";
  return out;
}

std::optional<ParsedRecord> parse_record(std::string_view raw) {
  const std::string norm = normalize_escapes(trim(raw));
  if (norm.size() < 2 || norm.front() != '[' || norm.back() != ']') return std::nullopt;

  const std::string_view body(norm.data() + 1, norm.size() - 2);
  auto escaped = [&](std::size_t i) {
    std::size_t backslashes = 0;
    while (i > backslashes && body[i - backslashes - 1] == '\\') ++backslashes;
    return backslashes % 2 == 1;
  };

  // A clause boundary is an unescaped comma at bracket depth 0 followed by a
  // valid actor id and an unescaped colon. Commas inside field text never
  // qualify because colons in field text are escaped.
  std::vector<std::size_t> comma_pos;   // boundary commas
  std::vector<std::size_t> colon_pos;   // matching id-terminating colons
  int depth = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (escaped(i)) continue;
    if (c == '[') { ++depth; continue; }
    if (c == ']') { --depth; continue; }
    if (c != ',' || depth != 0) continue;
    std::size_t j = i + 1;
    bool ok = false;
    for (; j < body.size(); ++j) {
      if (escaped(j)) continue;
      const char d = body[j];
      if (d == ',' || d == '[' || d == ']') break;
      if (d == ':') { ok = true; break; }
    }
    if (!ok) continue;
    const std::string id = trim(body.substr(i + 1, j - i - 1));
    if (!valid_actor_id(id)) continue;
    comma_pos.push_back(i);
    colon_pos.push_back(j);
  }
  if (comma_pos.empty()) return std::nullopt;
  if (depth != 0) return std::nullopt;

  ParsedRecord rec;
  rec.observation =
      Sequence::tokenize(unescape_field(trim(body.substr(0, comma_pos[0]))));
  for (std::size_t k = 0; k < comma_pos.size(); ++k) {
    const std::size_t text_begin = colon_pos[k] + 1;
    const std::size_t text_end =
        (k + 1 < comma_pos.size()) ? comma_pos[k + 1] : body.size();
    const std::string id =
        trim(body.substr(comma_pos[k] + 1, colon_pos[k] - comma_pos[k] - 1));
    rec.clauses.emplace_back(
        id, Sequence::tokenize(
                unescape_field(trim(body.substr(text_begin, text_end - text_begin)))));
  }
  return rec;
}

std::vector<RecordSpan> scan_records(const Sequence& seq) {
  std::vector<RecordSpan> out;
  const auto& toks = seq.tokens();
  std::size_t i = 0;
  while (i < toks.size()) {
    if (toks[i] == "\\") { i += 2; continue; }  // escaped token pair is text
    if (toks[i] != "[") { ++i; continue; }
    int depth = 0;
    std::size_t j = i;
    std::size_t close = 0;
    bool found = false;
    for (; j < toks.size(); ++j) {
      if (toks[j] == "\\") { ++j; continue; }
      if (toks[j] == "[") ++depth;
      if (toks[j] == "]" && --depth == 0) { close = j; found = true; break; }
    }
    if (!found) { ++i; continue; }
    std::string text;
    for (std::size_t k = i; k <= close; ++k) {
      if (k > i) text.push_back(' ');
      text += toks[k];
    }
    if (auto rec = parse_record(text)) {
      out.push_back(RecordSpan{i, close + 1, std::move(*rec)});
      i = close + 1;
    } else {
      ++i;
    }
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  auto split = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = split(seed);
  h = split(h ^ split(a + 0x1000000001ULL));
  h = split(h ^ split(b + 0x2000000002ULL));
  h = split(h ^ split(c + 0x3000000003ULL));
  return h;
}

}  // namespace normlab
