#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/errors.hpp"

namespace normlab {

// A sequence of symbols (tokens). Tokenization splits on whitespace and
// breaks the structural punctuation marks . , ! ? ; : ( ) [ ] " ' | \
// into single-character tokens. The canonical text form joins tokens with
// single spaces, so detokenize(tokenize(s)) == s for canonical s.
class Sequence {
 public:
  Sequence() = default;
  explicit Sequence(std::vector<std::string> tokens) : toks_(std::move(tokens)) {}

  static Sequence tokenize(std::string_view text);

  const std::vector<std::string>& tokens() const { return toks_; }
  std::size_t size() const { return toks_.size(); }
  bool empty() const { return toks_.empty(); }
  const std::string& operator[](std::size_t i) const { return toks_[i]; }

  // Canonical single-space-joined form.
  std::string text() const;

  // Natural rendering: no space before closing punctuation, none after an
  // opening bracket. Used by record serialization; retokenizes to the same
  // sequence.
  std::string compact_text() const;

  void push_back(std::string tok) { toks_.push_back(std::move(tok)); }
  void append(const Sequence& other);

  bool operator==(const Sequence& other) const { return toks_ == other.toks_; }
  bool operator!=(const Sequence& other) const { return toks_ != other.toks_; }

  // True if `needle` occurs as a contiguous token subsequence.
  bool contains(const Sequence& needle) const;
  bool starts_with(const Sequence& prefix) const;
  bool ends_with(const Sequence& suffix) const;

 private:
  std::vector<std::string> toks_;
};

// r^{u->v}: replaces every non-overlapping left-to-right occurrence of u's
// token subsequence in c with v's tokens. Throws EmptyPattern if u is empty.
Sequence replace_all(const Sequence& c, const Sequence& u, const Sequence& v);

// A record of an action: [<obs>, <actor_id>:<action>].
struct ActionRecord {
  Sequence observation;
  std::string actor_id;
  Sequence action;

  std::string serialize() const;
  bool operator==(const ActionRecord&) const = default;
};

// A sanctioned record: [<obs>, <j>:<a>, <i>:<s>]. Valence is metadata and is
// never serialized; whether a sanction text conveys approval or disapproval
// is configured, not inferred.
enum class Valence { positive, negative };

struct SanctionedRecord {
  ActionRecord base;
  std::string sanctioner_id;
  Sequence sanction;
  Valence valence = Valence::negative;

  std::string serialize() const;
};

// Generic parsed form: an observation plus one or more id:text clauses.
// One clause = action record, two = sanctioned record; more are permitted
// (stacked sanctions) and kept in order.
struct ParsedRecord {
  Sequence observation;
  std::vector<std::pair<std::string, Sequence>> clauses;

  bool is_action_record() const { return clauses.size() == 1; }
  ActionRecord to_action_record() const;
  std::string serialize() const;
};

// Validates an actor id: nonempty, no whitespace, none of : , [ ] \.
bool valid_actor_id(std::string_view id);

ActionRecord make_record(const Sequence& obs, const std::string& actor_id,
                         const Sequence& action);

// Parses the canonical record grammar. Accepts both compact serialized text
// and the canonical token-joined form (whitespace around structural marks is
// ignored). Returns nullopt if the string is not a record.
std::optional<ParsedRecord> parse_record(std::string_view text);

// Token-level record scan, used on framed contexts and memory dumps: finds
// complete bracketed records in a token stream. Returns per-record token
// spans [begin, end) alongside the parsed form.
struct RecordSpan {
  std::size_t begin;
  std::size_t end;
  ParsedRecord record;
};
std::vector<RecordSpan> scan_records(const Sequence& seq);

// Deterministic 64-bit seed mixing used everywhere a derived seed is needed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

}  // namespace normlab
