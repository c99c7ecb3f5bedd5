#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace htc::text {

// UTF-8 codepoint helpers ------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<char32_t>& cps);
std::size_t utf8_length(const std::string& s);

// Cleaning ---------------------------------------------------------------------

/// NFC normalization (ICU). Total: invalid byte sequences pass through the
/// replacement character.
std::string normalize_nfc(const std::string& utf8);

/// Cleaning chain: strip <...> markup spans, NFC-normalize, drop digits
/// (ASCII and Bangla U+09E6..U+09EF), drop control/format characters and
/// non-linguistic symbols (kept: alphabetic codepoints and combining signs
/// from a compact range table covering Latin, Greek, Cyrillic, Arabic,
/// Devanagari and Bengali), collapse whitespace. Total and idempotent.
std::string clean(const std::string& raw);

std::vector<std::string> split_words(const std::string& s);

/// Sentences shorter than two words carry no signal: nullopt = reject.
std::optional<std::vector<std::string>> filter_short(std::vector<std::string> words);

// Stopwords & stemming -----------------------------------------------------------

class StopwordList {
 public:
  StopwordList() = default;
  /// UTF-8, one surface form per line; blank lines and '#' comments skipped.
  static StopwordList load(const std::string& path);
  static StopwordList from_words(const std::vector<std::string>& words);
  bool contains(const std::string& w) const { return words_.count(w) > 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

/// Ordered suffix-strip rules, applied to fixpoint so stemming is idempotent.
/// Rule file lines: "suffix⇒replacement,min_stem_len" (replacement may be
/// empty and must be shorter than the suffix; min_stem_len counts codepoints
/// that must remain before the stripped suffix).
class Stemmer {
 public:
  struct Rule {
    std::string suffix;
    std::string replacement;
    int min_stem_len = 1;
  };

  Stemmer() = default;
  static Stemmer load(const std::string& path);
  static Stemmer from_rules(std::vector<Rule> rules);
  std::string stem(const std::string& word) const;
  std::size_t rule_count() const { return rules_.size(); }

 private:
  std::vector<Rule> rules_;
};

/// Stopwords dropped first, stemming second; order preserved.
std::vector<std::string> remove_stopwords_and_stem(const std::vector<std::string>& words,
                                                   const StopwordList& stopwords,
                                                   const Stemmer& stemmer);

// Subword vocabulary --------------------------------------------------------------

/// Learned subword inventory. Continuation pieces carry a "##" prefix.
/// Reserved ids: [PAD]=0 (padding must encode as zero), [UNK]=1, [CLS]=2,
/// [SEP]=3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> pieces);

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  int id_of(const std::string& piece) const;  // -1 when absent
  const std::string& piece(int id) const { return pieces_[static_cast<std::size_t>(id)]; }

  /// Greedy longest-match subword split of one word; the whole word becomes
  /// [UNK] when some position cannot be matched.
  std::vector<int> encode_word(const std::string& word) const;
  /// encode_word over a word sequence, concatenated.
  std::vector<int> encode_words(const std::vector<std::string>& words) const;
  /// Inverse of encode for in-vocabulary text: pieces joined, "##" removed,
  /// spaces between word starts; reserved ids skipped.
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> piece_to_id_;
  std::size_t max_piece_cps_ = 1;
};

/// Greedy frequency-merge subword training (WordPiece-style inventory,
/// BPE-style merges). Deterministic: ties broken by lexicographically
/// smallest pair. Every character of the corpus is representable, so
/// encoding the training corpus has zero UNKs.
Vocabulary train_tokenizer(const std::vector<std::string>& corpus, int vocab_size);

// Fixed-length encoding ------------------------------------------------------------

struct EncodedSequence {
  std::vector<int> ids;    // length T
  std::vector<int> mask;   // 0/1, length T
  int original_length = 0;  // real token count (with specials) before pad/trunc
};

/// Subword-encode, optionally wrap in [CLS]...[SEP] (counted inside t_max;
/// over-long input keeps the first pieces and the trailing [SEP]), post-pad
/// with [PAD]=0 to exactly t_max.
EncodedSequence encode_and_pad(const std::vector<std::string>& words, const Vocabulary& vocab,
                               int t_max, bool add_specials = true);
EncodedSequence encode_and_pad(const std::string& text, const Vocabulary& vocab, int t_max,
                               bool add_specials = true);

// Full §-pipeline convenience -------------------------------------------------------

struct Pipeline {
  StopwordList stopwords;
  Stemmer stemmer;

  /// clean -> split -> min-length filter -> stopword removal -> stemming.
  /// nullopt = rejected (under two words after cleaning).
  std::optional<std::vector<std::string>> preprocess(const std::string& raw) const;
};

}  // namespace htc::text
