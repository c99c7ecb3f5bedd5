#include "htc/text.hpp"

#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utypes.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "htc/errors.hpp"

namespace htc::text {

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  while (i < n) {
    const unsigned char c = b[i];
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6 && i + 1 < n && (b[i + 1] >> 6) == 0x2) {
      cp = static_cast<char32_t>((c & 0x1F) << 6 | (b[i + 1] & 0x3F));
      len = 2;
    } else if ((c >> 4) == 0xE && i + 2 < n && (b[i + 1] >> 6) == 0x2 && (b[i + 2] >> 6) == 0x2) {
      cp = static_cast<char32_t>((c & 0x0F) << 12 | (b[i + 1] & 0x3F) << 6 | (b[i + 2] & 0x3F));
      len = 3;
    } else if ((c >> 3) == 0x1E && i + 3 < n && (b[i + 1] >> 6) == 0x2 && (b[i + 2] >> 6) == 0x2 &&
               (b[i + 3] >> 6) == 0x2) {
      cp = static_cast<char32_t>((c & 0x07) << 18 | (b[i + 1] & 0x3F) << 12 |
                                 (b[i + 2] & 0x3F) << 6 | (b[i + 3] & 0x3F));
      len = 4;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size() * 2);
  for (char32_t cp : cps) {
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
  return out;
}

std::size_t utf8_length(const std::string& s) { return utf8_decode(s).size(); }

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

std::string normalize_nfc(const std::string& utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const UNormalizer2* nfc = unorm2_getNFCInstance(&status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU: cannot obtain NFC normalizer");

  std::vector<UChar> u16(utf8.size() + 1);
  int32_t u16_len = 0;
  status = U_ZERO_ERROR;
  u_strFromUTF8Lenient(u16.data(), static_cast<int32_t>(u16.size()), &u16_len, utf8.c_str(),
                       static_cast<int32_t>(utf8.size()), &status);
  if (U_FAILURE(status)) return utf8;  // cleaning is total

  std::vector<UChar> norm(static_cast<std::size_t>(u16_len) * 3 + 16);
  status = U_ZERO_ERROR;
  const int32_t norm_len = unorm2_normalize(nfc, u16.data(), u16_len, norm.data(),
                                            static_cast<int32_t>(norm.size()), &status);
  if (U_FAILURE(status)) return utf8;

  std::string out(static_cast<std::size_t>(norm_len) * 4 + 4, '\0');
  int32_t out_len = 0;
  status = U_ZERO_ERROR;
  u_strToUTF8(out.data(), static_cast<int32_t>(out.size()), &out_len, norm.data(), norm_len,
              &status);
  if (U_FAILURE(status)) return utf8;
  out.resize(static_cast<std::size_t>(out_len));
  return out;
}

namespace {

bool is_space_cp(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
         c == 0x00A0 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x3000;
}

bool is_digit_cp(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= 0x09E6 && c <= 0x09EF);  // ASCII + Bangla numerals
}

// Linguistic codepoints this pipeline keeps: letters and combining signs from
// a compact range table (Latin, Greek, Cyrillic, Arabic, Devanagari,
// Bengali). Anything else counts as a non-linguistic symbol and is dropped.
bool is_kept_letter(char32_t c) {
  if ((c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z')) return true;
  if (c >= 0x00C0 && c <= 0x00FF && c != 0x00D7 && c != 0x00F7) return true;
  if (c >= 0x0100 && c <= 0x024F) return true;
  if (c >= 0x0386 && c <= 0x03FF && c != 0x0387) return true;          // Greek
  if (c >= 0x0400 && c <= 0x04FF) return true;                          // Cyrillic
  if (c >= 0x0620 && c <= 0x06FF && !(c >= 0x0660 && c <= 0x0669) &&
      !(c >= 0x06F0 && c <= 0x06F9)) {
    return true;  // Arabic letters/marks, digits excluded
  }
  if (c >= 0x0900 && c <= 0x097F && !(c >= 0x0966 && c <= 0x096F)) return true;  // Devanagari
  if (c >= 0x0980 && c <= 0x09FF) {                                     // Bengali
    if (c >= 0x09E6 && c <= 0x09EF) return false;                       // numerals
    if (c >= 0x09F2 && c <= 0x09FB) return false;                       // currency/fractions
    if (c == 0x09FD) return false;                                      // abbreviation sign
    return true;
  }
  return false;
}

// Drop <...> spans when a closing '>' exists; a stray '<' falls through to
// the symbol filter.
std::vector<char32_t> strip_markup(const std::vector<char32_t>& cps) {
  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (cps[i] == U'<') {
      std::size_t j = i + 1;
      while (j < cps.size() && cps[j] != U'>') ++j;
      if (j < cps.size()) {
        i = j;
        continue;
      }
    }
    out.push_back(cps[i]);
  }
  return out;
}

}  // namespace

std::string clean(const std::string& raw) {
  const std::string normalized = normalize_nfc(utf8_encode(strip_markup(utf8_decode(raw))));
  std::vector<char32_t> kept;
  bool pending_space = false;
  for (char32_t c : utf8_decode(normalized)) {
    if (is_space_cp(c)) {
      pending_space = true;
      continue;
    }
    if (is_digit_cp(c) || !is_kept_letter(c)) continue;
    if (pending_space && !kept.empty()) kept.push_back(U' ');
    pending_space = false;
    kept.push_back(c);
  }
  return utf8_encode(kept);
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::optional<std::vector<std::string>> filter_short(std::vector<std::string> words) {
  if (words.size() < 2) return std::nullopt;
  return words;
}

// ---------------------------------------------------------------------------
// Stopwords & stemming
// ---------------------------------------------------------------------------

StopwordList StopwordList::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("stopword file not readable: " + path);
  StopwordList list;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' || line.back() == ' ')) {
      line.pop_back();
    }
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line.empty() || line[0] == '#') continue;
    list.words_.insert(normalize_nfc(line));
  }
  return list;
}

StopwordList StopwordList::from_words(const std::vector<std::string>& words) {
  StopwordList list;
  for (const auto& w : words) list.words_.insert(normalize_nfc(w));
  return list;
}

Stemmer Stemmer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("stemmer rule file not readable: " + path);
  std::vector<Rule> rules;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string arrow = "\xE2\x87\x92";  // U+21D2
    const std::size_t arrow_pos = line.find(arrow);
    const std::size_t comma_pos = line.rfind(',');
    if (arrow_pos == std::string::npos || comma_pos == std::string::npos ||
        comma_pos < arrow_pos) {
      throw DataError("stemmer rules: malformed line " + std::to_string(line_no) + ": " + line);
    }
    Rule r;
    r.suffix = normalize_nfc(line.substr(0, arrow_pos));
    r.replacement = normalize_nfc(line.substr(arrow_pos + arrow.size(), comma_pos - arrow_pos - arrow.size()));
    try {
      r.min_stem_len = std::stoi(line.substr(comma_pos + 1));
    } catch (const std::exception&) {
      throw DataError("stemmer rules: bad min_stem_len on line " + std::to_string(line_no));
    }
    if (r.suffix.empty() || r.min_stem_len < 0) {
      throw DataError("stemmer rules: invalid rule on line " + std::to_string(line_no));
    }
    if (utf8_length(r.replacement) >= utf8_length(r.suffix)) {
      throw DataError("stemmer rules: replacement must be shorter than suffix (line " +
                      std::to_string(line_no) + "); longer replacements would break idempotence");
    }
    rules.push_back(std::move(r));
  }
  return from_rules(std::move(rules));
}

Stemmer Stemmer::from_rules(std::vector<Rule> rules) {
  Stemmer s;
  s.rules_ = std::move(rules);
  return s;
}

std::string Stemmer::stem(const std::string& word) const {
  std::string w = word;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const Rule& r : rules_) {
      if (w.size() < r.suffix.size()) continue;
      if (w.compare(w.size() - r.suffix.size(), r.suffix.size(), r.suffix) != 0) continue;
      const std::string prefix = w.substr(0, w.size() - r.suffix.size());
      if (utf8_length(prefix) < static_cast<std::size_t>(r.min_stem_len)) continue;
      w = prefix + r.replacement;  // strictly shorter, so the loop terminates
      changed = true;
      break;
    }
  }
  return w;
}

std::vector<std::string> remove_stopwords_and_stem(const std::vector<std::string>& words,
                                                   const StopwordList& stopwords,
                                                   const Stemmer& stemmer) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    if (stopwords.contains(w)) continue;
    out.push_back(stemmer.stem(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subword vocabulary
// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kReserved = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
}

Vocabulary::Vocabulary() : Vocabulary(kReserved) {}

Vocabulary::Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  if (pieces_.size() < kReserved.size()) throw DataError("vocabulary: missing reserved pieces");
  for (std::size_t i = 0; i < kReserved.size(); ++i) {
    if (pieces_[i] != kReserved[i]) {
      throw DataError("vocabulary: reserved piece " + std::to_string(i) + " must be " +
                      kReserved[i] + ", got " + pieces_[i]);
    }
  }
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!piece_to_id_.emplace(pieces_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary: duplicate piece " + pieces_[i]);
    }
    if (i >= kReserved.size()) {
      const std::string& p = pieces_[i];
      const std::string body = p.rfind("##", 0) == 0 ? p.substr(2) : p;
      max_piece_cps_ = std::max(max_piece_cps_, utf8_length(body));
    }
  }
}

int Vocabulary::id_of(const std::string& piece) const {
  auto it = piece_to_id_.find(piece);
  return it == piece_to_id_.end() ? -1 : it->second;
}

std::vector<int> Vocabulary::encode_word(const std::string& word) const {
  const std::vector<char32_t> cps = utf8_decode(word);
  std::vector<int> out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < cps.size()) {
    int matched = -1;
    std::size_t matched_len = 0;
    const std::size_t most = std::min(cps.size() - pos, max_piece_cps_);
    for (std::size_t len = most; len >= 1; --len) {
      std::string key = utf8_encode({cps.begin() + static_cast<std::ptrdiff_t>(pos),
                                     cps.begin() + static_cast<std::ptrdiff_t>(pos + len)});
      if (!first) key = "##" + key;
      const int id = id_of(key);
      if (id >= 0) {
        matched = id;
        matched_len = len;
        break;
      }
    }
    if (matched < 0) return {kUnk};  // unmatchable position: the whole word is unknown
    out.push_back(matched);
    pos += matched_len;
    first = false;
  }
  return out;
}

std::vector<int> Vocabulary::encode_words(const std::vector<std::string>& words) const {
  std::vector<int> out;
  for (const auto& w : words) {
    const auto ids = encode_word(w);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < static_cast<int>(kReserved.size()) || id >= size()) continue;
    const std::string& p = pieces_[static_cast<std::size_t>(id)];
    if (p.rfind("##", 0) == 0) {
      out += p.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  nlohmann::json j;
  j["pieces"] = pieces_;
  j["reserved"] = {{"pad", kPad}, {"unk", kUnk}, {"cls", kCls}, {"sep", kSep}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocabulary " + path + ": " + e.what());
  }
  if (!j.contains("pieces")) throw DataError("vocabulary " + path + ": missing pieces");
  return Vocabulary(j["pieces"].get<std::vector<std::string>>());
}

Vocabulary train_tokenizer(const std::vector<std::string>& corpus, int vocab_size) {
  std::map<std::string, long long> word_freq;
  for (const auto& line : corpus) {
    for (const auto& w : split_words(line)) ++word_freq[w];
  }
  if (word_freq.empty()) throw DataError("train_tokenizer: empty corpus");

  // Symbol sequences per distinct word: first codepoint bare, the rest with
  // the "##" continuation prefix.
  std::vector<std::vector<std::string>> seqs;
  std::vector<long long> freqs;
  std::map<std::string, int> base;  // ordered: lexicographic base inventory
  for (const auto& [word, freq] : word_freq) {
    const auto cps = utf8_decode(word);
    std::vector<std::string> syms;
    syms.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string s = utf8_encode({cps[i]});
      if (i > 0) s = "##" + s;
      base.emplace(s, 0);
      syms.push_back(std::move(s));
    }
    seqs.push_back(std::move(syms));
    freqs.push_back(freq);
  }

  const int reserved = static_cast<int>(kReserved.size());
  const int base_n = static_cast<int>(base.size());
  if (vocab_size <= reserved + base_n) {
    throw DataError("train_tokenizer: vocab_size " + std::to_string(vocab_size) +
                    " does not exceed reserved+base inventory " +
                    std::to_string(reserved + base_n));
  }

  std::vector<std::string> pieces = kReserved;
  for (const auto& [sym, _] : base) pieces.push_back(sym);

  while (static_cast<int>(pieces.size()) < vocab_size) {
    // Ordered pair counting: equal counts resolve to the lexicographically
    // smallest pair, making training deterministic.
    std::map<std::pair<std::string, std::string>, long long> pair_count;
    for (std::size_t w = 0; w < seqs.size(); ++w) {
      const auto& syms = seqs[w];
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        pair_count[{syms[i], syms[i + 1]}] += freqs[w];
      }
    }
    if (pair_count.empty()) break;
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const std::string& a = best->first.first;
    const std::string& b = best->first.second;
    const std::string merged =
        a + (b.rfind("##", 0) == 0 ? b.substr(2) : b);
    for (std::size_t w = 0; w < seqs.size(); ++w) {
      auto& syms = seqs[w];
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
    bool already = false;
    for (const auto& p : pieces) {
      if (p == merged) {
        already = true;
        break;
      }
    }
    if (!already) pieces.push_back(merged);
  }
  return Vocabulary(std::move(pieces));
}

// ---------------------------------------------------------------------------
// Fixed-length encoding
// ---------------------------------------------------------------------------

EncodedSequence encode_and_pad(const std::vector<std::string>& words, const Vocabulary& vocab,
                               int t_max, bool add_specials) {
  if (t_max < (add_specials ? 2 : 1)) {
    throw std::invalid_argument("encode_and_pad: t_max too small: " + std::to_string(t_max));
  }
  std::vector<int> pieces = vocab.encode_words(words);
  std::vector<int> seq;
  if (add_specials) {
    seq.reserve(pieces.size() + 2);
    seq.push_back(Vocabulary::kCls);
    seq.insert(seq.end(), pieces.begin(), pieces.end());
    seq.push_back(Vocabulary::kSep);
  } else {
    seq = std::move(pieces);
  }
  EncodedSequence enc;
  enc.original_length = static_cast<int>(seq.size());
  if (static_cast<int>(seq.size()) > t_max) {
    if (add_specials) {
      // Keep the leading pieces and the trailing [SEP], all inside t_max.
      seq.resize(static_cast<std::size_t>(t_max));
      seq.back() = Vocabulary::kSep;
    } else {
      seq.resize(static_cast<std::size_t>(t_max));
    }
  }
  enc.ids.assign(static_cast<std::size_t>(t_max), Vocabulary::kPad);
  enc.mask.assign(static_cast<std::size_t>(t_max), 0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    enc.ids[i] = seq[i];
    enc.mask[i] = 1;
  }
  return enc;
}

EncodedSequence encode_and_pad(const std::string& text, const Vocabulary& vocab, int t_max,
                               bool add_specials) {
  return encode_and_pad(split_words(text), vocab, t_max, add_specials);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::optional<std::vector<std::string>> Pipeline::preprocess(const std::string& raw) const {
  auto words = filter_short(split_words(clean(raw)));
  if (!words) return std::nullopt;
  return remove_stopwords_and_stem(*words, stopwords, stemmer);
}

}  // namespace htc::text
