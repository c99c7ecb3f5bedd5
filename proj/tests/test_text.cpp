#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "htc/errors.hpp"
#include "htc/rng.hpp"
#include "htc/text.hpp"

using namespace htc;
using namespace htc::text;

namespace {
const std::string kDataDir = HTC_DATA_DIR;
}

TEST_CASE("clean strips digits, symbols, and markup") {
  CHECK(clean("abc123!!") == "abc");
  CHECK(clean("hello world") == "hello world");
  CHECK(clean("12345 !!! ??? $$$") == "");
  CHECK(clean("১২৩৪") == "");  // Bangla numerals
  CHECK(clean("<b>shiro</b>nam") == "shironam");
  CHECK(clean("রাজনীতি, নির্বাচন-২০২৪!") == "রাজনীতি নির্বাচন");
  CHECK(clean("   a   b\t\nc  ") == "a b c");
}

TEST_CASE("clean is total and idempotent on random garbage") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<char32_t> cps;
    const int len = static_cast<int>(rng.uniform_int(0, 60));
    for (int i = 0; i < len; ++i) {
      switch (rng.uniform_int(0, 5)) {
        case 0: cps.push_back(static_cast<char32_t>(rng.uniform_int(0x21, 0x7E))); break;
        case 1: cps.push_back(static_cast<char32_t>(rng.uniform_int(0x0980, 0x09FF))); break;
        case 2: cps.push_back(U' '); break;
        case 3: cps.push_back(static_cast<char32_t>(rng.uniform_int(0x2000, 0x206F))); break;
        case 4: cps.push_back(static_cast<char32_t>(rng.uniform_int(0x1F300, 0x1F64F))); break;
        default: cps.push_back(static_cast<char32_t>(rng.uniform_int(0x30, 0x39))); break;
      }
    }
    const std::string once = clean(utf8_encode(cps));
    CHECK(clean(once) == once);
  }
}

TEST_CASE("filter_short rejects under two words") {
  CHECK(!filter_short({"a"}).has_value());
  CHECK(filter_short({"a", "b"}).has_value());
  CHECK(!filter_short({}).has_value());
}

TEST_CASE("stopword removal and stemming composition") {
  StopwordList stops = StopwordList::from_words({"এবং", "ও"});
  Stemmer identity;  // zero rules

  CHECK(remove_stopwords_and_stem({"এবং", "ও"}, stops, identity).empty());

  StopwordList empty_stops;
  std::vector<std::string> words = {"ঢাকা", "শহর"};
  CHECK(remove_stopwords_and_stem(words, empty_stops, identity) == words);
}

TEST_CASE("shipped stemmer rules match a hand-applied table of fixtures") {
  const Stemmer stemmer = Stemmer::load(kDataDir + "/stemmer_bn.rules");
  CHECK(stemmer.rule_count() > 10);

  // Expected stems derived by hand from data/stemmer_bn.rules (first match,
  // fixpoint, min_stem_len in codepoints).
  const std::vector<std::pair<std::string, std::string>> fixtures = {
      {"ছেলেগুলো", "ছেলে"},
      {"মানুষের", "মানুষ"},
      {"বইটি", "বই"},
      {"শিক্ষকদের", "শিক্ষক"},
      {"বাড়িতে", "বাড়ি"},
      {"ঢাকার", "ঢাকা"},
      {"কলমগুলির", "কলম"},
      {"আমাকে", "আমা"},
      {"খেলোয়াড়রা", "খেলোয়াড়"},
      {"দলগুলোতে", "দল"},
  };
  for (const auto& [word, want] : fixtures) {
    CAPTURE(word);
    CHECK(stemmer.stem(normalize_nfc(word)) == normalize_nfc(want));
  }
}

TEST_CASE("stemming is idempotent") {
  const Stemmer stemmer = Stemmer::load(kDataDir + "/stemmer_bn.rules");
  const std::vector<std::string> words = {"ছেলেগুলো", "মানুষের",   "বইটি",  "শিক্ষকদের",
                                          "বাড়িতে",   "খেলোয়াড়রা", "সরকারে", "নির্বাচনে",
                                          "ক",        "কে",        "রা"};
  for (const auto& w : words) {
    const std::string once = stemmer.stem(normalize_nfc(w));
    CHECK(stemmer.stem(once) == once);
  }
}

TEST_CASE("stemmer rejects non-shrinking rules") {
  const std::string bad = kDataDir + "/../build/bad_rules.tmp";
  {
    std::ofstream out(bad);
    out << "াা⇒ াাা,1\n";
  }
  CHECK_THROWS_AS(Stemmer::load(bad), DataError);
}

TEST_CASE("stopword file loads") {
  StopwordList stops = StopwordList::load(kDataDir + "/stopwords_bn.txt");
  CHECK(stops.size() > 50);
  CHECK(stops.contains("এবং"));
  CHECK(!stops.contains("ঢাকা"));
}

TEST_CASE("tokenizer training: degenerate corpus and determinism") {
  // One repeated word with ample room becomes a single piece.
  std::vector<std::string> corpus(5, "ঢাকা");
  Vocabulary v = train_tokenizer(corpus, 64);
  const auto ids = v.encode_word("ঢাকা");
  REQUIRE(ids.size() == 1);
  CHECK(v.piece(ids[0]) == "ঢাকা");

  Vocabulary v2 = train_tokenizer(corpus, 64);
  CHECK(v.pieces() == v2.pieces());

  CHECK_THROWS_AS(train_tokenizer({}, 64), DataError);
  CHECK_THROWS_AS(train_tokenizer({"   "}, 64), DataError);
  CHECK_THROWS_AS(train_tokenizer(corpus, 4), DataError);  // no room beyond reserved+base
}

TEST_CASE("tokenizer covers its training corpus with zero UNKs") {
  const std::vector<std::string> corpus = {
      "নির্বাচনে জয়ী হলেন প্রধানমন্ত্রী", "ক্রিকেট দলের দুর্দান্ত জয়",
      "ঈদের নামাজে মুসল্লিদের ঢল",      "শহরে নতুন হাসপাতাল উদ্বোধন",
      "দেশের অর্থনীতি নিয়ে আলোচনা",    "খেলায় দারুণ উত্তেজনা"};
  Vocabulary v = train_tokenizer(corpus, 160);
  std::size_t unks = 0, total = 0;
  for (const auto& line : corpus) {
    for (int id : v.encode_words(split_words(line))) {
      ++total;
      if (id == Vocabulary::kUnk) ++unks;
    }
  }
  CHECK(total > 0);
  CHECK(unks == 0);

  // decode(encode(x)) reproduces in-vocabulary text.
  for (const auto& line : corpus) {
    CHECK(v.decode(v.encode_words(split_words(line))) == normalize_nfc(line));
  }

  // Unseen script at inference maps to UNK, not a crash.
  const auto unknown = v.encode_word("字");
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0] == Vocabulary::kUnk);
}

TEST_CASE("encode_and_pad: padding, truncation, masks") {
  Vocabulary v = train_tokenizer({"অ আ ই"}, 16);

  SUBCASE("post-padding with zeros, mask marks real tokens") {
    EncodedSequence e = encode_and_pad({"অ", "আ", "ই"}, v, 5, /*add_specials=*/false);
    REQUIRE(e.ids.size() == 5);
    CHECK(e.ids[0] != 0);
    CHECK(e.ids[1] != 0);
    CHECK(e.ids[2] != 0);
    CHECK(e.ids[3] == Vocabulary::kPad);
    CHECK(e.ids[4] == Vocabulary::kPad);
    CHECK(e.mask == std::vector<int>{1, 1, 1, 0, 0});
    CHECK(e.original_length == 3);
  }

  SUBCASE("over-long input keeps the first t_max tokens") {
    std::vector<std::string> many(40, "অ");
    EncodedSequence e = encode_and_pad(many, v, 7, false);
    CHECK(e.ids.size() == 7);
    CHECK(e.original_length == 40);
    for (int m : e.mask) CHECK(m == 1);
  }

  SUBCASE("empty input is all PAD, all-zero mask") {
    EncodedSequence e = encode_and_pad(std::vector<std::string>{}, v, 4, false);
    CHECK(e.ids == std::vector<int>{0, 0, 0, 0});
    CHECK(e.mask == std::vector<int>{0, 0, 0, 0});
  }

  SUBCASE("specials wrap the sequence and count inside t_max") {
    EncodedSequence e = encode_and_pad({"অ"}, v, 5, true);
    CHECK(e.ids[0] == Vocabulary::kCls);
    CHECK(e.ids[2] == Vocabulary::kSep);
    CHECK(e.mask == std::vector<int>{1, 1, 1, 0, 0});

    std::vector<std::string> many(40, "অ");
    EncodedSequence t = encode_and_pad(many, v, 6, true);
    CHECK(t.ids[0] == Vocabulary::kCls);
    CHECK(t.ids[5] == Vocabulary::kSep);
    for (int m : t.mask) CHECK(m == 1);
  }
}

TEST_CASE("encoded sequences: PAD is zero wherever mask is zero") {
  Rng rng(7);
  Vocabulary v = train_tokenizer({"ক খ গ ঘ ঙ কখ গঘ কখগ"}, 32);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> words;
    const int n = static_cast<int>(rng.uniform_int(0, 12));
    for (int i = 0; i < n; ++i) {
      words.push_back(std::string(1, 0));
      const char* pool[] = {"ক", "খ", "গ", "ঘ", "কখ", "কখগ"};
      words.back() = pool[rng.uniform_int(0, 5)];
    }
    EncodedSequence e = encode_and_pad(words, v, 8, trial % 2 == 0);
    REQUIRE(e.ids.size() == 8);
    REQUIRE(e.mask.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      if (e.mask[i] == 0) CHECK(e.ids[i] == Vocabulary::kPad);
      CHECK(e.ids[i] * e.mask[i] == e.ids[i]);
    }
  }
}

TEST_CASE("vocabulary JSON round trip") {
  Vocabulary v = train_tokenizer({"অ আ ই অআ"}, 24);
  const std::string path = std::string(HTC_BUILD_DIR) + "/vocab_roundtrip.json";
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.pieces() == v.pieces());
  CHECK(loaded.encode_word("অআ") == v.encode_word("অআ"));
}

TEST_CASE("pipeline determinism and rejection") {
  Pipeline p;
  p.stopwords = StopwordList::load(kDataDir + "/stopwords_bn.txt");
  p.stemmer = Stemmer::load(kDataDir + "/stemmer_bn.rules");

  const std::string raw = "নির্বাচনে ২০২৪ জয়ী হলেন!  <b>প্রধানমন্ত্রী</b>";
  auto a = p.preprocess(raw);
  auto b = p.preprocess(raw);
  REQUIRE(a.has_value());
  CHECK(*a == *b);

  CHECK(!p.preprocess("ঢাকা").has_value());   // one word -> reject
  CHECK(!p.preprocess("১২৩!!!").has_value());  // cleans to empty -> reject
}
