#pragma once

/**
 * Object-hallucination metrics over caption corpora and yes/no probes.
 *
 * CHAIRi = hallucinated objects / generated objects
 * CHAIRs = captions with a hallucinated object / captions
 * Cover  = correctly mentioned annotated objects / annotated objects
 *
 * Objects are found with a longest-match-first scan over lexicon surface
 * forms. Cover is a micro-average over captions.
 */

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gdec/error.hpp"
#include "gdec/trace.hpp"

namespace gdec {

struct WordToken {
  std::string text;  // lowercase
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Lowercased alphanumeric runs with their byte spans in the input.
inline std::vector<WordToken> word_tokens(std::string_view text) {
  std::vector<WordToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    WordToken w;
    w.begin = i;
    while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i])))
      w.text += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++])));
    w.end = i;
    out.push_back(std::move(w));
  }
  return out;
}

inline std::string normalize_form(std::string_view form) {
  std::string out;
  for (const auto& w : word_tokens(form)) {
    if (!out.empty()) out += ' ';
    out += w.text;
  }
  return out;
}

class Lexicon {
 public:
  Lexicon() = default;

  void add_category(const std::string& category) {
    categories_.insert(category);
    add_form(category, category);
  }

  void add_form(const std::string& surface, const std::string& category) {
    const auto form = normalize_form(surface);
    if (form.empty()) throw DataError("empty surface form for category '" + category + "'");
    if (!categories_.count(category)) add_category(category);
    auto [it, inserted] = forms_.emplace(form, category);
    if (!inserted && it->second != category)
      throw DataError("surface form '" + form + "' maps to both '" + it->second + "' and '" + category + "'");
    max_words_ = std::max(max_words_, static_cast<std::size_t>(std::count(form.begin(), form.end(), ' ') + 1));
  }

  const std::set<std::string>& categories() const { return categories_; }
  bool has_category(const std::string& c) const { return categories_.count(c) != 0; }
  std::size_t max_words() const { return max_words_; }

  const std::string* lookup(const std::string& form) const {
    auto it = forms_.find(form);
    return it == forms_.end() ? nullptr : &it->second;
  }

 private:
  std::set<std::string> categories_;
  std::unordered_map<std::string, std::string> forms_;
  std::size_t max_words_ = 1;
};

// {category: [surface forms]}
inline Lexicon lexicon_from_json(const json& j) {
  if (!j.is_object()) throw DataError("lexicon must be an object of category -> [surface forms]");
  Lexicon lex;
  for (auto it = j.begin(); it != j.end(); ++it) {
    lex.add_category(it.key());
    if (!it.value().is_array()) throw DataError("lexicon entry '" + it.key() + "' is not an array");
    for (const auto& f : it.value()) lex.add_form(f.get<std::string>(), it.key());
  }
  return lex;
}

struct ObjectMatch {
  std::string surface;
  std::string category;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ObjectMatch&) const = default;
};

namespace detail {

inline const std::string* lookup_folded(const Lexicon& lex, const std::string& form) {
  if (auto* c = lex.lookup(form)) return c;
  auto ends_with = [&](std::string_view suf) {
    return form.size() > suf.size() && form.compare(form.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("es"))
    if (auto* c = lex.lookup(form.substr(0, form.size() - 2))) return c;
  if (ends_with("s"))
    if (auto* c = lex.lookup(form.substr(0, form.size() - 1))) return c;
  return nullptr;
}

}  // namespace detail

inline std::vector<ObjectMatch> extract_objects(std::string_view text, const Lexicon& lex) {
  const auto words = word_tokens(text);
  std::vector<ObjectMatch> out;
  std::size_t i = 0;
  while (i < words.size()) {
    bool matched = false;
    for (std::size_t len = std::min(lex.max_words(), words.size() - i); len >= 1; --len) {
      std::string form = words[i].text;
      for (std::size_t k = 1; k < len; ++k) form += ' ' + words[i + k].text;
      if (const auto* cat = detail::lookup_folded(lex, form)) {
        const auto b = words[i].begin, e = words[i + len - 1].end;
        out.push_back({std::string(text.substr(b, e - b)), *cat, b, e});
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

using AnnotationSet = std::map<std::string, std::set<std::string>>;

inline std::string image_key(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// {image_id: [categories]}; every category must exist in the lexicon.
inline AnnotationSet annotations_from_json(const json& j, const Lexicon& lex) {
  if (!j.is_object()) throw DataError("annotations must be an object of image_id -> [categories]");
  AnnotationSet out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto& set = out[it.key()];
    for (const auto& c : it.value()) {
      const auto cat = c.get<std::string>();
      if (!lex.has_category(cat))
        throw DataError("image " + it.key() + ": category '" + cat + "' not in lexicon");
      set.insert(cat);
    }
  }
  return out;
}

struct CaptionRecord {
  std::string image_id;
  std::string text;
  std::vector<ObjectMatch> extracted;
};

enum class CountMode { unique, mentions };

inline std::string_view to_string(CountMode m) { return m == CountMode::unique ? "unique" : "mentions"; }

inline CountMode parse_count_mode(std::string_view s) {
  if (s == "unique") return CountMode::unique;
  if (s == "mentions") return CountMode::mentions;
  throw ConfigError("count mode must be 'unique' or 'mentions'");
}

struct ChairReport {
  double chair_i = 0.0;
  double chair_s = 0.0;
  double cover = 0.0;
  std::size_t hallucinated_objects = 0;
  std::size_t generated_objects = 0;
  std::size_t hallucinated_captions = 0;
  std::size_t captions = 0;
  std::size_t covered_objects = 0;
  std::size_t annotated_objects = 0;
  CountMode mode = CountMode::unique;
};

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline ChairReport chair(const std::vector<CaptionRecord>& captions, const AnnotationSet& annotations,
                         CountMode mode = CountMode::unique) {
  ChairReport r;
  r.mode = mode;
  for (const auto& c : captions) {
    auto it = annotations.find(c.image_id);
    if (it == annotations.end()) throw DataError("missing annotation for image id " + c.image_id);
    const auto& truth = it->second;

    std::vector<std::string> cats;
    for (const auto& m : c.extracted) cats.push_back(m.category);
    if (mode == CountMode::unique) {
      std::sort(cats.begin(), cats.end());
      cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    }
    std::size_t bad = 0;
    std::set<std::string> correct;
    for (const auto& cat : cats) {
      if (truth.count(cat)) correct.insert(cat);
      else ++bad;
    }
    r.generated_objects += cats.size();
    r.hallucinated_objects += bad;
    r.hallucinated_captions += bad > 0 ? 1 : 0;
    r.captions += 1;
    r.covered_objects += correct.size();
    r.annotated_objects += truth.size();
  }
  r.chair_i = ratio(r.hallucinated_objects, r.generated_objects);
  r.chair_s = ratio(r.hallucinated_captions, r.captions);
  r.cover = ratio(r.covered_objects, r.annotated_objects);
  return r;
}

inline json to_json(const ChairReport& r) {
  return json{{"kind", "chair_report"},
              {"chair_i", r.chair_i},
              {"chair_s", r.chair_s},
              {"cover", r.cover},
              {"counts",
               {{"hallucinated_objects", r.hallucinated_objects},
                {"generated_objects", r.generated_objects},
                {"hallucinated_captions", r.hallucinated_captions},
                {"captions", r.captions},
                {"covered_objects", r.covered_objects},
                {"annotated_objects", r.annotated_objects}}},
              {"count_mode", std::string(to_string(r.mode))},
              {"cover_aggregation", "micro"}};
}

enum class YesNo { yes, no, unparsed };

// First alphabetic word, case-insensitive.
inline YesNo parse_yes_no(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  std::string w;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i])))
    w += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++])));
  if (w == "yes") return YesNo::yes;
  if (w == "no") return YesNo::no;
  return YesNo::unparsed;
}

struct PopeAnswer {
  std::string question_id;
  std::string split;
  bool gold_yes = false;
  std::string text;
};

struct PopeStats {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t parsed = 0;
  std::size_t said_yes = 0;
  std::size_t true_positive = 0;
  std::size_t gold_yes = 0;
  std::size_t unparsed = 0;

  double accuracy() const { return ratio(correct, total); }
  double yes_rate() const { return ratio(said_yes, parsed); }
  double precision() const { return ratio(true_positive, said_yes); }
  double recall() const { return ratio(true_positive, gold_yes); }
};

struct PopeReport {
  PopeStats all;
  std::map<std::string, PopeStats> by_split;

  double accuracy() const { return all.accuracy(); }
  double yes_rate() const { return all.yes_rate(); }
};

inline PopeReport pope_score(const std::vector<PopeAnswer>& answers) {
  PopeReport rep;
  for (const auto& a : answers) {
    const YesNo said = parse_yes_no(a.text);
    for (PopeStats* s : {&rep.all, &rep.by_split[a.split]}) {
      s->total += 1;
      s->gold_yes += a.gold_yes ? 1 : 0;
      if (said == YesNo::unparsed) {
        s->unparsed += 1;
        continue;
      }
      s->parsed += 1;
      const bool yes = said == YesNo::yes;
      s->said_yes += yes ? 1 : 0;
      s->correct += yes == a.gold_yes ? 1 : 0;
      s->true_positive += yes && a.gold_yes ? 1 : 0;
    }
  }
  return rep;
}

inline json to_json(const PopeStats& s) {
  return json{{"accuracy", s.accuracy()}, {"yes_rate", s.yes_rate()}, {"precision", s.precision()},
              {"recall", s.recall()},     {"total", s.total},          {"parsed", s.parsed},
              {"unparsed", s.unparsed},   {"said_yes", s.said_yes},    {"gold_yes", s.gold_yes}};
}

inline json to_json(const PopeReport& r) {
  json splits = json::object();
  for (const auto& [k, v] : r.by_split) splits[k] = to_json(v);
  json out{{"kind", "pope_report"}};
  const json all = to_json(r.all);
  for (auto it = all.begin(); it != all.end(); ++it) out[it.key()] = it.value();
  out["splits"] = splits;
  out["parse_rule"] = "first_alphabetic_word";
  out["unparsed_policy"] = "incorrect; excluded from yes_rate";
  return out;
}

// Fractions of items by (base, treated) correctness. "Correct" means the
// item carries no hallucination.
struct RunComparison {
  double both_correct = 0.0;
  double base_correct_only = 0.0;
  double treated_correct_only = 0.0;
  double both_incorrect = 0.0;
  std::size_t n = 0;
};

// Flags are true when the item is hallucinated.
inline RunComparison compare_runs(const std::map<std::string, bool>& base, const std::map<std::string, bool>& treated) {
  if (base.size() != treated.size()) throw DataError("compare_runs: key sets differ in size");
  if (base.empty()) throw DegenerateInput("compare_runs: no items");
  std::size_t cc = 0, cb = 0, bc = 0, bb = 0;
  for (const auto& [key, base_bad] : base) {
    auto it = treated.find(key);
    if (it == treated.end()) throw DataError("compare_runs: key '" + key + "' missing from treated run");
    const bool treated_bad = it->second;
    if (!base_bad && !treated_bad) ++cc;
    else if (!base_bad) ++cb;
    else if (!treated_bad) ++bc;
    else ++bb;
  }
  const double n = static_cast<double>(base.size());
  RunComparison r;
  r.n = base.size();
  r.both_correct = static_cast<double>(cc) / n;
  r.base_correct_only = static_cast<double>(cb) / n;
  r.treated_correct_only = static_cast<double>(bc) / n;
  r.both_incorrect = static_cast<double>(bb) / n;
  return r;
}

}  // namespace gdec
