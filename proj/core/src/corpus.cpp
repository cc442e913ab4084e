#include "memcirc/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/random.hpp"
#include "wordlists.hpp"

namespace memcirc {

namespace {

constexpr Domain kDomains[] = {Domain::wiki, Domain::code, Domain::email, Domain::web};

std::vector<std::string> split_words(std::string_view phrase) {
  std::vector<std::string> out;
  std::istringstream in{std::string(phrase)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<std::string> vocabulary_words() {
  std::vector<std::string> all;
  auto add_list = [&](const words::List& list) {
    for (std::string_view p : list) {
      for (auto& w : split_words(p)) all.push_back(std::move(w));
    }
  };
  add_list(words::kCommon);
  for (int i = 0; i < 100; ++i) all.push_back(std::to_string(i));
  for (int y = 1900; y < 2020; ++y) all.push_back(std::to_string(y));
  for (const auto* list :
       {&words::kFirstNames, &words::kLastNames, &words::kNationalities,
        &words::kNationalityPhrases, &words::kProfessions, &words::kProfessionPhrases,
        &words::kCities, &words::kMonths, &words::kClubs, &words::kAwards, &words::kEvents,
        &words::kSubjects, &words::kBioVerbs, &words::kBioNouns, &words::kBioAdjectives,
        &words::kCodeKeywords, &words::kCodeIdents, &words::kCodeFuncs, &words::kCodeTypes,
        &words::kEmailWords, &words::kWebWords}) {
    add_list(*list);
  }
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (auto& w : all) {
    if (seen.insert(w).second) unique.push_back(std::move(w));
  }
  return unique;
}

// ------------------------------------------------------------ generation

// Token writer whose random decisions are logged so a document can be
// replayed up to any decision and then continued differently.
class Writer {
 public:
  struct Draw {
    int value;
    int n;
    std::size_t position;  // tokens emitted before the draw
    bool structural;
  };

  Writer(const Vocabulary& vocab, Rng& rng, std::span<const int> prefix)
      : vocab_(vocab), rng_(rng), prefix_(prefix) {}

  bool full() const { return tokens_.size() >= kSampleLength; }

  int draw(int n, bool structural = false) {
    int v;
    if (log_.size() < prefix_.size()) {
      v = prefix_[log_.size()];
    } else {
      v = static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(n)));
    }
    log_.push_back({v, n, tokens_.size(), structural});
    return v;
  }

  bool coin(double p) { return draw(100) < static_cast<int>(p * 100.0); }
  int number(int lo, int hi) { return lo + draw(hi - lo + 1); }

  void emit(std::string_view phrase) {
    for (const auto& w : split_words(phrase)) tokens_.push_back(vocab_.id(w));
  }
  void emit_number(int value) { emit(std::to_string(value)); }
  std::string_view pick(const words::List& list, bool structural = false) {
    return list[static_cast<std::size_t>(draw(static_cast<int>(list.size()), structural))];
  }
  void emit_pick(const words::List& list, bool structural = false) { emit(pick(list, structural)); }

  std::vector<int> take_tokens() {
    tokens_.resize(kSampleLength);
    return std::move(tokens_);
  }
  const std::vector<Draw>& log() const { return log_; }

 private:
  const Vocabulary& vocab_;
  Rng& rng_;
  std::span<const int> prefix_;
  std::vector<int> tokens_;
  std::vector<Draw> log_;
};

// ---- wiki: templated biographies

void wiki_nationality(Writer& w) {
  if (w.coin(0.15)) {
    w.emit_pick(words::kNationalityPhrases);
  } else {
    w.emit_pick(words::kNationalities);
  }
}

void wiki_profession(Writer& w) {
  if (w.coin(0.25)) {
    w.emit_pick(words::kProfessionPhrases);
  } else {
    w.emit_pick(words::kProfessions);
  }
}

void wiki_year(Writer& w) { w.emit_number(w.number(1900, 2019)); }

void wiki_document(Writer& w) {
  const bool female = w.coin(0.5);
  const std::string_view he = female ? "she" : "he";
  const std::string_view his = female ? "her" : "his";
  const std::string_view him = female ? "her" : "him";

  w.emit_pick(words::kFirstNames);
  w.emit_pick(words::kLastNames);
  w.emit("( born");
  w.emit_number(w.number(1, 28));
  w.emit_pick(words::kMonths);
  wiki_year(w);
  w.emit(") is a");
  wiki_nationality(w);
  wiki_profession(w);
  switch (w.draw(4, true)) {
    case 0:
      w.emit(".");
      break;
    case 1:
      w.emit("who");
      switch (w.draw(4, true)) {
        case 0: w.emit("played for"); w.emit_pick(words::kCities); w.emit_pick(words::kClubs); break;
        case 1: w.emit("won the"); w.emit_pick(words::kAwards); w.emit("in"); wiki_year(w); break;
        case 2: w.emit("was born in"); w.emit_pick(words::kCities); break;
        default: w.emit("competed at the"); wiki_year(w); w.emit_pick(words::kEvents); break;
      }
      w.emit(".");
      break;
    case 2:
      w.emit("and");
      wiki_profession(w);
      w.emit(".");
      break;
    default:
      w.emit(", best known for");
      w.emit(his);
      w.emit_pick(words::kBioAdjectives);
      w.emit_pick(words::kBioNouns);
      w.emit(".");
      break;
  }

  while (!w.full()) {
    switch (w.draw(10, true)) {
      case 0:
        w.emit(he); w.emit("played for"); w.emit_pick(words::kCities); w.emit_pick(words::kClubs);
        w.emit("from"); wiki_year(w); w.emit("to"); wiki_year(w); w.emit(".");
        break;
      case 1:
        w.emit("in"); wiki_year(w); w.emit(","); w.emit(he); w.emit("moved to");
        w.emit_pick(words::kCities); w.emit("where"); w.emit(he); w.emit("worked as a");
        wiki_profession(w); w.emit(".");
        break;
      case 2:
        w.emit(he); w.emit("is married to"); w.emit_pick(words::kFirstNames);
        w.emit_pick(words::kLastNames); w.emit("and has"); w.emit_number(w.number(2, 5));
        w.emit("children .");
        break;
      case 3:
        w.emit(he); w.emit("won the"); w.emit_pick(words::kAwards); w.emit("at the");
        wiki_year(w); w.emit_pick(words::kEvents); w.emit(".");
        break;
      case 4:
        w.emit(he); w.emit("studied"); w.emit_pick(words::kSubjects);
        w.emit("at the university of"); w.emit_pick(words::kCities); w.emit(".");
        break;
      case 5:
        w.emit(he); w.emit("died in"); w.emit_pick(words::kCities); w.emit("on");
        w.emit_number(w.number(1, 28)); w.emit_pick(words::kMonths); wiki_year(w); w.emit(".");
        break;
      case 6:
        w.emit("the"); w.emit_pick(words::kBioAdjectives); w.emit_pick(words::kBioNouns);
        w.emit("in"); w.emit_pick(words::kCities); w.emit("was named after"); w.emit(him);
        w.emit(".");
        break;
      case 7:
        w.emit(his); w.emit_pick(words::kBioNouns); w.emit(","); w.emit_pick(words::kFirstNames);
        w.emit_pick(words::kLastNames); w.emit(", was also a"); wiki_profession(w); w.emit(".");
        break;
      case 8:
        w.emit(he); w.emit("was elected"); w.emit_pick(words::kBioAdjectives);
        w.emit_pick(words::kBioNouns); w.emit("of"); w.emit_pick(words::kCities); w.emit("in");
        wiki_year(w); w.emit(".");
        break;
      default:
        w.emit("after"); wiki_year(w); w.emit(he); w.emit_pick(words::kBioVerbs);
        w.emit("with the"); w.emit_pick(words::kBioAdjectives); w.emit_pick(words::kBioNouns);
        if (w.draw(2, true) == 0) {
          w.emit(".");
        } else {
          w.emit("until"); wiki_year(w); w.emit(".");
        }
        break;
    }
  }
}

// ---- code: python-like functions

void code_ident(Writer& w) { w.emit_pick(words::kCodeIdents); }

void code_document(Writer& w) {
  w.emit("def");
  w.emit_pick(words::kCodeFuncs);
  code_ident(w);
  w.emit("(");
  code_ident(w);
  w.emit(",");
  code_ident(w);
  w.emit(") ->");
  w.emit_pick(words::kCodeTypes);
  w.emit(":");
  while (!w.full()) {
    switch (w.draw(9, true)) {
      case 0:
        code_ident(w); w.emit("="); code_ident(w); w.emit("."); w.emit_pick(words::kCodeFuncs);
        w.emit("("); code_ident(w); w.emit(")");
        break;
      case 1:
        w.emit("if"); code_ident(w);
        w.emit(w.draw(3, true) == 0 ? "==" : w.draw(2) == 0 ? "!=" : "<");
        w.emit_number(w.number(0, 99)); w.emit(": return"); code_ident(w);
        break;
      case 2:
        w.emit("for"); code_ident(w); w.emit("in range ( len ("); code_ident(w); w.emit(") ) :");
        break;
      case 3:
        code_ident(w); w.emit("+="); w.emit_number(w.number(0, 99));
        break;
      case 4:
        w.emit("return"); code_ident(w); w.emit("["); w.emit_number(w.number(0, 99)); w.emit("]");
        break;
      case 5:
        w.emit("self ."); code_ident(w); w.emit("="); code_ident(w);
        break;
      case 6:
        w.emit("print ("); code_ident(w); w.emit(","); code_ident(w); w.emit(")");
        break;
      case 7:
        w.emit("def"); w.emit_pick(words::kCodeFuncs); w.emit("( self ,"); code_ident(w);
        w.emit(") ->"); w.emit_pick(words::kCodeTypes); w.emit(":");
        break;
      default:
        w.emit("try :"); code_ident(w); w.emit("."); w.emit_pick(words::kCodeFuncs);
        w.emit("( ) except"); code_ident(w); w.emit(": pass");
        break;
    }
    w.emit(";");
  }
}

// ---- email: business correspondence

void email_topic(Writer& w) { w.emit_pick(words::kEmailWords); }

void email_document(Writer& w) {
  w.emit("subject :");
  w.emit(w.draw(2, true) == 0 ? "re :" : "fw :");
  email_topic(w);
  email_topic(w);
  const words::List greetings = {"dear", "hi", "hello"};
  w.emit_pick(greetings, true);
  w.emit_pick(words::kFirstNames);
  w.emit(",");
  const words::List days = {"monday", "tuesday", "wednesday", "thursday", "friday", "tomorrow"};
  while (!w.full()) {
    switch (w.draw(8, true)) {
      case 0:
        w.emit("thanks for the"); email_topic(w); w.emit(".");
        break;
      case 1: {
        const words::List verbs = {"send", "review", "confirm", "forward", "discuss"};
        w.emit("please"); w.emit_pick(verbs, true); w.emit("the"); email_topic(w); w.emit("by");
        w.emit_pick(days); w.emit(".");
        break;
      }
      case 2:
        w.emit("let me know if you have any"); w.emit(w.draw(2, true) == 0 ? "questions" : "comments");
        w.emit(".");
        break;
      case 3:
        w.emit("the"); email_topic(w); w.emit("meeting is"); w.emit_pick(days);
        w.emit(w.draw(2) == 0 ? "morning" : "afternoon"); w.emit("in room");
        w.emit_number(w.number(1, 99)); w.emit(".");
        break;
      case 4:
        w.emit("i"); w.emit(w.draw(2, true) == 0 ? "sent" : "need"); w.emit("the"); email_topic(w);
        w.emit(w.draw(2) == 0 ? "attached" : "below"); w.emit(".");
        break;
      case 5:
        w.emit("we need approval from"); w.emit(w.draw(2, true) == 0 ? "legal" : "counsel");
        w.emit("on the"); email_topic(w); w.emit(".");
        break;
      case 6:
        w.emit("the"); w.emit(w.draw(2, true) == 0 ? "price" : "volume"); w.emit("is");
        w.emit_number(w.number(1, 99)); w.emit("for"); w.emit_pick(days); w.emit(".");
        break;
      default: {
        const words::List closings = {"regards", "thanks", "cheers", "best"};
        w.emit_pick(closings, true); w.emit(","); w.emit_pick(words::kFirstNames);
        w.emit_pick(words::kLastNames);
        break;
      }
    }
  }
}

// ---- web: generic page boilerplate

void web_document(Writer& w) {
  w.emit("home |");
  w.emit_pick(words::kWebWords);
  w.emit("|");
  w.emit_pick(words::kWebWords);
  w.emit("|");
  while (!w.full()) {
    switch (w.draw(8, true)) {
      case 0: {
        const words::List verbs = {"buy", "download", "read", "subscribe", "share"};
        w.emit("click here to"); w.emit_pick(verbs, true); w.emit("the"); w.emit_pick(words::kWebWords);
        w.emit(".");
        break;
      }
      case 1:
        w.emit("top"); w.emit_number(w.number(3, 20)); w.emit_pick(words::kWebWords);
        w.emit(w.draw(2, true) == 0 ? "tips" : "guide"); w.emit("for");
        w.emit_number(w.number(1990, 2019)); w.emit(".");
        break;
      case 2:
        w.emit("free shipping on all orders over"); w.emit_number(w.number(10, 99)); w.emit(".");
        break;
      case 3:
        w.emit("sign up for our"); w.emit(w.draw(2, true) == 0 ? "newsletter" : "blog");
        w.emit("to get the latest"); w.emit_pick(words::kWebWords); w.emit(".");
        break;
      case 4:
        w.emit_number(w.number(0, 99)); w.emit("comments | share |"); w.emit_number(w.number(1, 5));
        w.emit("stars");
        break;
      case 5:
        w.emit("copyright"); w.emit_number(w.number(1995, 2019)); w.emit("all rights reserved .");
        break;
      case 6:
        w.emit("read more :"); w.emit_pick(words::kWebWords); w.emit_pick(words::kWebWords);
        w.emit_pick(words::kWebWords);
        break;
      default:
        w.emit_pick(words::kWebWords, true); w.emit("|"); w.emit_pick(words::kWebWords);
        w.emit("|"); w.emit_pick(words::kWebWords);
        break;
    }
  }
}

struct Generated {
  std::vector<int> tokens;
  std::vector<Writer::Draw> log;
};

Generated generate_document(Domain domain, Rng& rng, std::span<const int> prefix) {
  Writer w(Vocabulary::standard(), rng, prefix);
  switch (domain) {
    case Domain::wiki: wiki_document(w); break;
    case Domain::code: code_document(w); break;
    case Domain::email: email_document(w); break;
    case Domain::web: web_document(w); break;
  }
  Generated g;
  g.log = w.log();
  g.tokens = w.take_tokens();
  return g;
}

std::size_t first_difference(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0;
  while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
  return i;
}

// Tries to derive a sibling of `base` that branches inside the allowed window
// and diverges from every existing member inside it too.
std::optional<std::vector<int>> make_sibling(Domain domain, Rng& rng, const Generated& base,
                                             const std::vector<std::vector<int>>& members,
                                             const CorpusOptions& opt) {
  std::vector<std::size_t> structural;
  std::vector<std::size_t> any;
  for (std::size_t i = 0; i < base.log.size(); ++i) {
    const auto& d = base.log[i];
    if (d.n < 2 || d.position < opt.min_branch || d.position > opt.max_branch) continue;
    any.push_back(i);
    if (d.structural) structural.push_back(i);
  }
  if (any.empty()) return std::nullopt;
  const auto& candidates = (!structural.empty() && bernoulli(rng, 0.8)) ? structural : any;
  const std::size_t d = pick(rng, std::span<const std::size_t>(candidates));
  std::vector<int> prefix;
  for (std::size_t i = 0; i < d; ++i) prefix.push_back(base.log[i].value);
  const int n = base.log[d].n;
  int v = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n - 1)));
  if (v >= base.log[d].value) ++v;
  prefix.push_back(v);
  Generated sib = generate_document(domain, rng, prefix);
  for (const auto& m : members) {
    const std::size_t p = first_difference(m, sib.tokens);
    if (p < opt.min_branch || p > opt.max_branch) return std::nullopt;
  }
  return std::move(sib.tokens);
}

}  // namespace

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::wiki: return "wiki";
    case Domain::code: return "code";
    case Domain::email: return "email";
    case Domain::web: return "web";
  }
  return "?";
}

Domain parse_domain(std::string_view name) {
  for (Domain d : kDomains) {
    if (domain_name(d) == name) return d;
  }
  throw ContractViolation("unknown domain '" + std::string(name) + "'");
}

std::span<const Domain> all_domains() { return kDomains; }

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v(vocabulary_words());
  return v;
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  require(it != index_.end(), "word '" + std::string(word) + "' is not in the vocabulary");
  return it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

const std::string& Vocabulary::word(int id) const {
  require(id >= 0 && id < size(), "token id out of vocabulary range");
  return words_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

Corpus generate_corpus(Domain domain, int n_samples, std::uint64_t seed,
                       const CorpusOptions& options) {
  require(n_samples >= 1, "n_samples must be >= 1");
  require(options.sibling_fraction >= 0.0 && options.sibling_fraction <= 1.0,
          "sibling_fraction must be in [0, 1]");
  require(options.min_branch >= 1 && options.min_branch <= options.max_branch &&
              options.max_branch < kContextLength,
          "branch window must lie inside the context");
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(domain) + 1)));
  const auto n = static_cast<std::size_t>(n_samples);
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> ordered;
  while (ordered.size() < n) {
    Generated base = generate_document(domain, rng, {});
    if (seen.count(base.tokens)) continue;
    std::vector<std::vector<int>> group{base.tokens};
    const std::size_t remaining = n - ordered.size();
    if (remaining >= 2 && bernoulli(rng, options.sibling_fraction)) {
      const std::size_t size = (remaining >= 3 && bernoulli(rng, 0.3)) ? 3 : 2;
      for (int attempt = 0; attempt < 64 && group.size() < size; ++attempt) {
        auto sib = make_sibling(domain, rng, base, group, options);
        if (sib && !seen.count(*sib) &&
            std::find(group.begin(), group.end(), *sib) == group.end()) {
          group.push_back(std::move(*sib));
        }
      }
    }
    for (auto& t : group) {
      seen.insert(t);
      ordered.push_back(std::move(t));
    }
  }

  Corpus corpus;
  corpus.domain = domain;
  corpus.seed = seed;
  const Vocabulary& vocab = Vocabulary::standard();
  char buf[64];
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s-s%llu-%06zu", std::string(domain_name(domain)).c_str(),
                  static_cast<unsigned long long>(seed), i);
    Sample s;
    s.id = buf;
    s.domain = domain;
    s.tokens = std::move(ordered[i]);
    s.text = vocab.decode(s.tokens);
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

void save_samples_jsonl(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Sample& s : samples) {
    nlohmann::json j{{"id", s.id},
                     {"domain", domain_name(s.domain)},
                     {"tokens", s.tokens},
                     {"text", s.text}};
    out << j.dump() << '\n';
  }
}

std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Sample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.domain = parse_domain(j.at("domain").get<std::string>());
    s.tokens = j.at("tokens").get<std::vector<int>>();
    s.text = j.value("text", std::string());
    require(s.tokens.size() == kSampleLength, "sample " + s.id + " is not 100 tokens");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace memcirc
