#pragma once

// Synthetic domain corpora over one fixed word-level vocabulary.
//
// Samples are exactly kSampleLength tokens. Most samples belong to sibling
// groups: members share a prefix and then branch at a token inside the
// context window, continuing differently. That is what gives a memorizing
// model contexts where its prediction leaves the memorized path.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memcirc {

inline constexpr std::size_t kContextLength = 50;
inline constexpr std::size_t kSampleLength = 100;

enum class Domain : std::uint8_t { wiki, code, email, web };

std::string_view domain_name(Domain d);
Domain parse_domain(std::string_view name);  // ContractViolation on unknown
std::span<const Domain> all_domains();

class Vocabulary {
 public:
  // The shared vocabulary used by every domain.
  static const Vocabulary& standard();

  int size() const { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;  // ContractViolation if unknown
  bool contains(std::string_view word) const;
  const std::string& word(int id) const;
  std::string decode(std::span<const int> ids) const;  // space-joined

 private:
  explicit Vocabulary(std::vector<std::string> words);
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct Sample {
  std::string id;
  Domain domain = Domain::wiki;
  std::vector<int> tokens;
  std::string text;
};

struct CorpusOptions {
  double sibling_fraction = 0.75;  // share of samples generated inside sibling groups
  std::size_t min_branch = 8;      // earliest branch position
  std::size_t max_branch = 45;     // latest branch position
};

struct Corpus {
  Domain domain = Domain::wiki;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;
};

Corpus generate_corpus(Domain domain, int n_samples, std::uint64_t seed,
                       const CorpusOptions& options = {});

void save_samples_jsonl(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path);

}  // namespace memcirc
