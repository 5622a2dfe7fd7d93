#include "synth.hpp"

#include <algorithm>
#include <random>

#include "m2io/dataset.hpp"
#include "m2io/schema.hpp"

namespace m2io::testing {

namespace {

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    const char* vowels[] = {"a", "e", "i", "o", "u"};
    const char* codas[] = {"n", "r", "l", "s", "x"};
    std::vector<std::string> out;
    for (auto* o : onsets) {
      for (auto* v : vowels) {
        for (auto* c : codas) out.push_back(std::string(o) + v + c + "o");
      }
    }
    return out;
  }();
  return words;
}

const char* const kSources[] = {"Wit", "Web", "Wiki", "Arxiv", "Recipe", "Manual"};
const Difficulty kTiers[] = {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

DatasetSample synth_sample(std::uint64_t seed, std::size_t index, const SynthOptions& options) {
  const std::string id = "s" + std::to_string(index + 1);
  SeededRng rng(sample_seed(seed, id));
  std::vector<std::string> words = vocabulary();
  rng.shuffle(words);
  std::size_t next_word = 0;
  auto take = [&](std::size_t n) {
    std::vector<std::string> out(words.begin() + static_cast<std::ptrdiff_t>(next_word),
                                 words.begin() + static_cast<std::ptrdiff_t>(next_word + n));
    next_word += n;
    return out;
  };

  const std::size_t m = options.min_sentences + rng.below(options.max_sentences - options.min_sentences + 1);
  std::vector<std::vector<std::string>> sentence_words;
  std::vector<std::string> sentences;
  for (std::size_t j = 0; j < m; ++j) {
    auto w = take(4);
    sentences.push_back(capitalize(w[0]) + " " + w[1] + " " + w[2] + " " + w[3] + ".");
    sentence_words.push_back(std::move(w));
  }

  const std::size_t k = 1 + rng.below(m);
  std::vector<std::size_t> targets(m);
  for (std::size_t j = 0; j < m; ++j) targets[j] = j;
  rng.shuffle(targets);
  targets.resize(k);
  const auto negatives = static_cast<std::size_t>(options.negative_ratio * static_cast<double>(k) + 0.5);

  std::vector<std::size_t> numbers(k + negatives);
  for (std::size_t i = 0; i < numbers.size(); ++i) numbers[i] = i + 1;
  rng.shuffle(numbers);

  DatasetSample s;
  s.id = id;
  s.gt.sentence_map = SentenceMap(sentences);
  for (std::size_t i = 0; i < k; ++i) {
    ImageAsset img;
    img.id = "image" + std::to_string(numbers[i]);
    img.uri = "images/" + id + "/" + img.id + ".jpg";
    const auto& w = sentence_words[targets[i]];
    img.caption = w[0] + " " + w[1] + " " + w[2] + " " + w[3];
    s.gt.placements.insert(img.id, static_cast<int>(targets[i] + 1));
    s.images.push_back(std::move(img));
  }
  for (std::size_t i = k; i < numbers.size(); ++i) {
    ImageAsset img;
    img.id = "image" + std::to_string(numbers[i]);
    img.uri = "images/" + id + "/" + img.id + ".jpg";
    auto w = take(4);
    img.caption = w[0] + " " + w[1] + " " + w[2] + " " + w[3];
    s.images.push_back(std::move(img));
  }
  rng.shuffle(s.images);

  s.query = Query{id, "How does " + sentence_words[0][0] + " relate to " + sentence_words[m - 1][1] + "?"};
  s.source = kSources[index % 6];
  s.difficulty = kTiers[index % 3];
  if (options.with_documents) {
    DocumentChunk answer_doc{id + "-d1", s.gt.sentence_map.joined(), {}};
    for (const auto& img : s.images) answer_doc.image_ids.push_back(img.id);
    auto w = take(6);
    DocumentChunk filler{id + "-d2", capitalize(w[0]) + " " + w[1] + " " + w[2] + ". " + capitalize(w[3]) + " " +
                                         w[4] + " " + w[5] + ".",
                         {}};
    s.documents = {answer_doc, filler};
  }
  return s;
}

std::vector<DatasetSample> synth_dataset(std::size_t count, std::uint64_t seed, const SynthOptions& options) {
  std::vector<DatasetSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(seed, i, options));
  return out;
}

std::shared_ptr<EmbeddingProvider> diagonal_embedder(const DatasetSample& sample) {
  const auto& sentences = sample.gt.sentence_map.sentences();
  const std::size_t dim = sentences.size() + sample.images.size();
  std::unordered_map<std::string, EmbeddingVector> table;
  auto basis = [&](std::size_t axis) {
    EmbeddingVector v(dim, 0.0);
    v[axis] = 1.0;
    return v;
  };
  for (std::size_t j = 0; j < sentences.size(); ++j) table[sentences[j]] = basis(j);
  std::size_t axis = sentences.size();
  for (const auto& img : sample.images) {
    auto pos = sample.gt.placements.find(img.id);
    table[img.matching_text()] = pos ? basis(static_cast<std::size_t>(*pos - 1)) : basis(axis++);
  }
  return std::make_shared<TableEmbedder>(std::move(table));
}

std::string random_completion(const DatasetSample& sample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const auto m = sample.gt.sentence_map.size();

  std::vector<std::pair<std::string, long long>> entries;
  switch (pick(4)) {
    case 0:
      for (const auto& [img, idx] : sample.gt.placements.entries()) entries.emplace_back(img, idx);
      break;
    default: {
      const std::size_t n = pick(sample.images.size() + 2);
      for (std::size_t i = 0; i < n; ++i) {
        std::string img = pick(8) == 0 ? "image" + std::to_string(900 + pick(50))
                                       : sample.images[pick(sample.images.size())].id;
        long long idx = pick(10) == 0 ? static_cast<long long>(m + 1 + pick(3)) : static_cast<long long>(1 + pick(m));
        entries.emplace_back(img, idx);
      }
    }
  }

  std::string dict = "{";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) dict += ", ";
    const char q = pick(2) ? '"' : '\'';
    dict += q + entries[i].first + q + ": " + std::to_string(entries[i].second);
  }
  if (!entries.empty() && pick(5) == 0) dict += ",";
  dict += "}";

  switch (pick(10)) {
    case 0:
      return "<answer>" + dict + "</answer>";
    case 1:
      return "<think>reasoning</think>" + dict;
    case 2:
      return "<think>a</think><think>b</think><answer>" + dict + "</answer>";
    case 3:
      return "<think>reasoning</think><answer>" + dict.substr(0, dict.size() / 2) + "</answer>";
    case 4:
      return "note <think>reasoning</think><answer>" + dict + "</answer>";
    default:
      return "<think>Compare captions with sentences.</think>\n<answer>" + dict + "</answer>";
  }
}

std::string random_bytes(std::uint64_t seed, std::size_t max_length) {
  std::mt19937_64 rng(seed);
  static const std::string fragments[] = {"<think>", "</think>", "<answer>", "</answer>", "{", "}", "'", "\"",
                                          ":", ",", "image1", "99999999999999999999", "-3", "```", "\n", " "};
  const std::size_t len = rng() % (max_length + 1);
  std::string out;
  while (out.size() < len) {
    if (rng() % 3 == 0) {
      out += fragments[rng() % std::size(fragments)];
    } else {
      out.push_back(static_cast<char>(rng() % 256));
    }
  }
  return out;
}

std::string mutate(std::string base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int edits = 1 + static_cast<int>(rng() % 4);
  for (int e = 0; e < edits; ++e) {
    const std::size_t at = base.empty() ? 0 : rng() % (base.size() + 1);
    const auto byte = static_cast<char>(rng() % 256);
    switch (rng() % 3) {
      case 0:
        base.insert(base.begin() + static_cast<std::ptrdiff_t>(at), byte);
        break;
      case 1:
        if (at < base.size()) base.erase(at, 1);
        break;
      default:
        if (at < base.size()) base[at] = byte;
    }
  }
  return base;
}

}  // namespace m2io::testing
