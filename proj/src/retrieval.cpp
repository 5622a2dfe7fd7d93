#include "m2io/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace m2io {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorCode::ZeroNorm, "empty embedding");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNorm, "all-zero embedding");
  // sqrt(na) * sqrt(nb) is commutative, so cosine(a, b) == cosine(b, a) bit for bit.
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<ScoredDocument> rank_documents(const Query& query, std::span<const DocumentChunk> corpus,
                                           EmbeddingProvider& embedder) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no documents to rank for " + query.id);
  std::vector<std::string> texts;
  texts.reserve(corpus.size() + 1);
  texts.push_back(query.text);
  for (const auto& d : corpus) texts.push_back(d.text);
  auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::ProviderError, embedder.name() + " returned wrong batch size");
  }
  std::vector<ScoredDocument> ranked;
  ranked.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ranked.push_back({&corpus[i], cosine(vectors[0], vectors[i + 1])});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredDocument& x, const ScoredDocument& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.document->id < y.document->id;
  });
  return ranked;
}

std::vector<DocumentChunk> retrieve(const Query& query, std::span<const DocumentChunk> corpus,
                                    const RetrievalConfig& config, EmbeddingProvider& embedder) {
  if (config.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  auto ranked = rank_documents(query, corpus, embedder);
  std::vector<DocumentChunk> out;
  for (std::size_t i = 0; i < ranked.size() && i < config.k; ++i) out.push_back(*ranked[i].document);
  return out;
}

}  // namespace m2io
