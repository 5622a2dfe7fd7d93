#pragma once

#include <span>
#include <string>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/providers.hpp"

namespace m2io {

/// a.b / (|a| |b|), clamped to [-1, 1]. Throws DimensionMismatch, ZeroNorm.
double cosine(std::span<const double> a, std::span<const double> b);

struct RetrievalConfig {
  std::size_t k = 3;
};

struct ScoredDocument {
  const DocumentChunk* document = nullptr;
  double score = 0.0;
};

/// Full corpus ranking: descending similarity, ties by ascending id.
std::vector<ScoredDocument> rank_documents(const Query& query, std::span<const DocumentChunk> corpus,
                                           EmbeddingProvider& embedder);

/// Top-k documents (k saturates at corpus size). Throws EmptyCorpus,
/// ProviderError.
std::vector<DocumentChunk> retrieve(const Query& query, std::span<const DocumentChunk> corpus,
                                    const RetrievalConfig& config, EmbeddingProvider& embedder);

}  // namespace m2io
