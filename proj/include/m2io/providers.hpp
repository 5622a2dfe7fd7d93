#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "m2io/error.hpp"
#include "m2io/schema.hpp"

namespace m2io {

using EmbeddingVector = std::vector<double>;

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

/// Runs fn up to policy.attempts times, sleeping with exponential backoff
/// between failures. Only ProviderError is retried; the last one is rethrown.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ProviderError || attempt >= policy.attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
  }
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Stable name, part of cache keys.
  virtual std::string name() const = 0;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;

  EmbeddingVector embed_one(const std::string& text);
};

/// Feature-hashed token counts, L2-normalized. Fully deterministic.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dimension = 256);
  std::string name() const override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dimension_;
};

/// Fixed text -> vector table; texts missing from the table go to the
/// fallback provider, or raise ProviderError without one.
class TableEmbedder final : public EmbeddingProvider {
 public:
  TableEmbedder(std::unordered_map<std::string, EmbeddingVector> table,
                std::shared_ptr<EmbeddingProvider> fallback = nullptr);
  std::string name() const override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
  std::shared_ptr<EmbeddingProvider> fallback_;
};

/// Content-addressed embedding cache in front of another provider.
/// Entries live in memory and, when a directory is given, as one JSON file
/// per (provider, text) under that directory.
class CachedEmbedder final : public EmbeddingProvider {
 public:
  CachedEmbedder(std::shared_ptr<EmbeddingProvider> inner,
                 std::optional<std::filesystem::path> directory = std::nullopt);
  std::string name() const override { return inner_->name(); }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  std::string key_for(const std::string& text) const;
  std::optional<EmbeddingVector> lookup(const std::string& key);
  void store(const std::string& key, const EmbeddingVector& value);

  std::shared_ptr<EmbeddingProvider> inner_;
  std::optional<std::filesystem::path> directory_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> memory_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct HttpEndpoint {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  int parallelism = 4;
};

/// OpenAI-compatible POST {base_url}/embeddings.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(HttpEndpoint endpoint, std::size_t batch_size = 64);
  std::string name() const override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts);

  HttpEndpoint endpoint_;
  std::size_t batch_size_;
};

struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 1024;
  /// Local hints for mock providers (task name, candidate ids, ...).
  /// Not sent over the wire and not part of the request hash.
  std::map<std::string, std::string> metadata;

  /// SHA-256 over model, messages and decoding parameters.
  std::string hash() const;
  Json to_json() const;
  static ChatRequest from_json(const Json& j);
};

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  double latency_ms = 0.0;

  Json to_json() const;
  static ChatResponse from_json(const Json& j);
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Pure function of the request. Echo mode answers "ANSWER(<hash16>)".
/// Extractive mode inspects request.metadata["task"] and produces plausible
/// deterministic output for every pipeline prompt (answer = context,
/// canonical insertion dicts, judge tags).
class MockChatProvider final : public ChatProvider {
 public:
  enum class Mode { Echo, Extractive };
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockChatProvider(Mode mode = Mode::Echo);
  explicit MockChatProvider(Responder responder);
  ChatResponse complete(const ChatRequest& request) override;

  std::size_t calls() const;

 private:
  std::string extractive(const ChatRequest& request) const;

  Mode mode_ = Mode::Echo;
  Responder responder_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Record/replay of chat transcripts. File format: JSON array of
/// {"request_hash", "request", "response"}.
class CassetteChatProvider final : public ChatProvider {
 public:
  /// Replay only; misses raise ProviderError.
  static std::shared_ptr<CassetteChatProvider> replay(const std::filesystem::path& file);
  /// Forwards to inner and appends every exchange; save() persists.
  static std::shared_ptr<CassetteChatProvider> record(const std::filesystem::path& file,
                                                      std::shared_ptr<ChatProvider> inner);

  ChatResponse complete(const ChatRequest& request) override;
  void save() const;
  std::size_t size() const;

 private:
  CassetteChatProvider() = default;

  std::filesystem::path file_;
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mutex_;
  std::map<std::string, Json> entries_;  // request_hash -> entry
  std::vector<std::string> order_;
};

/// OpenAI-compatible POST {base_url}/chat/completions with bounded
/// concurrency and retry.
class RemoteChatProvider final : public ChatProvider {
 public:
  explicit RemoteChatProvider(HttpEndpoint endpoint);
  ~RemoteChatProvider() override;
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ChatResponse complete_once(const ChatRequest& request);

  HttpEndpoint endpoint_;
  struct Gate;
  std::unique_ptr<Gate> gate_;
};

}  // namespace m2io
