#include "httplib.h"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>

#include "m2io/providers.hpp"
#include "m2io/text.hpp"

namespace m2io {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

ParsedUrl parse_base_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "base_url needs a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string api_key(const HttpEndpoint& ep) {
  if (ep.api_key_env.empty()) return {};
  const char* v = std::getenv(ep.api_key_env.c_str());
  return v ? std::string(v) : std::string();
}

Json post_json(const HttpEndpoint& ep, const std::string& route, const Json& body) {
  auto url = parse_base_url(ep.base_url);
  httplib::Client client(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (auto key = api_key(ep); !key.empty()) headers.emplace("Authorization", "Bearer " + key);

  auto res = client.Post(url.path + route, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    bool timeout = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
    throw Error(ErrorCode::ProviderError,
                std::string(timeout ? "timeout" : "transport") + " calling " + ep.base_url + route +
                    " (" + httplib::to_string(err) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::ProviderError, "HTTP " + std::to_string(res->status) + " from " +
                                              ep.base_url + route + ": " + res->body.substr(0, 200));
  }
  try {
    return Json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("invalid JSON response: ") + e.what());
  }
}

}  // namespace

// Counting gate bounding in-flight requests per provider.
struct RemoteChatProvider::Gate {
  explicit Gate(int slots) : free(slots > 0 ? slots : 1) {}
  void acquire() {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard lock(mutex);
      ++free;
    }
    cv.notify_one();
  }
  std::mutex mutex;
  std::condition_variable cv;
  int free;
};

RemoteChatProvider::RemoteChatProvider(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), gate_(std::make_unique<Gate>(endpoint_.parallelism)) {
  parse_base_url(endpoint_.base_url);
}

RemoteChatProvider::~RemoteChatProvider() = default;

ChatResponse RemoteChatProvider::complete_once(const ChatRequest& request) {
  Json body;
  body["model"] = request.model.empty() ? endpoint_.model : request.model;
  Json messages = Json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;

  auto start = std::chrono::steady_clock::now();
  auto reply = post_json(endpoint_, "/chat/completions", body);
  ChatResponse resp;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    resp.text = content.is_string() ? content.get<std::string>() : std::string();
    if (auto it = reply.find("usage"); it != reply.end() && it->is_object()) {
      resp.prompt_tokens = it->value("prompt_tokens", 0);
      resp.completion_tokens = it->value("completion_tokens", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("unexpected chat response shape: ") + e.what());
  }
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

ChatResponse RemoteChatProvider::complete(const ChatRequest& request) {
  gate_->acquire();
  struct Release {
    Gate* g;
    ~Release() { g->release(); }
  } release{gate_.get()};
  return with_retry(endpoint_.retry, [&] { return complete_once(request); });
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(HttpEndpoint endpoint, std::size_t batch_size)
    : endpoint_(std::move(endpoint)), batch_size_(batch_size ? batch_size : 1) {
  parse_base_url(endpoint_.base_url);
}

std::string RemoteEmbeddingProvider::name() const { return "remote:" + endpoint_.model; }

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  Json body;
  body["model"] = endpoint_.model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  auto reply = with_retry(endpoint_.retry, [&] { return post_json(endpoint_, "/embeddings", body); });
  std::vector<EmbeddingVector> out(texts.size());
  try {
    const auto& data = reply.at("data");
    if (data.size() != texts.size()) {
      throw Error(ErrorCode::ProviderError, "embedding count mismatch");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto idx = data[i].value("index", i);
      if (idx >= out.size()) throw Error(ErrorCode::ProviderError, "embedding index out of range");
      out[idx] = data[i].at("embedding").get<EmbeddingVector>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("unexpected embeddings response: ") + e.what());
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  const std::size_t batches = (texts.size() + batch_size_ - 1) / batch_size_;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      auto b = next.fetch_add(1);
      if (b >= batches) return;
      auto begin = b * batch_size_;
      auto len = std::min(batch_size_, texts.size() - begin);
      try {
        auto part = embed_batch(texts.subspan(begin, len));
        for (std::size_t k = 0; k < len; ++k) out[begin + k] = std::move(part[k]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = batches;
      }
    }
  };
  auto workers = std::min<std::size_t>(batches, static_cast<std::size_t>(std::max(1, endpoint_.parallelism)));
  std::vector<std::jthread> threads;
  for (std::size_t i = 1; i < workers; ++i) threads.emplace_back(worker);
  worker();
  threads.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace m2io
