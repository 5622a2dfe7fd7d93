#include "m2io/providers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "m2io/text.hpp"

namespace m2io {

EmbeddingVector EmbeddingProvider::embed_one(const std::string& text) {
  std::vector<std::string> one{text};
  auto out = embed(one);
  if (out.size() != 1) throw Error(ErrorCode::ProviderError, name() + " returned wrong batch size");
  return std::move(out.front());
}

// ---------------------------------------------------------------------------
// HashEmbedder

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be > 0");
}

std::string HashEmbedder::name() const { return "hash-" + std::to_string(dimension_); }

std::vector<EmbeddingVector> HashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    EmbeddingVector v(dimension_, 0.0);
    auto tokens = text::word_tokens(t);
    // Blank text still needs a non-zero direction for cosine.
    if (tokens.empty()) tokens.emplace_back("\x01<empty>");
    for (const auto& tok : tokens) v[text::fnv1a64(tok) % dimension_] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// TableEmbedder

TableEmbedder::TableEmbedder(std::unordered_map<std::string, EmbeddingVector> table,
                             std::shared_ptr<EmbeddingProvider> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::string TableEmbedder::name() const {
  return fallback_ ? "table+" + fallback_->name() : std::string("table");
}

std::vector<EmbeddingVector> TableEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto it = table_.find(texts[i]);
    if (it != table_.end()) {
      out[i] = it->second;
    } else {
      missing.push_back(texts[i]);
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    if (!fallback_) {
      throw Error(ErrorCode::ProviderError, "no table embedding for \"" + missing.front() + "\"");
    }
    auto filled = fallback_->embed(missing);
    for (std::size_t k = 0; k < missing_at.size(); ++k) out[missing_at[k]] = std::move(filled[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CachedEmbedder

CachedEmbedder::CachedEmbedder(std::shared_ptr<EmbeddingProvider> inner,
                               std::optional<std::filesystem::path> directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
  if (!inner_) throw Error(ErrorCode::InvalidArgument, "CachedEmbedder needs an inner provider");
  if (directory_) std::filesystem::create_directories(*directory_);
}

std::string CachedEmbedder::key_for(const std::string& text) const {
  return text::sha256_hex(inner_->name() + '\0' + text);
}

std::optional<EmbeddingVector> CachedEmbedder::lookup(const std::string& key) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!directory_) return std::nullopt;
  auto path = *directory_ / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto j = Json::parse(read_file(path));
    auto v = j.at("embedding").get<EmbeddingVector>();
    std::lock_guard lock(mutex_);
    memory_.emplace(key, v);
    return v;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entry: recompute and overwrite
  }
}

void CachedEmbedder::store(const std::string& key, const EmbeddingVector& value) {
  {
    std::lock_guard lock(mutex_);
    memory_[key] = value;
  }
  if (directory_) {
    Json j;
    j["provider"] = inner_->name();
    j["embedding"] = value;
    // Unique temp name per writer; the rename makes concurrent stores safe.
    auto path = *directory_ / (key + ".json");
    std::ostringstream tid;
    tid << std::this_thread::get_id();
    auto tmp = *directory_ / (key + "." + tid.str() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << j.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }
}

std::vector<EmbeddingVector> CachedEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::string> missing_keys;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto key = key_for(texts[i]);
    if (auto hit = lookup(key)) {
      out[i] = std::move(*hit);
      std::lock_guard lock(mutex_);
      ++hits_;
    } else {
      missing.push_back(texts[i]);
      missing_keys.push_back(std::move(key));
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    auto filled = inner_->embed(missing);
    if (filled.size() != missing.size()) {
      throw Error(ErrorCode::ProviderError, inner_->name() + " returned wrong batch size");
    }
    for (std::size_t k = 0; k < missing.size(); ++k) {
      store(missing_keys[k], filled[k]);
      out[missing_at[k]] = std::move(filled[k]);
    }
    std::lock_guard lock(mutex_);
    misses_ += missing.size();
  }
  return out;
}

std::size_t CachedEmbedder::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CachedEmbedder::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

// ---------------------------------------------------------------------------
// Chat request/response

std::string ChatRequest::hash() const {
  Json j;
  j["model"] = model;
  j["system"] = system;
  j["user"] = user;
  j["temperature"] = temperature;
  j["max_tokens"] = max_tokens;
  return text::sha256_hex(j.dump());
}

Json ChatRequest::to_json() const {
  Json j;
  j["model"] = model;
  j["system"] = system;
  j["user"] = user;
  j["temperature"] = temperature;
  j["max_tokens"] = max_tokens;
  return j;
}

ChatRequest ChatRequest::from_json(const Json& j) {
  ChatRequest r;
  r.model = j.value("model", "");
  r.system = j.value("system", "");
  r.user = j.value("user", "");
  r.temperature = j.value("temperature", 0.0);
  r.max_tokens = j.value("max_tokens", 1024);
  return r;
}

Json ChatResponse::to_json() const {
  Json j;
  j["text"] = text;
  j["prompt_tokens"] = prompt_tokens;
  j["completion_tokens"] = completion_tokens;
  return j;
}

ChatResponse ChatResponse::from_json(const Json& j) {
  ChatResponse r;
  r.text = j.value("text", "");
  r.prompt_tokens = j.value("prompt_tokens", 0);
  r.completion_tokens = j.value("completion_tokens", 0);
  return r;
}

// ---------------------------------------------------------------------------
// MockChatProvider

MockChatProvider::MockChatProvider(Mode mode) : mode_(mode) {}

MockChatProvider::MockChatProvider(Responder responder) : responder_(std::move(responder)) {}

namespace {

std::string meta(const ChatRequest& r, const std::string& key) {
  auto it = r.metadata.find(key);
  return it == r.metadata.end() ? std::string() : it->second;
}

std::string mock_placements(const ChatRequest& r) {
  auto ids_csv = meta(r, "candidate_ids");
  std::vector<std::string> ids;
  if (!ids_csv.empty()) ids = text::split(ids_csv, ',');
  std::size_t m = 0;
  try {
    m = static_cast<std::size_t>(std::stoul(meta(r, "sentence_count")));
  } catch (const std::exception&) {
    m = 0;
  }
  std::vector<bool> taken(m, false);
  Json dict = Json::object();
  for (const auto& id : ids) {
    auto h = text::fnv1a64(id + '\0' + r.user);
    if (m == 0 || (h & 1U)) continue;
    auto slot = static_cast<std::size_t>((h >> 1) % m);
    for (std::size_t step = 0; step < m && taken[slot]; ++step) slot = (slot + 1) % m;
    if (taken[slot]) break;
    taken[slot] = true;
    dict[id] = static_cast<int>(slot + 1);
  }
  return dict.dump();
}

}  // namespace

std::string MockChatProvider::extractive(const ChatRequest& r) const {
  const auto task = meta(r, "task");
  const auto h = text::fnv1a64(r.user);
  if (task == "text_answer") {
    auto ctx = text::normalize_whitespace(meta(r, "context"));
    return ctx.empty() ? std::string("No answer.") : ctx;
  }
  if (task == "insert_r1") {
    return "<think>Mock analysis of candidate images against the answer sentences.</think>"
           "<answer>" + mock_placements(r) + "</answer>";
  }
  if (task == "insert_base") return mock_placements(r);
  if (task == "single_shot") {
    auto ctx = text::normalize_whitespace(meta(r, "context"));
    auto ids_csv = meta(r, "candidate_ids");
    if (!ids_csv.empty()) ctx += " <" + text::split(ids_csv, ',').front() + ">";
    return ctx;
  }
  if (task == "judge_relevance") {
    return "Mock relevance judgement.\n<relevance_score>" + std::to_string(1 + h % 5) +
           "</relevance_score>";
  }
  if (task == "judge_position") {
    std::size_t k = 0;
    try {
      k = std::stoul(meta(r, "image_count"));
    } catch (const std::exception&) {
    }
    std::string out;
    for (std::size_t i = 1; i <= k; ++i) {
      out += "<img_" + std::to_string(i) + "> mock position judgement.\n<img_" +
             std::to_string(i) + "_score>" + std::to_string((h >> i) & 1U) + "</img_" +
             std::to_string(i) + "_score>\n";
    }
    return out;
  }
  if (task == "difficulty") {
    return "Mock difficulty judgement.\n<difficulty_score>" + std::to_string(1 + h % 5) +
           "</difficulty_score>";
  }
  return "ANSWER(" + text::hex64(h) + ")";
}

ChatResponse MockChatProvider::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  ChatResponse resp;
  if (responder_) {
    resp.text = responder_(request);
  } else if (mode_ == Mode::Extractive) {
    resp.text = extractive(request);
  } else {
    resp.text = "ANSWER(" + request.hash().substr(0, 16) + ")";
  }
  resp.prompt_tokens = static_cast<int>(text::word_tokens(request.system + " " + request.user).size());
  resp.completion_tokens = static_cast<int>(text::word_tokens(resp.text).size());
  return resp;
}

std::size_t MockChatProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

// ---------------------------------------------------------------------------
// CassetteChatProvider

std::shared_ptr<CassetteChatProvider> CassetteChatProvider::replay(const std::filesystem::path& file) {
  std::shared_ptr<CassetteChatProvider> p(new CassetteChatProvider());
  p->file_ = file;
  Json arr;
  try {
    arr = Json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "cassette " + file.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw Error(ErrorCode::ParseError, "cassette must be a JSON array");
  for (auto& entry : arr) {
    auto hash = entry.at("request_hash").get<std::string>();
    if (p->entries_.emplace(hash, entry).second) p->order_.push_back(hash);
  }
  return p;
}

std::shared_ptr<CassetteChatProvider> CassetteChatProvider::record(
    const std::filesystem::path& file, std::shared_ptr<ChatProvider> inner) {
  if (!inner) throw Error(ErrorCode::InvalidArgument, "recording cassette needs a provider");
  std::shared_ptr<CassetteChatProvider> p(new CassetteChatProvider());
  p->file_ = file;
  p->inner_ = std::move(inner);
  return p;
}

ChatResponse CassetteChatProvider::complete(const ChatRequest& request) {
  auto hash = request.hash();
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(hash); it != entries_.end()) {
      return ChatResponse::from_json(it->second.at("response"));
    }
  }
  if (!inner_) {
    throw Error(ErrorCode::ProviderError,
                "cassette " + file_.string() + " has no recording for request " + hash.substr(0, 16));
  }
  auto resp = inner_->complete(request);
  Json entry;
  entry["request_hash"] = hash;
  entry["request"] = request.to_json();
  entry["response"] = resp.to_json();
  std::lock_guard lock(mutex_);
  if (entries_.emplace(hash, std::move(entry)).second) order_.push_back(hash);
  return resp;
}

void CassetteChatProvider::save() const {
  Json arr = Json::array();
  {
    std::lock_guard lock(mutex_);
    // Sorted by hash so concurrent recordings produce identical files.
    for (const auto& [hash, entry] : entries_) arr.push_back(entry);
  }
  write_file(file_, arr.dump(2) + "\n");
}

std::size_t CassetteChatProvider::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace m2io
