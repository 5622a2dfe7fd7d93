#include "m2io/reward_service.hpp"

#include <algorithm>
#include <chrono>

#include "httplib.h"

namespace m2io {

namespace {

std::string error_body(std::string_view code, const std::string& message) {
  Json j;
  j["error"] = code;
  j["message"] = message;
  return j.dump();
}

}  // namespace

RewardService::RewardService(ServiceConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  config_.reward.validate();
  install_routes();
}

RewardService::~RewardService() { stop(); }

void RewardService::load(std::shared_ptr<const DatasetIndex> index) {
  std::lock_guard lock(mutex_);
  index_ = std::move(index);
}

std::shared_ptr<const DatasetIndex> RewardService::snapshot() const {
  std::lock_guard lock(mutex_);
  return index_;
}

void RewardService::release_slot() const {
  {
    std::lock_guard lock(gate_mutex_);
    --scoring_;
  }
  gate_cv_.notify_one();
}

RewardService::Reply RewardService::handle_health() const {
  auto index = snapshot();
  if (!index) return {503, error_body("unavailable", "no dataset loaded")};
  Json j;
  j["status"] = "ok";
  j["samples"] = index->size();
  return {200, j.dump()};
}

RewardService::Reply RewardService::handle_score(const std::string& body) const {
  auto index = snapshot();
  if (!index) return {503, error_body("unavailable", "no dataset loaded")};

  Json request = Json::parse(body, nullptr, false);
  if (request.is_discarded() || !request.is_object()) {
    return {400, error_body("bad_request", "body is not a JSON object")};
  }
  if (!request.contains("items") || !request["items"].is_array()) {
    return {400, error_body("bad_request", "missing items array")};
  }
  if (request["items"].size() > config_.max_items) {
    return {400, error_body("bad_request", "too many items")};
  }
  RewardConfig reward = config_.reward;
  if (request.contains("alpha") && !request["alpha"].is_null()) {
    if (!request["alpha"].is_number()) return {400, error_body("bad_request", "alpha must be a number")};
    reward.alpha = request["alpha"].get<double>();
    if (!(reward.alpha >= 0.0 && reward.alpha <= 1.0)) {
      return {400, error_body("bad_request", "alpha must lie in [0, 1]")};
    }
  }
  std::vector<RolloutItem> items;
  items.reserve(request["items"].size());
  for (std::size_t i = 0; i < request["items"].size(); ++i) {
    try {
      items.push_back(rollout_item_from_json(request["items"][i]));
    } catch (const Error& e) {
      return {400, error_body("bad_request", "item " + std::to_string(i) + ": " + e.what())};
    }
  }

  const std::size_t slots = std::max<std::size_t>(config_.workers, 1);
  {
    std::unique_lock lock(gate_mutex_);
    gate_cv_.wait(lock, [&] { return scoring_ < slots; });
    ++scoring_;
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<BatchEntry> entries;
  try {
    entries = score_batch(items, *index, reward);
  } catch (...) {
    release_slot();
    throw;
  }
  const auto scored_at = std::chrono::steady_clock::now();
  release_slot();
  Json scores = Json::array();
  Json diagnostics = Json::array();
  std::size_t known = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    Json d;
    d["index"] = i;
    d["sample_id"] = e.sample_id;
    if (e.score) {
      ++known;
      scores.push_back(e.score->to_json());
      d["status"] = 200;
      d["parse_status"] = e.score->parse_status;
      d["warnings"] = e.score->warnings;
    } else {
      scores.push_back(nullptr);
      d["status"] = e.error.starts_with("UnknownSample") ? 404 : 422;
      d["error"] = e.error;
    }
    diagnostics.push_back(std::move(d));
  }
  Json response;
  response["scores"] = std::move(scores);
  response["diagnostics"] = std::move(diagnostics);
  Reply reply;
  reply.status = (!entries.empty() && known == 0) ? 404 : 200;
  reply.body = response.dump();
  reply.scoring_micros = std::chrono::duration_cast<std::chrono::microseconds>(scored_at - t0).count();
  served_.fetch_add(1);
  return reply;
}

void RewardService::install_routes() {
  const std::size_t threads = std::max<std::size_t>(config_.connection_threads, 1);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(config_.max_body_bytes);
  server_->set_keep_alive_max_count(100000);

  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    auto r = handle_health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server_->Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
    auto r = handle_score(req.body);
    res.status = r.status;
    res.set_header("X-Scoring-Micros", std::to_string(r.scoring_micros));
    res.set_content(r.body, "application/json");
  });
}

int RewardService::start(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void RewardService::listen(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  server_->listen_after_bind();
}

void RewardService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace m2io
