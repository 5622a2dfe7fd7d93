#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "m2io/reward.hpp"

namespace httplib {
class Server;
}

namespace m2io {

struct ServiceConfig {
  RewardConfig reward;
  std::size_t workers = 8;               // batches scored concurrently
  std::size_t connection_threads = 64;   // open client connections served at once
  std::size_t max_body_bytes = 64u << 20;
  std::size_t max_items = 4096;
};

/// HTTP front end for score_batch.
///
///   GET  /v1/health  -> {"status":"ok","samples":N}
///   POST /v1/score   {"items":[{"sample_id","completion"}],"alpha"?}
///                    -> {"scores":[{r_format,r_rec,r_pos,r_answer,r_total}|null],
///                        "diagnostics":[{index,sample_id,status,...}]}
///
/// 400 on a malformed request, 503 before a dataset is loaded, 404 when no
/// item names a known sample (unknown items inside a mixed batch are reported
/// per item with a null score). Every scoring response carries the
/// service-side scoring time in X-Scoring-Micros.
class RewardService {
 public:
  explicit RewardService(ServiceConfig config = {});
  ~RewardService();
  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  /// Replaces the dataset atomically; in-flight requests keep the old one.
  void load(std::shared_ptr<const DatasetIndex> index);

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port. Throws IoError when binding fails.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  std::size_t requests_served() const noexcept { return served_.load(); }

  /// The request handler without the transport, for tests and benchmarks.
  struct Reply {
    int status = 200;
    std::string body;
    long long scoring_micros = 0;
  };
  Reply handle_score(const std::string& body) const;
  Reply handle_health() const;

 private:
  void install_routes();
  std::shared_ptr<const DatasetIndex> snapshot() const;
  void release_slot() const;

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::shared_ptr<const DatasetIndex> index_;
  mutable std::atomic<std::size_t> served_{0};
  mutable std::mutex gate_mutex_;
  mutable std::condition_variable gate_cv_;
  mutable std::size_t scoring_ = 0;
};

}  // namespace m2io
