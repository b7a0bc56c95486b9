#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "qsym/core.hpp"
#include "qsym/predictor.hpp"

namespace qsym {

/// Observed window forwarded alongside its prediction batch.
struct WindowMsg {
  std::uint64_t window_id = 0;
  ObservationWindow window;
};

/// Explicit completion marker; replay publishes it after the last event so
/// downstream nodes terminate deterministically instead of timing out.
struct EndOfStream {};

using Message = std::variant<TrackSample, WindowMsg, PredictionBatch, EndOfStream>;

/// In-process typed pub/sub bus. Every subscriber owns a FIFO queue and sees
/// the messages of its topic in exact publish order. A bounded capacity
/// makes publishers block on slow subscribers (lossless backpressure); a
/// capacity of zero means unbounded queues for single-threaded schedulers.
class Bus {
 public:
  class Subscription {
   public:
    /// Blocking pop, for threaded node loops.
    Message pop() {
      std::unique_lock<std::mutex> lock(mu_);
      cv_nonempty_.wait(lock, [&] { return !queue_.empty(); });
      Message msg = std::move(queue_.front());
      queue_.pop_front();
      cv_space_.notify_one();
      return msg;
    }

    /// Non-blocking pop, for round-robin schedulers.
    bool try_pop(Message& out) {
      std::lock_guard<std::mutex> lock(mu_);
      if (queue_.empty()) return false;
      out = std::move(queue_.front());
      queue_.pop_front();
      cv_space_.notify_one();
      return true;
    }

    std::size_t pending() const {
      std::lock_guard<std::mutex> lock(mu_);
      return queue_.size();
    }

   private:
    friend class Bus;
    void push(Message msg, std::size_t capacity) {
      std::unique_lock<std::mutex> lock(mu_);
      if (capacity > 0) {
        cv_space_.wait(lock, [&] { return queue_.size() < capacity; });
      }
      queue_.push_back(std::move(msg));
      cv_nonempty_.notify_one();
    }

    mutable std::mutex mu_;
    std::condition_variable cv_nonempty_;
    std::condition_variable cv_space_;
    std::deque<Message> queue_;
  };

  using SubscriptionPtr = std::shared_ptr<Subscription>;

  explicit Bus(std::size_t queue_capacity = 0) : capacity_(queue_capacity) {}

  SubscriptionPtr subscribe(const std::string& topic) {
    Topic* entry = nullptr;
    {
      std::lock_guard<std::mutex> lock(mu_);
      entry = &topics_[topic];
    }
    auto sub = std::make_shared<Subscription>();
    std::lock_guard<std::mutex> topic_lock(entry->order_mu);
    entry->subscribers.push_back(sub);
    return sub;
  }

  /// Fan-out to every subscriber of the topic. The per-topic lock makes the
  /// delivery order identical across subscribers. A topic carries one
  /// message type, fixed on first publish.
  void publish(const std::string& topic, Message msg) {
    Topic* entry = nullptr;
    {
      std::lock_guard<std::mutex> lock(mu_);
      entry = &topics_[topic];
    }
    std::lock_guard<std::mutex> topic_lock(entry->order_mu);
    if (entry->type_tag == kUnsetTag) {
      entry->type_tag = msg.index();
    } else if (entry->type_tag != msg.index() &&
               !std::holds_alternative<EndOfStream>(msg)) {
      throw ContractError("bus: message type mismatch on topic '" + topic + "'");
    }
    for (const SubscriptionPtr& sub : entry->subscribers) {
      sub->push(msg, capacity_);
    }
  }

 private:
  static constexpr std::size_t kUnsetTag = static_cast<std::size_t>(-1);

  struct Topic {
    std::mutex order_mu;
    std::size_t type_tag = kUnsetTag;
    std::vector<SubscriptionPtr> subscribers;
  };

  std::size_t capacity_;
  std::mutex mu_;
  std::map<std::string, Topic> topics_;
};

inline constexpr const char* kRawTracksTopic = "raw_tracks";
inline constexpr const char* kPredictionsTopic = "predictions";
inline constexpr const char* kGroundTruthTopic = "ground_truth";

}  // namespace qsym
