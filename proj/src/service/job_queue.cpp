#include "ace/service/job_queue.hpp"

#include "ace/core/errors.hpp"

#include <algorithm>

namespace ace::service {

JobQueue::JobQueue(int slots, std::size_t capacity, Executor executor, bool paused)
    : executor_(std::move(executor)), slots_(slots), capacity_(capacity), paused_(paused) {
  require(slots >= 1, "compute slots must be at least 1");
  require(capacity >= 1, "queue capacity must be at least 1");
  for (int i = 0; i < slots; ++i) workers_.emplace_back([this] { work(); });
}

JobQueue::~JobQueue() { stop(); }

void JobQueue::check_capacity() const {
  std::lock_guard lock(mutex_);
  if (pending_.size() >= capacity_)
    throw QueueFullError("job queue is full (" + std::to_string(capacity_) + " pending)");
}

void JobQueue::push(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    require(!stopping_, "job queue is stopped");
    if (pending_.size() >= capacity_)
      throw QueueFullError("job queue is full (" + std::to_string(capacity_) + " pending)");
    require(std::find(pending_.begin(), pending_.end(), id) == pending_.end() &&
                std::find(active_.begin(), active_.end(), id) == active_.end(),
            "run " + id + " is already queued");
    pending_.push_back(id);
  }
  wake_.notify_one();
}

void JobQueue::resume() {
  {
    std::lock_guard lock(mutex_);
    paused_ = false;
  }
  wake_.notify_all();
}

QueueState JobQueue::state() const {
  std::lock_guard lock(mutex_);
  return {{pending_.begin(), pending_.end()}, active_, slots_, capacity_};
}

void JobQueue::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [&] { return pending_.empty() && active_.empty(); });
}

void JobQueue::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
    pending_.clear();
  }
  wake_.notify_all();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
  idle_.notify_all();
}

void JobQueue::work() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stopping_ || (!paused_ && !pending_.empty()); });
      if (stopping_) return;
      id = pending_.front();
      pending_.pop_front();
      active_.push_back(id);
    }
    executor_(id);
    {
      std::lock_guard lock(mutex_);
      active_.erase(std::find(active_.begin(), active_.end(), id));
    }
    idle_.notify_all();
  }
}

}  // namespace ace::service
