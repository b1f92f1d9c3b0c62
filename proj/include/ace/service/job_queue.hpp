#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ace::service {

/// Raised when the pending queue is at capacity.
class QueueFullError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QueueState {
  std::vector<std::string> pending;
  std::vector<std::string> active;
  int slots = 0;
  std::size_t capacity = 0;
};

/// FIFO of run ids executed by one worker thread per compute slot.
class JobQueue {
 public:
  using Executor = std::function<void(const std::string&)>;

  /// A paused queue accepts jobs but starts none until resume().
  JobQueue(int slots, std::size_t capacity, Executor executor, bool paused = false);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  /// Throws QueueFullError when `capacity` ids are already pending.
  void push(const std::string& id);
  /// Throws QueueFullError unless a push would currently succeed.
  void check_capacity() const;

  void resume();

  QueueState state() const;
  /// Blocks until nothing is pending or active.
  void wait_idle();
  /// Lets active jobs finish, drops pending ones, joins the workers.
  void stop();

 private:
  void work();

  Executor executor_;
  int slots_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<std::string> pending_;
  std::vector<std::string> active_;
  bool paused_ = false;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace ace::service
