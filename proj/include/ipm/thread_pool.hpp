#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ipm {

/// Fixed set of workers that run one batch of tasks at a time; `run` returns
/// after every task of the batch has finished (the barrier).
class ThreadPool {
 public:
  explicit ThreadPool(unsigned workers) {
    for (unsigned i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { loop(); });
    }
  }
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;
  ~ThreadPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) {
      t.join();
    }
  }

  std::size_t size() const { return threads_.size(); }

  /// Runs all tasks; rethrows the first exception after the barrier.
  void run(const std::vector<std::function<void()>>& tasks) {
    if (threads_.empty()) {
      for (const auto& t : tasks) {
        t();
      }
      return;
    }
    {
      std::lock_guard lock(mu_);
      tasks_ = &tasks;
      next_ = 0;
      pending_ = tasks.size();
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    std::unique_lock lock(mu_);
    done_.wait(lock, [this] { return pending_ == 0; });
    tasks_ = nullptr;
    if (error_) {
      std::rethrow_exception(error_);
    }
  }

 private:
  void loop() {
    std::size_t seen = 0;
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return stop_ || (tasks_ && generation_ != seen && next_ < tasks_->size()); });
      if (stop_) {
        return;
      }
      while (tasks_ && next_ < tasks_->size()) {
        std::size_t i = next_++;
        const auto* batch = tasks_;
        lock.unlock();
        std::exception_ptr err;
        try {
          (*batch)[i]();
        } catch (...) {
          err = std::current_exception();
        }
        lock.lock();
        if (err && !error_) {
          error_ = err;
        }
        if (--pending_ == 0) {
          done_.notify_all();
        }
      }
      seen = generation_;
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_;
  const std::vector<std::function<void()>>* tasks_ = nullptr;
  std::size_t next_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

}  // namespace ipm
