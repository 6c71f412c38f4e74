#include "secokd/numerics/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace secokd::numerics {

namespace {

int clamp_workers(int n) { return std::max(1, std::min(n, 16)); }

int initial_workers() {
  if (const char* env = std::getenv("SECOKD_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return clamp_workers(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return clamp_workers(hw == 0 ? 1 : static_cast<int>(hw));
}

std::atomic<int> g_workers{initial_workers()};
thread_local bool t_inside_parallel = false;

struct Pool {
  struct Job {
    const std::function<void(std::int64_t, std::int64_t)>* body = nullptr;
    std::int64_t begin = 0;
    std::int64_t end = 0;
  };

  std::mutex mu;
  std::mutex run_mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  std::vector<std::thread> threads;
  std::vector<Job> jobs;
  size_t next_job = 0;
  size_t pending = 0;
  bool stop = false;

  Pool() {
    const int n = clamp_workers(std::max(1, static_cast<int>(std::thread::hardware_concurrency())));
    for (int i = 0; i < n - 1; ++i) {
      threads.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu);
      stop = true;
    }
    cv_work.notify_all();
    for (auto& t : threads) t.join();
  }

  void worker_loop() {
    t_inside_parallel = true;
    for (;;) {
      Job job;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv_work.wait(lock, [this] { return stop || next_job < jobs.size(); });
        if (stop) return;
        job = jobs[next_job++];
      }
      (*job.body)(job.begin, job.end);
      {
        std::lock_guard<std::mutex> lock(mu);
        if (--pending == 0) cv_done.notify_all();
      }
    }
  }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body,
           int nchunks) {
    // One top-level parallel_for at a time; nested calls never reach here.
    std::lock_guard<std::mutex> run_lock(run_mu);
    std::vector<Job> local;
    const std::int64_t chunk = (n + nchunks - 1) / nchunks;
    for (std::int64_t b = 0; b < n; b += chunk) {
      local.push_back(Job{&body, b, std::min(n, b + chunk)});
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      jobs = std::move(local);
      next_job = 0;
      pending = jobs.size();
    }
    cv_work.notify_all();
    // The calling thread pitches in.
    t_inside_parallel = true;
    for (;;) {
      Job job;
      {
        std::unique_lock<std::mutex> lock(mu);
        if (next_job >= jobs.size()) break;
        job = jobs[next_job++];
      }
      (*job.body)(job.begin, job.end);
      {
        std::lock_guard<std::mutex> lock(mu);
        if (--pending == 0) cv_done.notify_all();
      }
    }
    {
      std::unique_lock<std::mutex> lock(mu);
      cv_done.wait(lock, [this] { return pending == 0; });
    }
    t_inside_parallel = false;
  }
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int worker_count() { return g_workers.load(); }

void set_worker_count(int n) { g_workers.store(clamp_workers(n)); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int nw = worker_count();
  if (nw <= 1 || n == 1 || t_inside_parallel) {
    body(0, n);
    return;
  }
  pool().run(n, body, nw);
}

}  // namespace secokd::numerics
