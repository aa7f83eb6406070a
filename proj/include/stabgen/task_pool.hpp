#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stabgen {

/// Tasks that a caller waits for together. The first exception thrown by a member is rethrown
/// from TaskPool::wait.
class TaskGroup {
public:
    TaskGroup() = default;
    TaskGroup(const TaskGroup&) = delete;
    TaskGroup& operator=(const TaskGroup&) = delete;

private:
    friend class TaskPool;
    std::atomic<std::size_t> pending_{0};
    std::mutex error_mutex_;
    std::exception_ptr error_;
};

/// Work pool whose waits execute queued tasks instead of blocking, so tasks may submit and wait
/// on nested groups without starving the pool. With one worker everything runs on the caller.
class TaskPool {
public:
    explicit TaskPool(std::size_t workers);
    ~TaskPool();
    TaskPool(const TaskPool&) = delete;
    TaskPool& operator=(const TaskPool&) = delete;

    [[nodiscard]] std::size_t workers() const noexcept { return threads_.size() + 1; }

    void submit(TaskGroup& group, std::function<void()> task);
    void wait(TaskGroup& group);

private:
    struct Item {
        TaskGroup* group;
        std::function<void()> task;
    };

    bool run_one(std::unique_lock<std::mutex>& lock);
    void worker_loop();

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Item> queue_;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

}  // namespace stabgen
