#include "stabgen/task_pool.hpp"

#include <chrono>

namespace stabgen {

TaskPool::TaskPool(std::size_t workers) {
    for (std::size_t i = 1; i < workers; ++i) {
        threads_.emplace_back([this] { worker_loop(); });
    }
}

TaskPool::~TaskPool() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) {
        t.join();
    }
}

void TaskPool::submit(TaskGroup& group, std::function<void()> task) {
    group.pending_.fetch_add(1);
    {
        std::lock_guard lock(mutex_);
        queue_.push_back({&group, std::move(task)});
    }
    cv_.notify_one();
}

bool TaskPool::run_one(std::unique_lock<std::mutex>& lock) {
    if (queue_.empty()) {
        return false;
    }
    Item item = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    try {
        item.task();
    } catch (...) {
        std::lock_guard guard(item.group->error_mutex_);
        if (!item.group->error_) {
            item.group->error_ = std::current_exception();
        }
    }
    lock.lock();
    // Decrement under the pool lock so a waiter cannot miss the notification.
    item.group->pending_.fetch_sub(1);
    cv_.notify_all();
    return true;
}

void TaskPool::wait(TaskGroup& group) {
    std::unique_lock lock(mutex_);
    while (group.pending_.load() > 0) {
        if (!run_one(lock)) {
            cv_.wait_for(lock, std::chrono::milliseconds(5));
        }
    }
    lock.unlock();
    std::lock_guard guard(group.error_mutex_);
    if (group.error_) {
        auto e = group.error_;
        group.error_ = nullptr;
        std::rethrow_exception(e);
    }
}

void TaskPool::worker_loop() {
    std::unique_lock lock(mutex_);
    while (true) {
        if (run_one(lock)) {
            continue;
        }
        if (stopping_) {
            return;
        }
        cv_.wait(lock);
    }
}

}  // namespace stabgen
