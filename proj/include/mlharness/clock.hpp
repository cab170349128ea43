#pragma once

#include <algorithm>
#include <chrono>
#include <thread>

namespace mlh {

using Nanos = std::chrono::nanoseconds;

class Clock {
 public:
  virtual ~Clock() = default;

  // Monotonic, non-decreasing.
  virtual Nanos now() const = 0;
  virtual void sleep_until(Nanos t) = 0;
  virtual bool is_virtual() const noexcept = 0;

  void sleep_for(Nanos d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
 public:
  Nanos now() const override {
    return std::chrono::duration_cast<Nanos>(
        std::chrono::steady_clock::now().time_since_epoch());
  }
  void sleep_until(Nanos t) override {
    std::this_thread::sleep_until(std::chrono::steady_clock::time_point(t));
  }
  bool is_virtual() const noexcept override { return false; }
};

// Simulated time: sleeping advances the clock instantly. Not thread-safe;
// concurrent simulations use one VirtualClock per lane.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Nanos start = Nanos{0}) : now_(start) {}

  Nanos now() const override { return now_; }
  void sleep_until(Nanos t) override { now_ = std::max(now_, t); }
  bool is_virtual() const noexcept override { return true; }

 private:
  Nanos now_;
};

// Shared process-wide steady clock.
inline Clock& steady_clock() {
  static SteadyClock clock;
  return clock;
}

constexpr double to_seconds(Nanos d) noexcept { return static_cast<double>(d.count()) / 1e9; }

}  // namespace mlh
