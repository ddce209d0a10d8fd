#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kiloland::perf {

/// Nested wall-clock regions for one worker. Regions are identified by their
/// path ("run/lnd"); start/stop must nest.
class TimerTree {
 public:
  struct Node {
    std::string name;
    double seconds = 0.0;
    std::int64_t calls = 0;
    std::size_t parent = 0;
    std::vector<std::size_t> children;
  };

  TimerTree();

  void start(std::string_view name);
  void stop(std::string_view name);
  /// Adds time to a child of the current region without timing it.
  void add(std::string_view name, double seconds);

  /// Seconds of a region by path; 0 when absent.
  double seconds(std::string_view path) const;
  std::int64_t calls(std::string_view path) const;
  std::vector<std::string> paths() const;
  const std::vector<Node>& nodes() const { return nodes_; }
  bool idle() const { return stack_.size() == 1; }

  class Scope {
   public:
    Scope(TimerTree& t, std::string_view name) : t_(t), name_(name) { t_.start(name_); }
    ~Scope() { t_.stop(name_); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    TimerTree& t_;
    std::string name_;
  };

 private:
  std::size_t child(std::size_t parent, std::string_view name);
  std::string path_of(std::size_t i) const;
  std::size_t find(std::string_view path) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> stack_;
  std::vector<std::chrono::steady_clock::time_point> started_;
};

struct MergedRegion {
  std::string path;
  int workers = 0;  // workers that entered the region
  std::int64_t calls = 0;
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
};

/// Merges per-worker trees by region path, in first-seen order.
std::vector<MergedRegion> merge(const std::vector<TimerTree>& trees);
/// GPTL-like text table.
std::string render(const std::vector<MergedRegion>& regions);

}  // namespace kiloland::perf
