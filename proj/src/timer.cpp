#include "kiloland/timer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

#include "kiloland/error.hpp"

namespace kiloland::perf {

TimerTree::TimerTree() {
  nodes_.push_back(Node{});
  stack_.push_back(0);
  started_.push_back(std::chrono::steady_clock::now());
}

std::size_t TimerTree::child(std::size_t parent, std::string_view name) {
  for (auto c : nodes_[parent].children) {
    if (nodes_[c].name == name) return c;
  }
  if (name.empty() || name.find('/') != std::string_view::npos) {
    throw ValidationError(fmt::format("timer: invalid region name '{}'", name));
  }
  nodes_.push_back(Node{std::string(name), 0.0, 0, parent, {}});
  nodes_[parent].children.push_back(nodes_.size() - 1);
  return nodes_.size() - 1;
}

void TimerTree::start(std::string_view name) {
  const auto c = child(stack_.back(), name);
  stack_.push_back(c);
  started_.push_back(std::chrono::steady_clock::now());
}

void TimerTree::stop(std::string_view name) {
  if (stack_.size() < 2 || nodes_[stack_.back()].name != name) {
    throw ValidationError(fmt::format("timer: stop('{}') does not match the open region", name));
  }
  auto& n = nodes_[stack_.back()];
  n.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - started_.back()).count();
  ++n.calls;
  stack_.pop_back();
  started_.pop_back();
}

void TimerTree::add(std::string_view name, double seconds) {
  auto& n = nodes_[child(stack_.back(), name)];
  n.seconds += seconds;
  ++n.calls;
}

std::string TimerTree::path_of(std::size_t i) const {
  std::string p = nodes_[i].name;
  for (auto at = nodes_[i].parent; at != 0; at = nodes_[at].parent) p = nodes_[at].name + "/" + p;
  return p;
}

std::size_t TimerTree::find(std::string_view path) const {
  std::size_t at = 0;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const auto head = path.substr(0, slash);
    const auto& kids = nodes_[at].children;
    const auto it = std::find_if(kids.begin(), kids.end(), [&](auto c) { return nodes_[c].name == head; });
    if (it == kids.end()) return 0;
    at = *it;
    path = slash == std::string_view::npos ? std::string_view{} : path.substr(slash + 1);
  }
  return at;
}

double TimerTree::seconds(std::string_view path) const {
  const auto i = find(path);
  return i == 0 ? 0.0 : nodes_[i].seconds;
}

std::int64_t TimerTree::calls(std::string_view path) const {
  const auto i = find(path);
  return i == 0 ? 0 : nodes_[i].calls;
}

std::vector<std::string> TimerTree::paths() const {
  std::vector<std::string> out;
  // Depth-first, children in creation order.
  std::vector<std::size_t> todo(nodes_[0].children.rbegin(), nodes_[0].children.rend());
  while (!todo.empty()) {
    const auto i = todo.back();
    todo.pop_back();
    out.push_back(path_of(i));
    todo.insert(todo.end(), nodes_[i].children.rbegin(), nodes_[i].children.rend());
  }
  return out;
}

std::vector<MergedRegion> merge(const std::vector<TimerTree>& trees) {
  std::vector<MergedRegion> out;
  std::map<std::string, std::size_t> index;
  for (const auto& t : trees) {
    for (const auto& p : t.paths()) {
      auto [it, fresh] = index.try_emplace(p, out.size());
      if (fresh) out.push_back(MergedRegion{p, 0, 0, 0.0, 0.0, 0.0});
      auto& r = out[it->second];
      const double s = t.seconds(p);
      r.max = r.workers == 0 ? s : std::max(r.max, s);
      r.min = r.workers == 0 ? s : std::min(r.min, s);
      r.mean += s;
      r.calls += t.calls(p);
      ++r.workers;
    }
  }
  for (auto& r : out) r.mean /= r.workers;
  return out;
}

std::string render(const std::vector<MergedRegion>& regions) {
  std::string s = fmt::format("{:<40} {:>8} {:>10} {:>12} {:>12} {:>12}\n", "region", "workers", "calls", "max_s",
                              "min_s", "mean_s");
  for (const auto& r : regions) {
    const auto depth = static_cast<std::size_t>(std::count(r.path.begin(), r.path.end(), '/'));
    const auto leaf = r.path.substr(r.path.rfind('/') == std::string::npos ? 0 : r.path.rfind('/') + 1);
    s += fmt::format("{:<40} {:>8} {:>10} {:>12.6f} {:>12.6f} {:>12.6f}\n", std::string(2 * depth, ' ') + leaf, r.workers,
                     r.calls, r.max, r.min, r.mean);
  }
  return s;
}

}  // namespace kiloland::perf
