#include "psyprobe/oracle.hpp"

#include <fmt/format.h>

#include "psyprobe/error.hpp"

namespace psyprobe {

ClassProbabilities::ClassProbabilities(std::map<std::string, double> entries,
                                       std::uint64_t query_count_hint)
    : entries_(std::move(entries)), query_count_hint_(query_count_hint) {
  if (entries_.empty()) throw ProtocolError("probability vector is empty");
  for (const auto& [id, p] : entries_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ProtocolError(fmt::format("probability {} for class '{}' outside [0,1]", p, id));
    }
  }
}

double ClassProbabilities::at(const std::string& class_id) const {
  const auto it = entries_.find(class_id);
  if (it == entries_.end()) throw ClassError(fmt::format("unknown class '{}'", class_id));
  return it->second;
}

double ClassProbabilities::sum() const {
  double s = 0.0;
  for (const auto& [id, p] : entries_) s += p;
  return s;
}

const std::string& ClassProbabilities::top1() const {
  if (entries_.empty()) throw EmptyError("top1 of an empty probability vector");
  auto best = entries_.begin();
  for (auto it = std::next(best); it != entries_.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

bool ClassProbabilities::overtaken(const std::string& class_id) const {
  const double p = at(class_id);
  for (const auto& [id, q] : entries_) {
    if (id != class_id && q > p) return true;
  }
  return false;
}

std::uint64_t OracleBudget::consume() {
  std::uint64_t current = consumed_.load();
  do {
    if (current >= max_queries_) {
      throw BudgetError(fmt::format("oracle budget of {} queries exhausted", max_queries_));
    }
  } while (!consumed_.compare_exchange_weak(current, current + 1));
  return current + 1;
}

ClassProbabilities Oracle::classify(const Image& img) {
  const InputDims dims = input_dims();
  if (img.width() != dims.width || img.height() != dims.height || img.channels() != dims.channels) {
    throw InputError(fmt::format("oracle '{}' expects {}x{}x{}, got {}x{}x{}", id(), dims.width,
                                 dims.height, dims.channels, img.width(), img.height(),
                                 img.channels()));
  }
  const std::uint64_t n = budget_.consume();
  ClassProbabilities probs = query(img);
  probs.set_query_count_hint(n);
  return probs;
}

double Oracle::probability_of(const Image& img, const std::string& class_id) {
  return classify(img).at(class_id);
}

Image black_input(const Oracle& oracle) {
  const InputDims dims = oracle.input_dims();
  return make_black_canvas(dims.width, dims.height, dims.channels);
}

}  // namespace psyprobe
