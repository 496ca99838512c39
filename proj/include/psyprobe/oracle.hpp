#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "psyprobe/image.hpp"

namespace psyprobe {

/// Class-id -> probability for one oracle query. Iteration order is
/// lexicographic by class id.
class ClassProbabilities {
 public:
  ClassProbabilities() = default;
  explicit ClassProbabilities(std::map<std::string, double> entries,
                              std::uint64_t query_count_hint = 0);

  const std::map<std::string, double>& entries() const { return entries_; }
  std::uint64_t query_count_hint() const { return query_count_hint_; }
  void set_query_count_hint(std::uint64_t n) { query_count_hint_ = n; }

  /// Throws ClassError for an unknown class.
  double at(const std::string& class_id) const;
  bool contains(const std::string& class_id) const { return entries_.contains(class_id); }
  std::size_t size() const { return entries_.size(); }
  double sum() const;

  /// Highest probability; ties go to the lexicographically smallest id.
  const std::string& top1() const;
  /// True when some class other than class_id is strictly more probable.
  bool overtaken(const std::string& class_id) const;

  friend bool operator==(const ClassProbabilities&, const ClassProbabilities&) = default;

 private:
  std::map<std::string, double> entries_;
  std::uint64_t query_count_hint_ = 0;
};

/// Query allowance shared by every user of one oracle. Thread-safe.
class OracleBudget {
 public:
  static constexpr std::uint64_t kUnlimited = std::numeric_limits<std::uint64_t>::max();

  explicit OracleBudget(std::uint64_t max_queries = kUnlimited) : max_queries_(max_queries) {}

  /// Reserves one query and returns the new consumed count; throws BudgetError
  /// when the allowance is spent.
  std::uint64_t consume();
  std::uint64_t consumed() const { return consumed_.load(); }
  std::uint64_t max_queries() const { return max_queries_; }
  std::uint64_t remaining() const { return max_queries_ - consumed_.load(); }
  void set_max_queries(std::uint64_t max_queries) { max_queries_ = max_queries; }

 private:
  std::uint64_t max_queries_;
  std::atomic<std::uint64_t> consumed_{0};
};

struct InputDims {
  int width = 0;
  int height = 0;
  int channels = 0;
  friend bool operator==(const InputDims&, const InputDims&) = default;
};

/// A classifier seen only through image -> class probabilities.
///
/// classify() validates dims, charges the budget and then calls query().
/// Implementations must be safe to call from several threads at once and must
/// not keep state between queries.
class Oracle {
 public:
  explicit Oracle(std::uint64_t max_queries = OracleBudget::kUnlimited) : budget_(max_queries) {}
  virtual ~Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  ClassProbabilities classify(const Image& img);
  double probability_of(const Image& img, const std::string& class_id);

  virtual InputDims input_dims() const = 0;
  virtual std::string id() const = 0;

  OracleBudget& budget() { return budget_; }
  const OracleBudget& budget() const { return budget_; }

 protected:
  virtual ClassProbabilities query(const Image& img) const = 0;

 private:
  OracleBudget budget_;
};

/// Builds a canvas-sized image of the oracle's channel count.
Image black_input(const Oracle& oracle);

}  // namespace psyprobe
