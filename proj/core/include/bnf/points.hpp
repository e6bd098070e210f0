#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bnf/error.hpp"

namespace bnf {

/// A set of points in R^dim stored row-major.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(int dim, std::size_t count = 0)
      : dim_(dim), data_(static_cast<std::size_t>(dim) * count, 0.0) {}
  PointSet(int dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    detail::require(dim > 0 && data_.size() % static_cast<std::size_t>(dim) == 0,
                    "PointSet: data length is not a multiple of the dimension");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / static_cast<std::size_t>(dim_); }
  bool empty() const { return size() == 0; }

  std::span<const double> operator[](std::size_t i) const {
    return {data_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<double> operator[](std::size_t i) {
    return {data_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  void push_back(std::span<const double> p) {
    detail::require(static_cast<int>(p.size()) == dim_, "PointSet: point dimension mismatch");
    data_.insert(data_.end(), p.begin(), p.end());
  }
  void reserve(std::size_t count) { data_.reserve(count * static_cast<std::size_t>(dim_)); }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const PointSet&) const = default;

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

/// Pairs (w, u) of a conditional dataset: `given` holds the conditioning points,
/// `target` the points whose density is modeled.
struct ConditionalPoints {
  PointSet target;
  PointSet given;
};

}  // namespace bnf
