#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace trackbench {

/// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    [[nodiscard]] std::vector<int> const & shape() const { return shape_; }
    [[nodiscard]] int dim(std::size_t i) const { return shape_.at(i); }
    [[nodiscard]] std::size_t rank() const { return shape_.size(); }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<double const> values() const { return data_; }
    [[nodiscard]] double * data() { return data_.data(); }
    [[nodiscard]] double const * data() const { return data_.data(); }
    double & operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// 3-D accessor for (channel, row, column) layouts.
    double & at(int c, int y, int x) { return data_[index3(c, y, x)]; }
    [[nodiscard]] double at(int c, int y, int x) const { return data_[index3(c, y, x)]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(Tensor const &, Tensor const &) = default;

    [[nodiscard]] std::string shape_string() const;

private:
    [[nodiscard]] std::size_t index3(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(shape_[2]) +
               static_cast<std::size_t>(x);
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t element_count(std::vector<int> const & shape);

} // namespace trackbench
