#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace freeway {

/// Per-cell numeric vector tagged with the quantity it carries, so densities,
/// inflows and priority parameters cannot be passed for one another.
/// Indexing is 0-based internally; all user-facing I/O is 1-based.
template <class Tag>
class CellVector {
public:
    CellVector() = default;
    explicit CellVector(std::size_t n, double value = 0.0) : values_(n, value) {}
    explicit CellVector(std::vector<double> values) : values_(std::move(values)) {}
    CellVector(std::initializer_list<double> values) : values_(values) {}

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] auto begin() noexcept { return values_.begin(); }
    [[nodiscard]] auto end() noexcept { return values_.end(); }
    [[nodiscard]] auto begin() const noexcept { return values_.begin(); }
    [[nodiscard]] auto end() const noexcept { return values_.end(); }

    [[nodiscard]] std::span<const double> view() const noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    friend bool operator==(const CellVector&, const CellVector&) = default;

private:
    std::vector<double> values_;
};

struct DensityTag {};
struct InflowTag {};
struct PriorityTag {};

/// Vehicle counts x_1..x_n [veh].
using State = CellVector<DensityTag>;
/// Attempted external inflows u_1..u_n [veh/step].
using Inflows = CellVector<InflowTag>;
/// Merge priority parameters d_2..d_n; entry k belongs to cell k+1 (0-based).
using Disturbance = CellVector<PriorityTag>;

/// Priority parameter acting at the upstream boundary of 0-based cell `cell` (cell >= 1).
[[nodiscard]] inline double priority_at(const Disturbance& d, std::size_t cell) {
    return d[cell - 1];
}

}  // namespace freeway
