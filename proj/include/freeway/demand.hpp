#pragma once

// Piecewise-linear demand part f of a cell's fundamental diagram, together with
// the validator for the structural assumption (H) and the constants that the
// stability analysis reads off it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "freeway/errors.hpp"

namespace freeway {

/// Absolute tolerance for every floating-point structural comparison.
inline constexpr double kStructuralTolerance = 1e-9;

struct Breakpoint {
    double density = 0.0;  // z [veh]
    double flow = 0.0;     // f(z) [veh/step]

    friend bool operator==(const Breakpoint&, const Breakpoint&) = default;
};

/// Constants attached to a demand function that satisfies (H).
struct DemandCertificate {
    double L = 0.0;            // 1 - min slope on (0, smooth_bound)
    double lambda = 0.0;       // contraction of z - f(z) near equilibrium; equals L
    double G = 0.0;            // max slope on (0, smooth_bound), capped at 1
    double theta_lower = 0.0;  // f(z) >= theta_lower * z on [0, a]
    double critical_flow = 0.0;  // f(critical density)
};

class PiecewiseLinearDemand {
public:
    PiecewiseLinearDemand() = default;

    /// Structural checks only (ordering, origin, bounds of the two densities);
    /// assumption (H) itself is checked by validate_H().
    PiecewiseLinearDemand(std::vector<Breakpoint> breakpoints, double critical, double smooth_bound)
        : breakpoints_(std::move(breakpoints)), critical_(critical), smooth_bound_(smooth_bound) {
        if (breakpoints_.size() < 2) {
            throw ValidationError("demand needs at least two breakpoints");
        }
        for (const auto& bp : breakpoints_) {
            if (!std::isfinite(bp.density) || !std::isfinite(bp.flow)) {
                throw ValidationError("demand breakpoint is not finite");
            }
        }
        if (breakpoints_.front().density != 0.0 || breakpoints_.front().flow != 0.0) {
            throw ValidationError("demand must start at (0, 0)");
        }
        for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
            if (!(breakpoints_[k].density > breakpoints_[k - 1].density)) {
                std::ostringstream os;
                os << "demand breakpoint densities must be strictly increasing (breakpoint "
                   << k + 1 << ")";
                throw ValidationError(os.str());
            }
        }
        if (!(smooth_bound_ > 0.0) || smooth_bound_ > critical_ + kStructuralTolerance ||
            critical_ > jam_density() + kStructuralTolerance) {
            throw ValidationError("demand densities must satisfy 0 < smooth_bound <= critical <= jam density");
        }
    }

    [[nodiscard]] const std::vector<Breakpoint>& breakpoints() const noexcept { return breakpoints_; }
    [[nodiscard]] double critical_density() const noexcept { return critical_; }
    [[nodiscard]] double smooth_bound() const noexcept { return smooth_bound_; }
    [[nodiscard]] double jam_density() const noexcept { return breakpoints_.back().density; }

    friend bool operator==(const PiecewiseLinearDemand&, const PiecewiseLinearDemand&) = default;

private:
    std::vector<Breakpoint> breakpoints_;
    double critical_ = 0.0;
    double smooth_bound_ = 0.0;
};

namespace detail {

inline double segment_slope(const Breakpoint& lo, const Breakpoint& hi) {
    return (hi.flow - lo.flow) / (hi.density - lo.density);
}

// Linear interpolation on one segment; exact at both ends.
inline double interpolate(const Breakpoint& lo, const Breakpoint& hi, double z) {
    if (z == lo.density) return lo.flow;
    if (z == hi.density) return hi.flow;
    return lo.flow + (hi.flow - lo.flow) * ((z - lo.density) / (hi.density - lo.density));
}

}  // namespace detail

/// f(z) by linear interpolation between breakpoints.
[[nodiscard]] inline double eval_demand(const PiecewiseLinearDemand& fd, double z) {
    const auto& bps = fd.breakpoints();
    if (!(z >= 0.0) || z > fd.jam_density()) {
        std::ostringstream os;
        os << "density " << z << " outside demand domain [0, " << fd.jam_density() << "]";
        throw DomainError(os.str());
    }
    auto hi = std::upper_bound(bps.begin(), bps.end(), z,
                               [](double v, const Breakpoint& bp) { return v < bp.density; });
    if (hi == bps.end()) return bps.back().flow;
    return detail::interpolate(*(hi - 1), *hi, z);
}

/// The unique z in [0, critical] with f(z) = flow, solved segment by segment on
/// the increasing branch.
[[nodiscard]] inline double invert_demand_increasing(const PiecewiseLinearDemand& fd, double flow) {
    const double delta = fd.critical_density();
    const double top = eval_demand(fd, delta);
    if (!(flow >= 0.0) || flow > top) {
        std::ostringstream os;
        os << "flow " << flow << " not attainable on the increasing demand branch (max " << top << ")";
        throw InfeasibleFlowError(os.str());
    }
    if (flow == top) return delta;
    const auto& bps = fd.breakpoints();
    for (std::size_t k = 0; k + 1 < bps.size() && bps[k].density < delta; ++k) {
        const Breakpoint lo = bps[k];
        const Breakpoint hi = bps[k + 1].density <= delta
                                  ? bps[k + 1]
                                  : Breakpoint{delta, detail::interpolate(bps[k], bps[k + 1], delta)};
        if (flow == lo.flow) return lo.density;
        if (flow == hi.flow) return hi.density;
        if (flow < hi.flow) {
            return lo.density + (flow - lo.flow) * ((hi.density - lo.density) / (hi.flow - lo.flow));
        }
    }
    return delta;
}

/// Checks assumption (H) and extracts the demand constants. Throws
/// ValidationError naming the segment and the failed condition.
[[nodiscard]] inline DemandCertificate validate_H(const PiecewiseLinearDemand& fd) {
    const auto& bps = fd.breakpoints();
    const double delta = fd.critical_density();
    const double smooth = fd.smooth_bound();
    const double tol = kStructuralTolerance;

    auto fail = [](std::size_t seg, const Breakpoint& lo, const Breakpoint& hi, const std::string& why) {
        std::ostringstream os;
        os << "assumption (H) violated on segment " << seg << " [" << lo.density << ", " << hi.density
           << "]: " << why;
        throw ValidationError(os.str());
    };

    double min_smooth_slope = std::numeric_limits<double>::infinity();
    double max_smooth_slope = -std::numeric_limits<double>::infinity();

    for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
        const Breakpoint& lo = bps[k];
        const Breakpoint& hi = bps[k + 1];
        const double slope = detail::segment_slope(lo, hi);
        const std::size_t seg = k + 1;

        if (lo.density < delta - tol) {
            // Part of the segment lies on the increasing branch; the portion past delta
            // (if any) must be non-increasing, which a single positive slope cannot be.
            if (slope > 1.0 + tol) {
                std::ostringstream os;
                os << "slope " << slope << " exceeds 1";
                fail(seg, lo, hi, os.str());
            }
            if (!(slope > tol)) fail(seg, lo, hi, "demand must be strictly increasing below the critical density");
            if (hi.density > delta + tol) fail(seg, lo, hi, "demand must be non-increasing above the critical density");
        } else if (slope > tol) {
            fail(seg, lo, hi, "demand must be non-increasing above the critical density");
        }

        if (lo.density < smooth - tol) {
            min_smooth_slope = std::min(min_smooth_slope, slope);
            max_smooth_slope = std::max(max_smooth_slope, slope);
        }
    }

    double theta = std::numeric_limits<double>::infinity();
    auto check_point = [&](double z, double f) {
        if (!(f > 0.0) || !(f < z - tol)) {
            std::ostringstream os;
            os << "assumption (H) violated at z = " << z << ": need 0 < f(z) < z, got f(z) = " << f;
            throw ValidationError(os.str());
        }
        theta = std::min(theta, f / z);
    };
    for (std::size_t k = 1; k < bps.size(); ++k) check_point(bps[k].density, bps[k].flow);
    check_point(smooth, eval_demand(fd, smooth));
    check_point(delta, eval_demand(fd, delta));

    DemandCertificate cert;
    cert.L = 1.0 - min_smooth_slope;
    cert.lambda = cert.L;
    cert.G = std::min(1.0, max_smooth_slope);
    cert.theta_lower = theta;
    cert.critical_flow = eval_demand(fd, delta);
    if (!(cert.L > 0.0 && cert.L < 1.0)) {
        throw ValidationError("assumption (H) violated: smooth-region slopes must lie in (0, 1)");
    }
    return cert;
}

}  // namespace freeway
