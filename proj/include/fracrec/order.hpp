#pragma once

#include <stdexcept>
#include <string>

namespace fracrec {

// Fractional order s strictly inside (0,1). Values within 1e-6 of the
// endpoints are rejected since Gamma(s), Gamma(1-s) blow up there.
class Order {
public:
    explicit Order(double s) : s_(s) {
        constexpr double margin = 1e-6;
        if (!(s > margin && s < 1.0 - margin))
            throw std::domain_error("Order: s must lie in (" + std::to_string(margin) +
                                    ", " + std::to_string(1.0 - margin) + "), got s=" +
                                    std::to_string(s));
    }
    double value() const { return s_; }

private:
    double s_;
};

} // namespace fracrec
