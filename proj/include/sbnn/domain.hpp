#pragma once

#include <sbnn/error.hpp>

#include <string>

namespace sbnn {

enum class DomainFlavor { zero_one, antipodal };

/// Per-layer binary weight domain.
///
/// zero_one:  w = (w' + alpha) * beta   for w' in {0, 1}
/// antipodal: w = w'' * beta + alpha    for w'' in {-1, +1}
class AffineBinaryDomain {
public:
    AffineBinaryDomain(float alpha, float beta, DomainFlavor flavor) : alpha_(alpha), beta_(beta), flavor_(flavor) {
        if (beta == 0.0F) throw DomainError("binary domain with beta == 0 collapses both weight values");
    }

    static AffineBinaryDomain zero_one(float alpha, float beta) { return {alpha, beta, DomainFlavor::zero_one}; }
    static AffineBinaryDomain antipodal(float alpha, float beta) { return {alpha, beta, DomainFlavor::antipodal}; }

    float alpha() const noexcept { return alpha_; }
    float beta() const noexcept { return beta_; }
    DomainFlavor flavor() const noexcept { return flavor_; }

    /// Real value of the weight encoded by `bit`: 1 is the one-valued (zero_one)
    /// or +1 (antipodal) weight.
    double value(bool bit) const noexcept {
        const double a = alpha_;
        const double b = beta_;
        if (flavor_ == DomainFlavor::zero_one) return ((bit ? 1.0 : 0.0) + a) * b;
        return (bit ? 1.0 : -1.0) * b + a;
    }

    friend bool operator==(const AffineBinaryDomain&, const AffineBinaryDomain&) = default;

private:
    float alpha_;
    float beta_;
    DomainFlavor flavor_;
};

inline double map_zero_one_to_real(int w_prime, const AffineBinaryDomain& domain) {
    if (domain.flavor() != DomainFlavor::zero_one) throw DomainError("map_zero_one_to_real needs a zero_one domain");
    if (w_prime != 0 && w_prime != 1) throw DomainError("zero_one weight must be 0 or 1, got " + std::to_string(w_prime));
    return domain.value(w_prime == 1);
}

/// Converts (alpha'', beta'') into the unique (alpha', beta') with
/// (w' + alpha') * beta' == w'' * beta'' + alpha'' for w' = (w'' + 1) / 2.
inline AffineBinaryDomain to_zero_one(const AffineBinaryDomain& antipodal) {
    if (antipodal.flavor() != DomainFlavor::antipodal) throw DomainError("to_zero_one expects an antipodal domain");
    const double a = antipodal.alpha();
    const double b = antipodal.beta();
    return AffineBinaryDomain::zero_one(static_cast<float>((a - b) / (2.0 * b)), static_cast<float>(2.0 * b));
}

}  // namespace sbnn
