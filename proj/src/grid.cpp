#include "tmflow/grid.hpp"

#include <cmath>

#include "tmflow/error.hpp"

namespace tmflow {

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& v : violations) msg += "\n  - " + v;
          return msg;
      }()),
      violations_(std::move(violations)) {}

double dot(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += a[k] * b[k];
    return s;
}

double dist2(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

void SphereMapField::normalize() {
    for (std::size_t p = 0; p < nodes(); ++p) {
        double* v = data.data() + p * dim;
        const double n = std::sqrt(dot(v, v, dim));
        if (!(n > 0.0) || !std::isfinite(n)) throw NumericalAbort("map field has a zero or non-finite node");
        for (std::size_t k = 0; k < dim; ++k) v[k] /= n;
    }
}

double SphereMapField::max_norm_defect() const {
    double worst = 0.0;
    for (std::size_t p = 0; p < nodes(); ++p) {
        const double* v = data.data() + p * dim;
        worst = std::max(worst, std::abs(std::sqrt(dot(v, v, dim)) - 1.0));
    }
    return worst;
}

bool SphereMapField::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace tmflow
