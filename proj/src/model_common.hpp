#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "segqual/models.hpp"

namespace segqual::detail {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline MetaModel blank_model(Family family, Task task, Eigen::Index dim) {
    MetaModel m;
    m.family = family;
    m.task = task;
    m.stats = Standardizer::identity(dim);
    return m;
}

}  // namespace segqual::detail
