#pragma once

#include <random>

#include "mfgraph/markov_graph.hpp"

namespace mfgraph::fixtures {

/// Random reversible chain: positive pi, symmetric weights on a connected
/// graph (a ring plus random chords).
inline MarkovGraph random_reversible(int n, std::mt19937& rng, double density = 0.5) {
    std::uniform_real_distribution<double> u(0.2, 1.0);
    std::bernoulli_distribution chord(density);
    Vector pi(n);
    for (int i = 0; i < n; ++i) pi(i) = u(rng);
    pi /= pi.sum();
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool ring = j == i + 1 || (i == 0 && j == n - 1);
            if (ring || chord(rng)) w(i, j) = w(j, i) = 0.3 * u(rng);
        }
    }
    return build_from_weights(w, pi);
}

inline Vector random_density(int n, std::mt19937& rng, double floor = 0.05) {
    std::uniform_real_distribution<double> u(floor, 1.0);
    Vector p(n);
    for (int i = 0; i < n; ++i) p(i) = u(rng);
    return p / p.sum();
}

inline MarkovGraph two_state(double omega = 1.0) {
    Matrix w(2, 2);
    w << 0.0, omega, omega, 0.0;
    return build_from_weights(w, Vector::Constant(2, 0.5));
}

}  // namespace mfgraph::fixtures
