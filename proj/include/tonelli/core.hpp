// Shared small utilities: linear-algebra aliases, the quintic smoothstep used
// by every cutoff construction, deterministic hashing/RNG, and FD helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tonelli {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Third-order tensor T(k,i,j), stored as a vector of matrices indexed by k.
using Tensor3 = std::vector<Mat>;
// Fourth-order tensor T(a,b)(i,j).
using Tensor4 = std::vector<std::vector<Mat>>;

// Quintic smoothstep S(u) = 6u^5 - 15u^4 + 10u^3 on [0,1], clamped outside.
// S and S' vanish at 0, S = 1 and S' = 0 at 1, S'' = 0 at both ends, and
// integral_0^1 S = 1/2 exactly; all cutoffs below rely on these joints.
inline double smoothstep5(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
}

inline double smoothstep5_d1(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return ((30.0 * u - 60.0) * u + 30.0) * u * u;
}

inline double smoothstep5_d2(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return ((120.0 * u - 180.0) * u + 60.0) * u;
}

// Antiderivative of smoothstep5 with value 0 at u = 0.
inline double smoothstep5_int(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 0.5 + (u - 1.0);
  return ((u - 3.0) * u + 2.5) * u * u * u * u;
}

// FNV-1a, used to stamp configs into manifests deterministically.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// All random sampling in the library goes through a seeded engine so that
// identical configs reproduce identical output byte for byte.
inline std::mt19937_64 make_rng(std::uint64_t seed) {
  // splitmix64 scramble so that small seeds give well-mixed states
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return std::mt19937_64(z ^ (z >> 31));
}

struct FdSteps {
  // Velocity/momentum derivatives scale steps with 1 + |v|.
  static double first(double scale) { return 1e-6 * (1.0 + scale); }
  static double second(double scale) { return 1e-4 * (1.0 + scale); }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace tonelli
