#ifndef MBA_NEURAL_HPP
#define MBA_NEURAL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mba/world.hpp"  // for Vec

namespace mba::nn {

using mba::Vec;

struct Tensor {
  std::vector<std::size_t> shape;
  Vec data;
  Vec grad;

  std::size_t size() const { return data.size(); }
};

// Named parameter tensors with matching gradient slots. Iteration order is
// the lexical name order, which keeps updates and checks deterministic.
struct ParamStore {
  std::map<std::string, Tensor> params;

  // Registers (or returns the existing) tensor. Initialization is
  // uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), derived from
  // (seed, name) so creation order does not matter.
  Tensor& add(const std::string& name, std::vector<std::size_t> shape, std::uint64_t seed,
              double fan_in, double fan_out);
  Tensor& add_zeros(const std::string& name, std::vector<std::size_t> shape);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void zero_grad();
  std::size_t total_params() const;
};

// y = W x + b with W stored row-major (out x in).
struct Dense {
  Tensor* W = nullptr;
  Tensor* b = nullptr;
  std::size_t in = 0, out = 0;

  static Dense create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                      std::uint64_t seed);
  static Dense lookup(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out);

  Vec forward(const Vec& x) const;
  // Accumulates parameter grads; returns dx.
  Vec backward(const Vec& x, const Vec& dy) const;
};

struct FfnCache {
  Vec x;       // input
  Vec hidden;  // relu(W1 x + b1)
};

// Two-layer feed-forward network: y = W2 relu(W1 x + b1) + b2.
struct Ffn {
  Dense l1, l2;

  static Ffn create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out, std::uint64_t seed);
  static Ffn lookup(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out);

  Vec forward(const Vec& x, FfnCache* cache = nullptr) const;
  Vec backward(const FfnCache& cache, const Vec& dy) const;
};

// Sentinel for masked logits.
constexpr double kNegInf = -1e300;

// Max-subtracted softmax; entries at the kNegInf sentinel get probability 0.
Vec softmax(const Vec& z);
// dz given p = softmax(z) and dp.
Vec softmax_backward(const Vec& p, const Vec& dp);

double sigmoid(double z);

double cross_entropy(const Vec& p, std::size_t target_index);

struct FiniteDiffEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct FiniteDiffReport {
  std::vector<FiniteDiffEntry> entries;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central-difference check of analytic gradients. loss_fn must recompute the
// loss from the current parameter values and, when fill_grads is true,
// accumulate analytic gradients into the store (grads are zeroed first).
FiniteDiffReport finite_diff_check(ParamStore& ps,
                                   const std::function<double(bool fill_grads)>& loss_fn,
                                   double h, double tol);

}  // namespace mba::nn

#endif
