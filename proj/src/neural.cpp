#include "mba/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mba/rng.hpp"

namespace mba::nn {

Tensor& ParamStore::add(const std::string& name, std::vector<std::size_t> shape, std::uint64_t seed,
                        double fan_in, double fan_out) {
  auto it = params.find(name);
  if (it != params.end()) return it->second;
  Tensor t;
  t.shape = shape;
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  t.data.resize(n);
  t.grad.assign(n, 0.0);
  Rng rng(hash_mix(seed, hash_str(name.c_str())));
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : t.data) x = (rng.next_double() * 2.0 - 1.0) * a;
  return params.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::add_zeros(const std::string& name, std::vector<std::size_t> shape) {
  auto it = params.find(name);
  if (it != params.end()) return it->second;
  Tensor t;
  t.shape = shape;
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  t.data.assign(n, 0.0);
  t.grad.assign(n, 0.0);
  return params.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

std::size_t ParamStore::total_params() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

Dense Dense::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                    std::uint64_t seed) {
  Dense d;
  d.in = in;
  d.out = out;
  auto fi = static_cast<double>(in), fo = static_cast<double>(out);
  d.W = &ps.add(name + ".W", {out, in}, seed, fi, fo);
  // small nonzero bias init: an exactly-zero bias vector can park relu
  // pre-activations exactly on the kink, where gradients are ill-defined
  d.b = &ps.add(name + ".b", {out}, seed, 3.0 * fi, 3.0 * fi);
  return d;
}

Dense Dense::lookup(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.W = &ps.at(name + ".W");
  d.b = &ps.at(name + ".b");
  if (d.W->data.size() != in * out || d.b->data.size() != out)
    throw std::runtime_error("parameter shape mismatch for " + name);
  return d;
}

Vec Dense::forward(const Vec& x) const {
  if (x.size() != in) throw std::invalid_argument("Dense input dimension mismatch");
  Vec y(out);
  const double* w = W->data.data();
  for (std::size_t i = 0; i < out; ++i) {
    double s = b->data[i];
    const double* row = w + i * in;
    for (std::size_t j = 0; j < in; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

Vec Dense::backward(const Vec& x, const Vec& dy) const {
  Vec dx(in, 0.0);
  double* gw = W->grad.data();
  const double* w = W->data.data();
  for (std::size_t i = 0; i < out; ++i) {
    double d = dy[i];
    b->grad[i] += d;
    double* grow = gw + i * in;
    const double* row = w + i * in;
    for (std::size_t j = 0; j < in; ++j) {
      grow[j] += d * x[j];
      dx[j] += d * row[j];
    }
  }
  return dx;
}

Ffn Ffn::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hidden,
                std::size_t out, std::uint64_t seed) {
  Ffn f;
  f.l1 = Dense::create(ps, name + ".l1", in, hidden, seed);
  f.l2 = Dense::create(ps, name + ".l2", hidden, out, seed);
  return f;
}

Ffn Ffn::lookup(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hidden,
                std::size_t out) {
  Ffn f;
  f.l1 = Dense::lookup(ps, name + ".l1", in, hidden);
  f.l2 = Dense::lookup(ps, name + ".l2", hidden, out);
  return f;
}

Vec Ffn::forward(const Vec& x, FfnCache* cache) const {
  Vec h = l1.forward(x);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  Vec y = l2.forward(h);
  if (cache) {
    cache->x = x;
    cache->hidden = std::move(h);
    return y;
  }
  return y;
}

Vec Ffn::backward(const FfnCache& cache, const Vec& dy) const {
  Vec dh = l2.backward(cache.hidden, dy);
  for (std::size_t i = 0; i < dh.size(); ++i)
    if (cache.hidden[i] <= 0.0) dh[i] = 0.0;
  return l1.backward(cache.x, dh);
}

Vec softmax(const Vec& z) {
  if (z.empty()) throw std::invalid_argument("softmax of empty logits");
  double m = kNegInf;
  for (double v : z) m = std::max(m, v);
  if (m <= kNegInf) throw std::invalid_argument("softmax: all logits masked");
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = z[i] <= kNegInf ? 0.0 : std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Vec softmax_backward(const Vec& p, const Vec& dp) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * dp[i];
  Vec dz(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - dot);
  return dz;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double cross_entropy(const Vec& p, std::size_t target_index) {
  if (target_index >= p.size()) throw std::invalid_argument("cross_entropy target out of range");
  return -std::log(std::max(p[target_index], 1e-300));
}

FiniteDiffReport finite_diff_check(ParamStore& ps,
                                   const std::function<double(bool)>& loss_fn, double h,
                                   double tol) {
  ps.zero_grad();
  double base = loss_fn(true);
  if (!std::isfinite(base)) throw std::runtime_error("non-finite loss in finite_diff_check");

  FiniteDiffReport report;
  for (auto& [name, t] : ps.params) {
    FiniteDiffEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double saved = t.data[i];
      t.data[i] = saved + h;
      double lp = loss_fn(false);
      t.data[i] = saved - h;
      double lm = loss_fn(false);
      t.data[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw std::runtime_error("non-finite loss in finite_diff_check");
      double numeric = (lp - lm) / (2.0 * h);
      double analytic = t.grad[i];
      double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
      entry.max_rel_error = std::max(entry.max_rel_error, std::fabs(numeric - analytic) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace mba::nn
