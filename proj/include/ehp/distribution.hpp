#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ehp {

/// Known i.i.d. per-slot harvest power distribution (watts).
class HarvestDistribution {
 public:
  enum class Family { Uniform, Discrete, Empirical };

  static HarvestDistribution uniform(double lo, double hi) {
    if (!(lo >= 0.0 && hi >= lo) || !std::isfinite(hi))
      throw std::invalid_argument("uniform harvest: need 0 <= lo <= hi < inf");
    if (hi == lo) return discrete({lo}, {1.0});
    HarvestDistribution d;
    d.family_ = Family::Uniform;
    d.lo_ = lo;
    d.hi_ = hi;
    return d;
  }

  static HarvestDistribution discrete(std::vector<double> values, std::vector<double> probs) {
    if (values.empty() || values.size() != probs.size())
      throw std::invalid_argument("discrete harvest: values/probabilities mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0.0) || !std::isfinite(values[i]) || !(probs[i] >= 0.0))
        throw std::invalid_argument("discrete harvest: negative value or probability");
      total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("discrete harvest: probabilities must sum to 1");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    HarvestDistribution d;
    d.family_ = Family::Discrete;
    for (auto i : order) {
      if (!d.atoms_.empty() && d.atoms_.back() == values[i]) {
        d.masses_.back() += probs[i];
      } else {
        d.atoms_.push_back(values[i]);
        d.masses_.push_back(probs[i]);
      }
    }
    return d;
  }

  static HarvestDistribution empirical(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("empirical harvest: no samples");
    for (double v : samples)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("empirical harvest: samples must be finite and >= 0");
    std::sort(samples.begin(), samples.end());
    HarvestDistribution d;
    d.family_ = Family::Empirical;
    d.atoms_ = std::move(samples);
    return d;
  }

  Family family() const { return family_; }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& masses() const { return masses_; }

  /// Density for Uniform, point mass otherwise.
  double density(double x) const {
    switch (family_) {
      case Family::Uniform: return (x >= lo_ && x <= hi_) ? 1.0 / (hi_ - lo_) : 0.0;
      case Family::Discrete: {
        auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x);
        return (it != atoms_.end() && *it == x) ? masses_[it - atoms_.begin()] : 0.0;
      }
      case Family::Empirical: {
        auto r = std::equal_range(atoms_.begin(), atoms_.end(), x);
        return static_cast<double>(r.second - r.first) / static_cast<double>(atoms_.size());
      }
    }
    return 0.0;
  }

  /// P(h < x)
  double prob_below(double x) const {
    switch (family_) {
      case Family::Uniform: return std::clamp((x - lo_) / (hi_ - lo_), 0.0, 1.0);
      case Family::Discrete: {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size() && atoms_[i] < x; ++i) acc += masses_[i];
        return acc;
      }
      case Family::Empirical:
        return static_cast<double>(std::lower_bound(atoms_.begin(), atoms_.end(), x) -
                                   atoms_.begin()) /
               static_cast<double>(atoms_.size());
    }
    return 0.0;
  }

  /// P(h > x)
  double prob_above(double x) const {
    switch (family_) {
      case Family::Uniform: return std::clamp((hi_ - x) / (hi_ - lo_), 0.0, 1.0);
      case Family::Discrete: {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i)
          if (atoms_[i] > x) acc += masses_[i];
        return acc;
      }
      case Family::Empirical:
        return static_cast<double>(atoms_.end() -
                                   std::upper_bound(atoms_.begin(), atoms_.end(), x)) /
               static_cast<double>(atoms_.size());
    }
    return 0.0;
  }

  double cdf(double x) const { return 1.0 - prob_above(x); }

  double mean() const {
    switch (family_) {
      case Family::Uniform: return 0.5 * (lo_ + hi_);
      case Family::Discrete: {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) acc += atoms_[i] * masses_[i];
        return acc;
      }
      case Family::Empirical:
        return std::accumulate(atoms_.begin(), atoms_.end(), 0.0) /
               static_cast<double>(atoms_.size());
    }
    return 0.0;
  }

  double min_value() const { return family_ == Family::Uniform ? lo_ : atoms_.front(); }
  double max_value() const { return family_ == Family::Uniform ? hi_ : atoms_.back(); }

  /// Left-continuous quantile: smallest x with P(h <= x) >= q.
  double quantile(double q) const {
    q = std::clamp(q, 0.0, 1.0);
    switch (family_) {
      case Family::Uniform: return lo_ + q * (hi_ - lo_);
      case Family::Discrete: {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
          acc += masses_[i];
          if (acc >= q - 1e-15) return atoms_[i];
        }
        return atoms_.back();
      }
      case Family::Empirical: {
        const auto n = atoms_.size();
        auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
        return atoms_[std::min(n - 1, idx > 0 ? idx - 1 : 0)];
      }
    }
    return 0.0;
  }

  double median() const {
    if (family_ == Family::Uniform) return 0.5 * (lo_ + hi_);
    return quantile(0.5);
  }

  /// E[(h - x)^+]
  double expected_excess(double x) const {
    switch (family_) {
      case Family::Uniform: {
        if (x >= hi_) return 0.0;
        const double a = std::max(x, lo_);
        return (hi_ - a) * (0.5 * (hi_ + a) - x) / (hi_ - lo_);
      }
      case Family::Discrete: {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i)
          acc += masses_[i] * std::max(atoms_[i] - x, 0.0);
        return acc;
      }
      case Family::Empirical: {
        double acc = 0.0;
        for (double v : atoms_) acc += std::max(v - x, 0.0);
        return acc / static_cast<double>(atoms_.size());
      }
    }
    return 0.0;
  }

  /// E[(x - h)^+]
  double expected_deficit(double x) const { return expected_excess(x) + x - mean(); }

  template <class Rng>
  double sample(Rng& rng) const {
    switch (family_) {
      case Family::Uniform: return std::uniform_real_distribution<double>(lo_, hi_)(rng);
      case Family::Discrete: {
        std::discrete_distribution<std::size_t> pick(masses_.begin(), masses_.end());
        return atoms_[pick(rng)];
      }
      case Family::Empirical:
        return atoms_[std::uniform_int_distribution<std::size_t>(0, atoms_.size() - 1)(rng)];
    }
    return 0.0;
  }

  std::string describe() const {
    switch (family_) {
      case Family::Uniform:
        return "uniform(" + std::to_string(lo_) + ", " + std::to_string(hi_) + ")";
      case Family::Discrete: return "discrete(" + std::to_string(atoms_.size()) + " atoms)";
      case Family::Empirical: return "empirical(" + std::to_string(atoms_.size()) + " samples)";
    }
    return {};
  }

  double uniform_lo() const { return lo_; }
  double uniform_hi() const { return hi_; }

 private:
  HarvestDistribution() = default;

  Family family_ = Family::Uniform;
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> atoms_;
  std::vector<double> masses_;
};

}  // namespace ehp
