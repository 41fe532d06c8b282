#include "sparse_ips/jump_model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "sparse_ips/errors.hpp"

namespace sparse_ips {

NeighborCountMeasure::NeighborCountMeasure(std::vector<int> counts) : counts_(std::move(counts)) {
  for (int c : counts_) {
    if (c < 0) throw InvalidInput("neighbour counts must be nonnegative");
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), 0);
}

void JumpModel::validate() const {
  if (state_names.empty()) throw InvalidInput("jump model '" + name + "' has no states");
  if (jumps.empty()) throw InvalidInput("jump model '" + name + "' has no jump directions");
  if (std::find(jumps.begin(), jumps.end(), 0) != jumps.end()) {
    throw InvalidInput("jump model '" + name + "' has a zero jump direction");
  }
  if (!rates || !envelope) throw InvalidInput("jump model '" + name + "' lacks rates or envelope");
  if (!(lag >= 0.0)) throw InvalidInput("lag must be nonnegative");
  for (std::size_t k = 0; k < 8; ++k) {
    if (envelope(k + 1, 1.0) < envelope(k, 1.0)) {
      throw InvalidInput("envelope of '" + name + "' is not nondecreasing in degree");
    }
  }
}

JumpModel voter_model() {
  JumpModel m;
  m.name = "voter";
  m.state_names = {"0", "1"};
  m.jumps = {+1, -1};
  m.rates = [](double, State x, const NeighborCountMeasure& theta, std::span<double> out) {
    out[0] = 0.0;
    out[1] = 0.0;
    const int total = theta.total();
    if (total == 0) return;
    if (x == 0) {
      out[0] = static_cast<double>(theta[1]) / total;
    } else {
      out[1] = static_cast<double>(theta[0]) / total;
    }
  };
  m.envelope = [](std::size_t, double) { return 1.0; };
  m.mean_field_rates = [](double, State x, std::span<const double> nu, std::span<double> out) {
    out[0] = x == 0 ? nu[1] : 0.0;
    out[1] = x == 1 ? nu[0] : 0.0;
  };
  return m;
}

JumpModel contact_model(double lambda) {
  if (!(lambda >= 0.0)) throw InvalidInput("contact infection rate must be nonnegative");
  JumpModel m;
  m.name = "contact";
  m.state_names = {"0", "1"};
  m.jumps = {+1, -1};
  m.rates = [lambda](double, State x, const NeighborCountMeasure& theta, std::span<double> out) {
    out[0] = 0.0;
    out[1] = 0.0;
    if (theta.total() == 0) return;
    if (x == 0) {
      out[0] = lambda * theta[1];
    } else {
      out[1] = 1.0;
    }
  };
  m.envelope = [lambda](std::size_t k, double) {
    return std::max(1.0, lambda * static_cast<double>(k));
  };
  m.mean_field_rates = [lambda](double, State x, std::span<const double> nu, std::span<double> out) {
    out[0] = x == 0 ? lambda * nu[1] : 0.0;
    out[1] = x == 1 ? 1.0 : 0.0;
  };
  return m;
}

JumpModel sir_model(double lambda, double recovery) {
  if (!(lambda >= 0.0) || !(recovery >= 0.0)) throw InvalidInput("SIR rates must be nonnegative");
  JumpModel m;
  m.name = "sir";
  m.state_names = {"S", "I", "R"};
  m.jumps = {+1};
  m.rates = [lambda, recovery](double, State x, const NeighborCountMeasure& theta,
                               std::span<double> out) {
    out[0] = 0.0;
    if (theta.total() == 0) return;
    if (x == 0) {
      out[0] = lambda * theta[1];
    } else if (x == 1) {
      out[0] = recovery;
    }
  };
  m.envelope = [lambda, recovery](std::size_t k, double) {
    return std::max(recovery, lambda * static_cast<double>(k));
  };
  m.mean_field_rates = [lambda, recovery](double, State x, std::span<const double> nu,
                                          std::span<double> out) {
    out[0] = x == 0 ? lambda * nu[1] : (x == 1 ? recovery : 0.0);
  };
  return m;
}

JumpModel independent_model(std::vector<std::vector<double>> base_rates, std::vector<int> jumps) {
  JumpModel m;
  m.name = "independent";
  for (std::size_t s = 0; s < base_rates.size(); ++s) m.state_names.push_back(std::to_string(s));
  m.jumps = std::move(jumps);
  double bound = 0.0;
  for (const auto& row : base_rates) {
    if (row.size() != m.jumps.size()) throw InvalidInput("independent_model: rate row size mismatch");
    double s = 0.0;
    for (double r : row) {
      if (!(r >= 0.0)) throw InvalidInput("independent_model: negative rate");
      s += r;
    }
    bound = std::max(bound, s);
  }
  auto table = std::make_shared<const std::vector<std::vector<double>>>(std::move(base_rates));
  m.rates = [table](double, State x, const NeighborCountMeasure& theta, std::span<double> out) {
    const auto& row = (*table)[static_cast<std::size_t>(x)];
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = theta.total() == 0 ? 0.0 : row[j];
  };
  m.envelope = [bound](std::size_t, double) { return bound; };
  m.mean_field_rates = [table](double, State x, std::span<const double>, std::span<double> out) {
    const auto& row = (*table)[static_cast<std::size_t>(x)];
    std::copy(row.begin(), row.end(), out.begin());
  };
  return m;
}

JumpModel lagged_rate_wrapper(JumpModel m, double lag) {
  if (!(lag >= 0.0)) throw InvalidInput("lag must be nonnegative");
  m.lag = lag;
  if (lag > 0.0) m.name += "+lag";
  return m;
}

}  // namespace sparse_ips
