#pragma once

#include <string>

#include "tom/models.hpp"
#include "tom/policy.hpp"
#include "tom/relevance.hpp"

namespace tom {

// Versioned JSON checkpoints: a spec header plus the flat parameter vector.

void save_discriminator(const Discriminator& disc, const std::string& path);
Discriminator load_discriminator(const std::string& path);

void save_dual_q(const DualQ& q, const std::string& path);
DualQ load_dual_q(const std::string& path);

void save_policy(const StochasticPolicy& policy, const std::string& path);
StochasticPolicy load_policy(const std::string& path);

void save_gaussian_mlp(const GaussianMlpModel& model, const std::string& path);
GaussianMlpModel load_gaussian_mlp(const std::string& path);

void save_linear_gaussian(const LinearGaussianModel& model, const std::string& path);
LinearGaussianModel load_linear_gaussian(const std::string& path);

}  // namespace tom
