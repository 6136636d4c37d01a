#include "dsgd/model.hpp"

namespace dsgd {

std::vector<double> Model::effective_coefficients() const {
  std::vector<double> out(coefficients.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = coefficients[i] * scale;
  return out;
}

}  // namespace dsgd
