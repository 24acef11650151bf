#include "nrc/qd_layer.hpp"

#include <algorithm>

#include "nrc/error.hpp"

namespace nrc::qd {

void QdConfig::validate() const {
  if (!(retention >= 0.0 && retention < 1.0)) {
    throw UsageError("qd: retention must lie in [0, 1), got " + std::to_string(retention));
  }
  if (!(chem_gain >= 0.0) || !(neighbor_gain >= 0.0)) {
    throw UsageError("qd: coupling gains must be non-negative");
  }
}

Grid qd_excite(const Grid& qd, const Grid& chem, const QdConfig& cfg) {
  cfg.validate();
  if (!qd.same_shape(chem)) {
    throw DataError("qd_excite: QD grid is " + std::to_string(qd.width()) + "x" +
                    std::to_string(qd.height()) + " but chemistry grid is " +
                    std::to_string(chem.width()) + "x" + std::to_string(chem.height()));
  }
  Grid out = qd.next_generation();
  for (std::size_t i = 0; i < qd.size(); ++i) {
    const auto nbrs = qd.neighbors(i, cfg.neighborhood);
    for (std::size_t c = 0; c < 4; ++c) {
      double nbr_mean = 0.0;
      for (std::size_t k : nbrs) nbr_mean += qd[k][c];
      nbr_mean /= static_cast<double>(nbrs.size());
      const double v = cfg.retention * qd[i][c] + cfg.chem_gain * chem[i][kChemSource[c]] +
                       cfg.neighbor_gain * nbr_mean;
      out[i][c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

InputChannel parse_input_channel(const std::string& text) {
  if (text == "r") return InputChannel::kRed;
  if (text == "g") return InputChannel::kGreen;
  if (text == "b") return InputChannel::kBlue;
  if (text == "alpha") return InputChannel::kAlpha;
  if (text == "luminance-mean") return InputChannel::kLuminanceMean;
  throw UsageError("unknown QD channel '" + text +
                   "' (valid: r, g, b, alpha, luminance-mean)");
}

Eigen::VectorXd qd_to_input(const Grid& qd, InputChannel channel) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(qd.size()));
  for (std::size_t i = 0; i < qd.size(); ++i) {
    const Cell4& cell = qd[i];
    double v = 0.0;
    switch (channel) {
      case InputChannel::kRed: v = cell[kRed]; break;
      case InputChannel::kGreen: v = cell[kGreen]; break;
      case InputChannel::kBlue: v = cell[kBlue]; break;
      case InputChannel::kAlpha: v = cell[kAlpha]; break;
      case InputChannel::kLuminanceMean:
        v = (cell[0] + cell[1] + cell[2] + cell[3]) / 4.0;
        break;
    }
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

}  // namespace nrc::qd
