#include "mmcp/model/model.hpp"

#include <stdexcept>

namespace mmcp::model {

void ModelConfig::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("ModelConfig: latent_dim must be >= 2");
  if (crop_size < 4) throw std::invalid_argument("ModelConfig: crop_size must be >= 4");
  if (window < 1) throw std::invalid_argument("ModelConfig: window must be >= 1");
  if (spatial_channels.empty() || temporal_channels.empty())
    throw std::invalid_argument("ModelConfig: encoder channel lists must not be empty");
  for (int c : spatial_channels)
    if (c < 1) throw std::invalid_argument("ModelConfig: spatial channel widths must be >= 1");
  for (int c : temporal_channels)
    if (c < 1) throw std::invalid_argument("ModelConfig: temporal channel widths must be >= 1");
  if (gru_hidden < 1 || pred_hidden < 1)
    throw std::invalid_argument("ModelConfig: hidden widths must be >= 1");
  int size = crop_size;
  for (std::size_t i = 0; i < std::max(spatial_channels.size(), temporal_channels.size()); ++i)
    size = conv_out_size(size);
  if (size < 1)
    throw std::invalid_argument("ModelConfig: crop_size too small for the encoder depth");
}

int conv_out_size(int size) { return (size - 1) / 2 + 1; }

std::vector<int> im2col_indices(int size, int channels) {
  const int out = conv_out_size(size);
  const int rows = 9 * channels;
  std::vector<int> idx(static_cast<std::size_t>(rows) * out * out);
  std::size_t k = 0;
  // Column-major over the [rows, out*out] patch matrix: one output pixel per
  // column in y-major order (so the flattened conv output keeps the input's
  // pixel layout), patch elements ordered (ky, kx, channel).
  for (int p = 0; p < out * out; ++p) {
    const int oy = p / out;
    const int ox = p % out;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int iy = oy * 2 - 1 + ky;
        const int ix = ox * 2 - 1 + kx;
        const bool inside = iy >= 0 && iy < size && ix >= 0 && ix < size;
        for (int c = 0; c < channels; ++c)
          idx[k++] = inside ? (iy * size + ix) * channels + c : -1;
      }
    }
  }
  return idx;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mmcp::model
