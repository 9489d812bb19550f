#pragma once

#include "handfit/energy.hpp"
#include "handfit/types.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace handfit {

/*
 * Pixel convention everywhere: u is the column index, v the row index, origin at
 * the center of the top-left cell.
 */

/// 2D evidence for one hand, in the canonical joint order.
struct Observations {
  Keypoints keypoints = Keypoints::Zero();
  Confidences confidences = Confidences::Ones();
  /// Root depth in the same units as the unprojected root (any uniform scale is
  /// absorbed by the scale compensation of the fit).
  std::optional<double> d_root;
  std::optional<Joints> joints3d_init;
  /// (W, H); zero when unknown.
  Eigen::Vector2i image_size = Eigen::Vector2i::Zero();

  /// True for keypoints outside [0, W) x [0, H). All false when the size is unknown.
  std::array<bool, kNumKeypoints> out_of_frame() const;
  /// Throws DataError on non-finite values or confidences outside [0, 1].
  void validate() const;

  bool operator==(const Observations& other) const;
};

/// Heatmaps and root-relative depth maps, one H x W channel per joint (row = v).
struct ObservationMaps {
  std::vector<Eigen::MatrixXd> heatmaps;
  std::vector<Eigen::MatrixXd> distmaps;

  int height() const { return heatmaps.empty() ? 0 : static_cast<int>(heatmaps.front().rows()); }
  int width() const { return heatmaps.empty() ? 0 : static_cast<int>(heatmaps.front().cols()); }
  bool is_normalized(double tolerance = 1e-6) const;
};

/// Expected (u, v, d) of one channel. d is 0 when there are no distance maps.
/// Throws DataError when the channel mass differs from 1 by more than 1e-3.
Eigen::Vector3d soft_argmax(const ObservationMaps& maps, int joint);

/// soft_argmax of every channel, one (u, v, d) row per joint.
Eigen::Matrix<double, kNumKeypoints, 3> soft_argmax_all(const ObservationMaps& maps);

/// Convention tags accepted by the loaders: "native", "openpose" (alias "freihand"),
/// "rhd", "mano".
const std::vector<std::string>& known_conventions();

/// file_to_canonical[i] is the canonical joint stored at position i of a file using
/// `tag`. Throws DataError for unknown tags.
std::array<int, kNumKeypoints> convention_order(std::string_view tag);

/// Reorders rows stored in convention `tag` into canonical order.
template <typename Derived>
typename Derived::PlainObject remap_to_canonical(const Eigen::MatrixBase<Derived>& rows, std::string_view tag) {
  const auto order = convention_order(tag);
  typename Derived::PlainObject out = rows;
  for (int i = 0; i < kNumKeypoints; ++i) {
    out.row(order[i]) = rows.row(i);
  }
  return out;
}

/// Inverse of remap_to_canonical.
template <typename Derived>
typename Derived::PlainObject remap_from_canonical(const Eigen::MatrixBase<Derived>& rows, std::string_view tag) {
  const auto order = convention_order(tag);
  typename Derived::PlainObject out = rows;
  for (int i = 0; i < kNumKeypoints; ++i) {
    out.row(i) = rows.row(order[i]);
  }
  return out;
}

/*
 * Keypoint file (JSON):
 *   {
 *     "convention": "native",
 *     "image_size": [W, H],
 *     "keypoints": [[u, v], ...21],
 *     "confidences": [21 values in [0, 1]],        optional, default 1
 *     "d_root": number | null,
 *     "joints3d": [[x, y, z], ...21] | null,
 *     "heatmaps": "maps.json"                       optional sidecar path
 *   }
 * Explicit keypoints take precedence over heatmaps. Relative sidecar paths resolve
 * against `base_dir`.
 */
Observations observations_from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
Observations load_observations(const std::filesystem::path& path);
nlohmann::json observations_to_json(const Observations& obs, std::string_view convention = "native");
void save_observations(const Observations& obs,
                       const std::filesystem::path& path,
                       std::string_view convention = "native");

/*
 * Map container: a JSON sidecar
 *   {"shape": [k, H, W], "convention": "native", "dtype": "float32-le",
 *    "heatmaps": "heat.f32", "distmaps": "dist.f32" | null}
 * pointing at flat little-endian float32 files in channel, row, column order.
 */
ObservationMaps load_maps(const std::filesystem::path& sidecar);
void save_maps(const ObservationMaps& maps, const std::filesystem::path& sidecar);

/// Keypoints from soft-argmax, rescaled from map cells to an image of `image_size`
/// with cell centers aligned. Confidences are 1; d_root is left unset.
Observations observations_from_maps(const ObservationMaps& maps, const Eigen::Vector2i& image_size);

} // namespace handfit
