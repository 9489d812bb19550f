#include "handfit/observations.hpp"
#include "handfit/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace handfit {

using nlohmann::json;

std::array<bool, kNumKeypoints> Observations::out_of_frame() const {
  std::array<bool, kNumKeypoints> out{};
  if (image_size.x() <= 0 || image_size.y() <= 0) {
    return out;
  }
  for (int i = 0; i < kNumKeypoints; ++i) {
    const double u = keypoints(i, 0), v = keypoints(i, 1);
    out[i] = !(u >= 0 && u < image_size.x() && v >= 0 && v < image_size.y());
  }
  return out;
}

void Observations::validate() const {
  if (!keypoints.allFinite()) {
    throw DataError("observations: non-finite keypoint");
  }
  if (!confidences.allFinite() || (confidences.array() < 0).any() || (confidences.array() > 1).any()) {
    throw DataError("observations: confidences must lie in [0, 1]");
  }
  if (d_root && !std::isfinite(*d_root)) {
    throw DataError("observations: non-finite d_root");
  }
  if (joints3d_init && !joints3d_init->allFinite()) {
    throw DataError("observations: non-finite joints3d");
  }
  if ((image_size.array() < 0).any()) {
    throw DataError("observations: negative image size");
  }
}

bool Observations::operator==(const Observations& other) const {
  return keypoints == other.keypoints && confidences == other.confidences && d_root == other.d_root &&
         joints3d_init.has_value() == other.joints3d_init.has_value() &&
         (!joints3d_init || *joints3d_init == *other.joints3d_init) && image_size == other.image_size;
}

bool ObservationMaps::is_normalized(double tolerance) const {
  for (const auto& h : heatmaps) {
    if (std::abs(h.sum() - 1.0) > tolerance || (h.array() < 0).any()) {
      return false;
    }
  }
  return true;
}

Eigen::Vector3d soft_argmax(const ObservationMaps& maps, int joint) {
  if (joint < 0 || joint >= static_cast<int>(maps.heatmaps.size())) {
    throw DataError("soft_argmax: channel out of range");
  }
  const Eigen::MatrixXd& h = maps.heatmaps[joint];
  const double mass = h.sum();
  if (std::abs(mass - 1.0) > 1e-3) {
    throw DataError("soft_argmax: heatmap channel " + std::to_string(joint) + " sums to " +
                    std::to_string(mass));
  }
  const bool has_depth = !maps.distmaps.empty();
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int row = 0; row < h.rows(); ++row) {
    for (int col = 0; col < h.cols(); ++col) {
      const double p = h(row, col);
      out.x() += p * col;
      out.y() += p * row;
      if (has_depth) {
        out.z() += p * maps.distmaps[joint](row, col);
      }
    }
  }
  return out;
}

Eigen::Matrix<double, kNumKeypoints, 3> soft_argmax_all(const ObservationMaps& maps) {
  if (maps.heatmaps.size() != kNumKeypoints) {
    throw DataError("expected 21 heatmap channels");
  }
  Eigen::Matrix<double, kNumKeypoints, 3> out;
  for (int i = 0; i < kNumKeypoints; ++i) {
    out.row(i) = soft_argmax(maps, i).transpose();
  }
  return out;
}

const std::vector<std::string>& known_conventions() {
  static const std::vector<std::string> tags = {"native", "openpose", "freihand", "rhd", "mano"};
  return tags;
}

std::array<int, kNumKeypoints> convention_order(std::string_view tag) {
  if (tag == "native") {
    return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  }
  // wrist, then each finger base -> tip, thumb first
  if (tag == "openpose" || tag == "freihand") {
    return {0, 1, 2, 3, 16, 4, 5, 6, 17, 7, 8, 9, 18, 10, 11, 12, 19, 13, 14, 15, 20};
  }
  // wrist, then each finger tip -> base, thumb first
  if (tag == "rhd") {
    return {0, 16, 3, 2, 1, 17, 6, 5, 4, 18, 9, 8, 7, 19, 12, 11, 10, 20, 15, 14, 13};
  }
  // wrist, index, middle, pinky, ring, thumb (base -> distal), tips thumb..pinky
  if (tag == "mano") {
    return {0, 4, 5, 6, 7, 8, 9, 13, 14, 15, 10, 11, 12, 1, 2, 3, 16, 17, 18, 19, 20};
  }
  throw DataError("unknown joint convention \"" + std::string(tag) + "\"");
}

namespace {

template <int Cols>
Eigen::Matrix<double, kNumKeypoints, Cols> rows_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != kNumKeypoints) {
    throw DataError(std::string(what) + ": expected 21 entries, got " +
                    std::to_string(j.is_array() ? j.size() : 0));
  }
  Eigen::Matrix<double, kNumKeypoints, Cols> out;
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (!j[i].is_array() || j[i].size() != Cols) {
      throw DataError(std::string(what) + ": entry " + std::to_string(i) + " must have " +
                      std::to_string(Cols) + " values");
    }
    for (int c = 0; c < Cols; ++c) {
      out(i, c) = j[i][c].get<double>();
    }
  }
  return out;
}

template <typename Derived>
json rows_to_json(const Eigen::MatrixBase<Derived>& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<float> read_floats(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<char> bytes(count * 4);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != EOF) {
    throw DataError(path.string() + ": size does not match the declared shape");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_floats(const std::filesystem::path& path, const std::vector<Eigen::MatrixXd>& channels) {
  std::string bytes;
  for (const auto& ch : channels) {
    for (int r = 0; r < ch.rows(); ++r) {
      for (int c = 0; c < ch.cols(); ++c) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(ch(r, c)));
        for (int b = 0; b < 4; ++b) {
          bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
        }
      }
    }
  }
  write_text_file(bytes, path);
}

std::vector<Eigen::MatrixXd> to_channels(const std::vector<float>& data, int k, int h, int w) {
  std::vector<Eigen::MatrixXd> out(k, Eigen::MatrixXd(h, w));
  std::size_t idx = 0;
  for (int ch = 0; ch < k; ++ch) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        out[ch](r, c) = data[idx++];
      }
    }
  }
  return out;
}

} // namespace

Observations observations_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    const std::string tag = j.value("convention", "native");
    convention_order(tag);
    Observations obs;
    if (j.contains("image_size") && !j.at("image_size").is_null()) {
      const auto size = j.at("image_size").get<std::vector<int>>();
      if (size.size() != 2) {
        throw DataError("image_size must be [W, H]");
      }
      obs.image_size = {size[0], size[1]};
    }
    if (j.contains("keypoints") && !j.at("keypoints").is_null()) {
      obs.keypoints = remap_to_canonical(rows_from_json<2>(j.at("keypoints"), "keypoints"), tag);
    } else if (j.contains("heatmaps") && !j.at("heatmaps").is_null()) {
      std::filesystem::path sidecar = j.at("heatmaps").get<std::string>();
      if (sidecar.is_relative()) {
        sidecar = base_dir / sidecar;
      }
      const ObservationMaps maps = load_maps(sidecar);
      const Observations from_maps = observations_from_maps(maps, obs.image_size);
      obs.keypoints = from_maps.keypoints;
      obs.image_size = from_maps.image_size;
    } else {
      throw DataError("observations need \"keypoints\" or \"heatmaps\"");
    }
    if (j.contains("confidences") && !j.at("confidences").is_null()) {
      const auto conf = j.at("confidences").get<std::vector<double>>();
      if (conf.size() != kNumKeypoints) {
        throw DataError("confidences: expected 21 entries, got " + std::to_string(conf.size()));
      }
      obs.confidences = remap_to_canonical(Eigen::Map<const Confidences>(conf.data()), tag);
    }
    if (j.contains("d_root") && !j.at("d_root").is_null()) {
      obs.d_root = j.at("d_root").get<double>();
    }
    if (j.contains("joints3d") && !j.at("joints3d").is_null()) {
      obs.joints3d_init = remap_to_canonical(rows_from_json<3>(j.at("joints3d"), "joints3d"), tag);
    }
    obs.validate();
    return obs;
  } catch (const json::exception& e) {
    throw DataError(std::string("observations: ") + e.what());
  }
}

Observations load_observations(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return observations_from_json(j, path.parent_path());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json observations_to_json(const Observations& obs, std::string_view convention) {
  json j;
  j["convention"] = std::string(convention);
  j["image_size"] = {obs.image_size.x(), obs.image_size.y()};
  j["keypoints"] = rows_to_json(remap_from_canonical(obs.keypoints, convention));
  const Confidences conf = remap_from_canonical(obs.confidences, convention);
  j["confidences"] = std::vector<double>(conf.data(), conf.data() + kNumKeypoints);
  j["d_root"] = obs.d_root ? json(*obs.d_root) : json(nullptr);
  j["joints3d"] = obs.joints3d_init ? rows_to_json(remap_from_canonical(*obs.joints3d_init, convention))
                                    : json(nullptr);
  return j;
}

void save_observations(const Observations& obs, const std::filesystem::path& path,
                       std::string_view convention) {
  write_json_file(observations_to_json(obs, convention), path);
}

ObservationMaps load_maps(const std::filesystem::path& sidecar) {
  const json j = read_json_file(sidecar);
  try {
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] != kNumKeypoints || shape[1] <= 0 || shape[2] <= 0) {
      throw DataError("maps: shape must be [21, H, W]");
    }
    if (j.value("dtype", "float32-le") != "float32-le") {
      throw DataError("maps: only float32-le data is supported");
    }
    const std::string tag = j.value("convention", "native");
    const auto order = convention_order(tag);
    const int k = shape[0], h = shape[1], w = shape[2];
    const std::size_t count = static_cast<std::size_t>(k) * h * w;
    const auto dir = sidecar.parent_path();

    auto load = [&](const std::string& name) {
      auto channels = to_channels(read_floats(dir / name, count), k, h, w);
      std::vector<Eigen::MatrixXd> canonical(k);
      for (int i = 0; i < k; ++i) {
        canonical[order[i]] = std::move(channels[i]);
      }
      return canonical;
    };
    ObservationMaps maps;
    maps.heatmaps = load(j.at("heatmaps").get<std::string>());
    if (j.contains("distmaps") && !j.at("distmaps").is_null()) {
      maps.distmaps = load(j.at("distmaps").get<std::string>());
    }
    return maps;
  } catch (const json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
}

void save_maps(const ObservationMaps& maps, const std::filesystem::path& sidecar) {
  if (maps.heatmaps.size() != kNumKeypoints) {
    throw DataError("maps: expected 21 heatmap channels");
  }
  const std::string stem = sidecar.stem().string();
  const std::string heat = stem + ".heat.f32";
  write_floats(sidecar.parent_path() / heat, maps.heatmaps);
  json j = {{"shape", {kNumKeypoints, maps.height(), maps.width()}},
            {"convention", "native"},
            {"dtype", "float32-le"},
            {"heatmaps", heat},
            {"distmaps", nullptr}};
  if (!maps.distmaps.empty()) {
    const std::string dist = stem + ".dist.f32";
    write_floats(sidecar.parent_path() / dist, maps.distmaps);
    j["distmaps"] = dist;
  }
  write_json_file(j, sidecar);
}

Observations observations_from_maps(const ObservationMaps& maps, const Eigen::Vector2i& image_size) {
  const auto uvd = soft_argmax_all(maps);
  Observations obs;
  obs.image_size = (image_size.array() > 0).all() ? image_size : Eigen::Vector2i(maps.width(), maps.height());
  const double sx = static_cast<double>(obs.image_size.x()) / maps.width();
  const double sy = static_cast<double>(obs.image_size.y()) / maps.height();
  for (int i = 0; i < kNumKeypoints; ++i) {
    obs.keypoints(i, 0) = (uvd(i, 0) + 0.5) * sx - 0.5;
    obs.keypoints(i, 1) = (uvd(i, 1) + 0.5) * sy - 0.5;
  }
  return obs;
}

} // namespace handfit
