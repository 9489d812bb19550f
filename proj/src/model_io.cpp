#include "handfit/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace handfit {

using nlohmann::json;

namespace {

json matrix_to_sparse(const Eigen::MatrixXd& m) {
  json entries = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (m(r, c) != 0.0) {
        entries.push_back({r, c, m(r, c)});
      }
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"entries", std::move(entries)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, int rows, int cols, const char* what) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  if (j.is_object()) {
    if (j.at("rows").get<int>() != rows || j.at("cols").get<int>() != cols) {
      throw DataError(std::string(what) + ": unexpected dimensions");
    }
    for (const auto& e : j.at("entries")) {
      const int r = e.at(0).get<int>();
      const int c = e.at(1).get<int>();
      if (r < 0 || r >= rows || c < 0 || c >= cols) {
        throw DataError(std::string(what) + ": entry out of range");
      }
      m(r, c) = e.at(2).get<double>();
    }
    return m;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw DataError(std::string(what) + ": expected " + std::to_string(rows) + " rows");
  }
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) {
      throw DataError(std::string(what) + ": expected " + std::to_string(cols) + " columns");
    }
    for (int c = 0; c < cols; ++c) {
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
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

template <typename Fn>
auto guarded(const char* context, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw DataError(std::string(context) + ": " + e.what());
  }
}

} // namespace

json model_to_json(const HandModel& model) {
  json names = json::array();
  for (auto name : joint_names()) {
    names.push_back(std::string(name));
  }
  json dirs = json::array();
  for (int b = 0; b < kNumShape; ++b) {
    json dir = json::array();
    for (int i = 0; i < model.num_vertices(); ++i) {
      dir.push_back({model.shape_dirs()(3 * i, b), model.shape_dirs()(3 * i + 1, b),
                     model.shape_dirs()(3 * i + 2, b)});
    }
    dirs.push_back(std::move(dir));
  }
  return {
      {"format", "handfit-model"},
      {"version", 1},
      {"side", model.side() == HandSide::right ? "right" : "left"},
      {"joint_order", std::move(names)},
      {"parents", model.parents()},
      {"template_vertices", rows_to_json(model.template_vertices())},
      {"faces", rows_to_json(model.faces())},
      {"blend_weights", matrix_to_sparse(model.blend_weights())},
      {"shape_dirs", std::move(dirs)},
      {"joint_regressor", matrix_to_sparse(model.joint_regressor())},
      {"tip_vertex_ids", model.tip_vertex_ids()},
  };
}

HandModel model_from_json(const json& j) {
  return guarded("model file", [&] {
    if (j.value("format", "") != "handfit-model") {
      throw DataError("model file: missing or wrong \"format\" tag");
    }
    if (j.contains("joint_order")) {
      const auto& order = j.at("joint_order");
      if (order.size() != kNumKeypoints) {
        throw DataError("model file: joint_order must list 21 joints");
      }
      for (int i = 0; i < kNumKeypoints; ++i) {
        if (order[i].get<std::string>() != joint_names()[i]) {
          throw DataError("model file: joint_order differs from the canonical order at " +
                          std::to_string(i));
        }
      }
    }
    const auto& tv = j.at("template_vertices");
    const int v = static_cast<int>(tv.size());
    const Vertices verts = matrix_from_json(tv, v, 3, "template_vertices");

    const auto& fj = j.at("faces");
    Faces faces(static_cast<int>(fj.size()), 3);
    for (int i = 0; i < faces.rows(); ++i) {
      if (fj[i].size() != 3) {
        throw DataError("faces: expected triangles");
      }
      for (int c = 0; c < 3; ++c) {
        faces(i, c) = fj[i][c].get<int>();
      }
    }

    const auto parents_vec = j.at("parents").get<std::vector<int>>();
    if (parents_vec.size() != kNumJoints) {
      throw DataError("parents: expected 16 entries");
    }
    std::array<int, kNumJoints> parents{};
    std::copy(parents_vec.begin(), parents_vec.end(), parents.begin());

    const auto& dj = j.at("shape_dirs");
    if (dj.size() != kNumShape) {
      throw DataError("shape_dirs: expected 10 blend shapes");
    }
    Eigen::MatrixXd dirs(3 * v, kNumShape);
    for (int b = 0; b < kNumShape; ++b) {
      const Eigen::MatrixXd d = matrix_from_json(dj[b], v, 3, "shape_dirs");
      for (int i = 0; i < v; ++i) {
        dirs.block<3, 1>(3 * i, b) = d.row(i).transpose();
      }
    }

    const auto tips_vec = j.at("tip_vertex_ids").get<std::vector<int>>();
    if (tips_vec.size() != kNumTips) {
      throw DataError("tip_vertex_ids: expected 5 entries");
    }
    std::array<int, kNumTips> tips{};
    std::copy(tips_vec.begin(), tips_vec.end(), tips.begin());

    const std::string side = j.value("side", "right");
    if (side != "right" && side != "left") {
      throw DataError("side must be \"right\" or \"left\"");
    }
    return HandModel(verts, std::move(faces),
                     matrix_from_json(j.at("blend_weights"), v, kNumJoints, "blend_weights"), parents,
                     std::move(dirs),
                     matrix_from_json(j.at("joint_regressor"), kNumJoints, v, "joint_regressor"), tips,
                     side == "right" ? HandSide::right : HandSide::left);
  });
}

HandModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

void save_model(const HandModel& model, const std::filesystem::path& path) {
  write_json_file(model_to_json(model), path);
}

json params_to_json(const HandParams& params) {
  json theta = json::array();
  for (const auto& q : params.theta) {
    theta.push_back({q.w(), q.x(), q.y(), q.z()});
  }
  return {{"theta", std::move(theta)},
          {"beta", std::vector<double>(params.beta.data(), params.beta.data() + kNumShape)},
          {"root", {params.root.x(), params.root.y(), params.root.z()}}};
}

HandParams params_from_json(const json& j) {
  return guarded("parameters", [&] {
    HandParams params;
    if (j.contains("theta")) {
      const auto& theta = j.at("theta");
      if (theta.size() != kNumJoints) {
        throw DataError("theta: expected 16 quaternions");
      }
      for (int k = 0; k < kNumJoints; ++k) {
        if (theta[k].size() != 4) {
          throw DataError("theta: quaternions are [w, x, y, z]");
        }
        params.theta[k] = Eigen::Quaterniond(theta[k][0].get<double>(), theta[k][1].get<double>(),
                                             theta[k][2].get<double>(), theta[k][3].get<double>());
      }
    } else if (j.contains("theta_axis_angle")) {
      const auto& aa = j.at("theta_axis_angle");
      if (aa.size() != kNumJoints) {
        throw DataError("theta_axis_angle: expected 16 vectors");
      }
      for (int k = 0; k < kNumJoints; ++k) {
        if (aa[k].size() != 3) {
          throw DataError("theta_axis_angle: expected [x, y, z]");
        }
        params.theta[k] = quaternion_from_axis_angle(
            {aa[k][0].get<double>(), aa[k][1].get<double>(), aa[k][2].get<double>()});
      }
    }
    if (j.contains("beta")) {
      const auto beta = j.at("beta").get<std::vector<double>>();
      if (beta.size() != kNumShape) {
        throw DataError("beta: expected 10 coefficients");
      }
      params.beta = Eigen::Map<const ShapeVector>(beta.data());
    }
    if (j.contains("root")) {
      const auto root = j.at("root").get<std::vector<double>>();
      if (root.size() != 3) {
        throw DataError("root: expected 3 values");
      }
      params.root = Eigen::Vector3d(root[0], root[1], root[2]);
    }
    params.validate();
    return params;
  });
}

HandParams load_params(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  return params_from_json(j.contains("params") ? j.at("params") : j);
}

std::string mesh_to_obj(const Mesh& mesh) {
  std::string out;
  char line[128];
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(line, sizeof(line), "v %.10g %.10g %.10g\n", mesh.vertices(i, 0), mesh.vertices(i, 1),
                  mesh.vertices(i, 2));
    out += line;
  }
  for (int i = 0; i < mesh.faces.rows(); ++i) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", mesh.faces(i, 0) + 1, mesh.faces(i, 1) + 1,
                  mesh.faces(i, 2) + 1);
    out += line;
  }
  return out;
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  write_text_file(mesh_to_obj(mesh), path);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  write_text_file(j.dump(2) + "\n", path);
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

} // namespace handfit
