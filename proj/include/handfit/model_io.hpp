#pragma once

#include "handfit/hand_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace handfit {

/*
 * Model file (JSON):
 *
 *   {
 *     "format": "handfit-model", "version": 1,
 *     "side": "right" | "left",
 *     "joint_order": [21 names, see joint_names()],
 *     "parents": [16 ints, -1 for the root],
 *     "template_vertices": [[x, y, z], ...],             V rows, model units
 *     "faces": [[a, b, c], ...],                          0-based
 *     "blend_weights": MATRIX (V x 16),
 *     "shape_dirs": [[[dx, dy, dz], ...V], ...10],
 *     "joint_regressor": MATRIX (16 x V),
 *     "tip_vertex_ids": [thumb, index, middle, ring, pinky]
 *   }
 *
 * MATRIX is either a dense array of rows or
 *   {"rows": R, "cols": C, "entries": [[row, col, value], ...]}.
 * "joint_order" is informational; it must match the canonical order when present.
 * Models converted from other assets must place the rest root joint at the origin.
 */
nlohmann::json model_to_json(const HandModel& model);
HandModel model_from_json(const nlohmann::json& j);
HandModel load_model(const std::filesystem::path& path);
void save_model(const HandModel& model, const std::filesystem::path& path);

/// {"theta": [[w, x, y, z] x16], "beta": [10], "root": [3]}; "theta_axis_angle" may
/// replace "theta" on input.
nlohmann::json params_to_json(const HandParams& params);
HandParams params_from_json(const nlohmann::json& j);
HandParams load_params(const std::filesystem::path& path);

/// ASCII OBJ: `v x y z` lines, then 1-based `f a b c` lines.
std::string mesh_to_obj(const Mesh& mesh);
void write_obj(const Mesh& mesh, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j` pretty-printed with a trailing newline.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

} // namespace handfit
