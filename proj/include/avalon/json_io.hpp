#pragma once

#include <json.hpp>

#include "avalon/dataset.hpp"
#include "avalon/grid.hpp"

namespace avalon {

/// 11 rows (top to bottom) of 9 cell codes.
nlohmann::json grid_to_json(const LevelGrid& grid);
/// Throws std::invalid_argument on wrong dimensions or codes.
LevelGrid grid_from_json(const nlohmann::json& rows);

/// Dataset-schema level record. Stats and split are written only when `annotated`.
nlohmann::json level_to_json(const AnnotatedLevel& level, bool annotated = true);

/// Level record for a bare grid: size and symmetry measured from the grid.
nlohmann::json level_to_json(const LevelGrid& grid);

}  // namespace avalon
