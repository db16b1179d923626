#pragma once

#include <json.hpp>

#include <string>
#include <string_view>

namespace keyprop::toml_lite {

/// Parses the TOML subset used by manifests and experiment configs: comments,
/// `key = value` with strings, integers, floats, booleans and single-line
/// arrays of those, `[table]` and `[[array.of.tables]]` headers (one level).
/// Throws ParseError with the offending line number.
nlohmann::json parse(std::string_view text);

/// Inverse of parse() for objects of that shape: scalars first, then tables,
/// then arrays of tables.
std::string dump(const nlohmann::json& document);

}  // namespace keyprop::toml_lite
