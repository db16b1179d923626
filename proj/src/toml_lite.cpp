#include "keyprop/toml_lite.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace keyprop::toml_lite {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorCode::ParseError, fmt::format("line {}: {}", line, what));
}

// Strips a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, int line) : text_(text), line_(line) {}

  nlohmann::json parse_all() {
    auto v = parse_value();
    skip_ws();
    if (pos_ != text_.size()) fail(line_, fmt::format("unexpected trailing text '{}'", text_.substr(pos_)));
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  nlohmann::json parse_value() {
    skip_ws();
    if (pos_ >= text_.size()) fail(line_, "missing value");
    const char c = text_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  nlohmann::json parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail(line_, fmt::format("unsupported escape '\\{}'", e));
        }
      }
      out += c;
    }
    if (pos_ >= text_.size()) fail(line_, "unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json parse_array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(parse_value());
      skip_ws();
      if (pos_ >= text_.size()) fail(line_, "unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail(line_, "expected ',' or ']' in array");
    }
  }

  nlohmann::json parse_number() {
    std::size_t end = pos_;
    while (end < text_.size() && text_[end] != ',' && text_[end] != ']' && text_[end] != ' ' && text_[end] != '\t') {
      ++end;
    }
    std::string token(text_.substr(pos_, end - pos_));
    std::erase(token, '_');
    pos_ = end;
    const bool is_float = token.find_first_of(".eEn") != std::string::npos;
    if (!is_float) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec == std::errc() && ptr == token.data() + token.size()) return v;
    } else {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec == std::errc() && ptr == token.data() + token.size()) return v;
    }
    fail(line_, fmt::format("invalid value '{}'", token));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
};

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

std::string format_scalar(const nlohmann::json& v) {
  if (v.is_string()) {
    std::string out = "\"";
    for (char c : v.get<std::string>()) {
      if (c == '"' || c == '\\') out += '\\';
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out += c;
    }
    return out + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_float()) {
    std::string s = fmt::format("{}", v.get<double>());
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += format_scalar(v[i]);
    }
    return out + "]";
  }
  throw Error(ErrorCode::InvalidArgument, "value cannot be written as a TOML scalar");
}

bool is_table_array(const nlohmann::json& v) {
  return v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_object(); });
}

}  // namespace

nlohmann::json parse(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto content = trim(strip_comment(raw));
    if (content.empty()) continue;
    if (content.starts_with("[[")) {
      if (!content.ends_with("]]")) fail(line, "malformed array-of-tables header");
      const std::string name(trim(content.substr(2, content.size() - 4)));
      if (!valid_key(name)) fail(line, fmt::format("invalid table name '{}'", name));
      auto& arr = root[name];
      if (arr.is_null()) arr = nlohmann::json::array();
      if (!arr.is_array()) fail(line, fmt::format("'{}' is not an array of tables", name));
      arr.push_back(nlohmann::json::object());
      current = &arr.back();
      continue;
    }
    if (content.starts_with('[')) {
      if (!content.ends_with(']')) fail(line, "malformed table header");
      const std::string name(trim(content.substr(1, content.size() - 2)));
      if (!valid_key(name)) fail(line, fmt::format("invalid table name '{}'", name));
      if (root.contains(name)) fail(line, fmt::format("table '{}' defined twice", name));
      root[name] = nlohmann::json::object();
      current = &root[name];
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string_view::npos) fail(line, "expected key = value");
    const std::string key(trim(content.substr(0, eq)));
    if (!valid_key(key)) fail(line, fmt::format("invalid key '{}'", key));
    if (current->contains(key)) fail(line, fmt::format("duplicate key '{}'", key));
    (*current)[key] = ValueParser(trim(content.substr(eq + 1)), line).parse_all();
  }
  return root;
}

std::string dump(const nlohmann::json& document) {
  if (!document.is_object()) throw Error(ErrorCode::InvalidArgument, "TOML document must be an object");
  std::string out;
  for (const auto& [key, value] : document.items()) {
    if (value.is_object() || is_table_array(value)) continue;
    out += fmt::format("{} = {}\n", key, format_scalar(value));
  }
  auto write_table = [&out](const nlohmann::json& table) {
    for (const auto& [key, value] : table.items()) {
      if (value.is_object() || is_table_array(value)) {
        throw Error(ErrorCode::InvalidArgument, "nested tables are not supported");
      }
      out += fmt::format("{} = {}\n", key, format_scalar(value));
    }
  };
  for (const auto& [key, value] : document.items()) {
    if (!value.is_object()) continue;
    out += fmt::format("\n[{}]\n", key);
    write_table(value);
  }
  for (const auto& [key, value] : document.items()) {
    if (!is_table_array(value)) continue;
    for (const auto& table : value) {
      out += fmt::format("\n[[{}]]\n", key);
      write_table(table);
    }
  }
  return out;
}

}  // namespace keyprop::toml_lite
