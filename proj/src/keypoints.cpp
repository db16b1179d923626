#include "keyprop/keypoints.hpp"

namespace keyprop {

namespace {

constexpr std::array<std::string_view, kKeypointCount> kNames{
    "beak", "nose", "left_eye", "right_eye", "left_shoulder", "right_shoulder", "top_keel", "bottom_keel", "tail"};

}  // namespace

std::string_view keypoint_name(Keypoint k) { return kNames[index(k)]; }

std::optional<Keypoint> parse_keypoint(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Keypoint>(i);
  }
  return std::nullopt;
}

}  // namespace keyprop
