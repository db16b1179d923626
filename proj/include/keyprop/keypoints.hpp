#pragma once

#include "keyprop/mocap.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace keyprop {

/// The nine morphological keypoints. Head keypoints first, then backpack.
enum class Keypoint : std::uint8_t {
  Beak,
  Nose,
  LeftEye,
  RightEye,
  LeftShoulder,
  RightShoulder,
  TopKeel,
  BottomKeel,
  Tail,
};

inline constexpr std::size_t kKeypointCount = 9;

inline constexpr std::array<Keypoint, kKeypointCount> kAllKeypoints{
    Keypoint::Beak,         Keypoint::Nose,          Keypoint::LeftEye,
    Keypoint::RightEye,     Keypoint::LeftShoulder,  Keypoint::RightShoulder,
    Keypoint::TopKeel,      Keypoint::BottomKeel,    Keypoint::Tail};

template <typename T>
using PerKeypoint = std::array<T, kKeypointCount>;

constexpr std::size_t index(Keypoint k) { return static_cast<std::size_t>(k); }

std::string_view keypoint_name(Keypoint k);
std::optional<Keypoint> parse_keypoint(std::string_view name);

constexpr BodyPart keypoint_part(Keypoint k) {
  return index(k) < 4 ? BodyPart::Head : BodyPart::Backpack;
}

}  // namespace keyprop
