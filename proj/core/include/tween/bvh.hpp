#pragma once

#include <iosfwd>
#include <string>

#include "tween/datapipe.hpp"

namespace tween {

struct BvhParseResult {
  Skeleton skeleton;   // table order, offsets from the file
  MotionClip clip;     // resampled to 60 fps, rotations clamped into range
};

// Parses a BVH file and maps its hierarchy onto the given limit table by
// joint name ("End Site" blocks map to <parent>_Nub). Rotations are
// converted through rotation matrices into the ranged representation; out of
// range angles are clamped and flagged. Throws std::runtime_error with a
// line number on malformed input and with the offending name on unknown
// joints.
BvhParseResult parse_bvh(std::istream& in, const JointLimitTable& table);
BvhParseResult parse_bvh_file(const std::string& path, const JointLimitTable& table);
BvhParseResult parse_bvh_file(const std::string& path);  // builtin table

// Writes a clip as BVH (60 fps). Nub joints become End Site blocks. The
// root uses its joint-table order for the rotation channels.
void export_bvh(std::ostream& out, const MotionClip& clip, const Skeleton& skeleton);
void export_bvh_file(const std::string& path, const MotionClip& clip,
                     const Skeleton& skeleton);

}  // namespace tween
