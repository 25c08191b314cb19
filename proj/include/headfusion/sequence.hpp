#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"

namespace headfusion {

// Sequence directory layout.
inline constexpr const char* kGtPosesFile = "gt_poses.txt";
inline constexpr const char* kGtCoeffsFile = "gt_coeffs.txt";
inline constexpr const char* kGtDevFile = "gt_dev.bin";
inline constexpr const char* kIntrinsicsFile = "intrinsics.txt";
inline constexpr const char* kRigFile = "rig.txt";

// Run (pipeline output) directory layout.
inline constexpr const char* kPosesFile = "poses.txt";
inline constexpr const char* kCoeffsFile = "coeffs.txt";
inline constexpr const char* kSnapshotFile = "snapshot.bin";
inline constexpr const char* kCountsFile = "fusion_counts.bin";
inline constexpr const char* kStatsFile = "stats.txt";

// depth/%06d.png, color/%06d.png, landmarks/%06d.txt
std::string frame_path(const std::string& dir, const std::string& kind, int frame,
                       const std::string& ext);

int count_sequence_frames(const std::string& dir);

// Landmark files: one `index x y z` line per landmark (camera frame, meters).
std::vector<Landmark> read_landmarks(const std::string& path);
void write_landmarks(const std::string& path, const std::vector<Landmark>& landmarks);

// intrinsics.txt: single line `fx fy cx cy width height`.
CameraIntrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const CameraIntrinsics& intrinsics);

// Square scalar/count grids: int32 side length followed by row-major payload
// (float32 for dev grids, int32 for count grids).
void save_dev_grid(const std::string& path, const Image<double>& grid);
Image<double> load_dev_grid(const std::string& path);
void save_count_grid(const std::string& path, const Image<std::uint32_t>& grid);
Image<std::uint32_t> load_count_grid(const std::string& path);

}  // namespace headfusion
