#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wdpose/augment.hpp"
#include "wdpose/metrics.hpp"

namespace wdpose {

/// Annotated samples carry 3D poses; weak samples carry only sensor depth;
/// test samples are held out for evaluation.
enum class Split { Annotated, Weak, Test };

const char* to_string(Split split);
Split split_from_string(const std::string& name);

/// One detected person in one frame.
struct PersonSample {
  std::string frame_id;
  Split split = Split::Annotated;
  CameraIntrinsics camera;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  ViewSample view;
  std::vector<std::uint8_t> visible;  // per joint; empty when unknown
  std::string depth_path;             // DMAP file, relative to the dataset root
};

struct Dataset {
  std::vector<PersonSample> annotated;
  std::vector<PersonSample> weak;
  std::vector<PersonSample> test;
  std::vector<FramePoses> test_gt;  // every person, detected or not
  std::vector<FramePoses> weak_gt;  // withheld from training
};

}  // namespace wdpose
