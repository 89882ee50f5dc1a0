#pragma once

#include <cstdint>
#include <vector>

#include "deblur/image.hpp"
#include "deblur/train.hpp"

// Synthetic test targets standing in for resolution charts and real data.
namespace deblur::synthetic {

Image checkerboard(int height, int width, int period, float low = 0.0f, float high = 1.0f);

/// Groups of three vertical bars whose width halves from group to group,
/// like a USAF-style bar target.
Image bar_target(int height, int width, int widest_bar = 8, float low = 0.0f, float high = 1.0f);

/// Vertical step: columns < edge_column are `low`, the rest `high`.
Image blade_edge(int height, int width, int edge_column, float low = 0.0f, float high = 1.0f);

/// Random superposition of rectangles, discs, bars and checker patches.
Image random_scene(int height, int width, std::uint64_t seed);

/// (blur(scene, sigma), scene) pairs. Half the scenes are bar/checker
/// patterns with random period and phase, half random_scene.
std::vector<TrainingPair> make_pairs(int count, int size, double sigma, std::uint64_t seed);

}  // namespace deblur::synthetic
