#pragma once

// Umbrella header for the trf4d library: a 4D space-time feature-grid
// radiance field with adaptive temporal partitioning, trained end-to-end via
// differentiable volume rendering against multi-view RGB + mask supervision.

#include "trf4d/ablation.hpp"
#include "trf4d/adam.hpp"
#include "trf4d/checkpoint.hpp"
#include "trf4d/common.hpp"
#include "trf4d/config.hpp"
#include "trf4d/dataset.hpp"
#include "trf4d/dense_grid.hpp"
#include "trf4d/feature_field.hpp"
#include "trf4d/geometry.hpp"
#include "trf4d/hash_grid.hpp"
#include "trf4d/losses.hpp"
#include "trf4d/metrics.hpp"
#include "trf4d/mlp.hpp"
#include "trf4d/occupancy.hpp"
#include "trf4d/png_io.hpp"
#include "trf4d/render.hpp"
#include "trf4d/renderer.hpp"
#include "trf4d/scene.hpp"
#include "trf4d/sh.hpp"
#include "trf4d/threading.hpp"
#include "trf4d/train.hpp"
#include "trf4d/train_state.hpp"
