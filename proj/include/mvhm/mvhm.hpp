#pragma once

// Umbrella header: multi-view synthetic hand dataset toolkit.

#include "mvhm/annotation.hpp"
#include "mvhm/camera.hpp"
#include "mvhm/core.hpp"
#include "mvhm/geometry.hpp"
#include "mvhm/graph_ops.hpp"
#include "mvhm/hand_mesh.hpp"
#include "mvhm/image_io.hpp"
#include "mvhm/metrics.hpp"
#include "mvhm/pipeline.hpp"
#include "mvhm/render.hpp"
#include "mvhm/skeleton.hpp"
#include "mvhm/spin_match.hpp"
