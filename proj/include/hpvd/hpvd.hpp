#pragma once

// Umbrella header for the hetero-phase volumetric detection library.

#include "hpvd/box.hpp"
#include "hpvd/detection_io.hpp"
#include "hpvd/error.hpp"
#include "hpvd/metrics.hpp"
#include "hpvd/metrics_io.hpp"
#include "hpvd/net/checkpoint.hpp"
#include "hpvd/net/decode.hpp"
#include "hpvd/net/infer.hpp"
#include "hpvd/net/layers.hpp"
#include "hpvd/net/loss.hpp"
#include "hpvd/net/model.hpp"
#include "hpvd/net/train.hpp"
#include "hpvd/phantom.hpp"
#include "hpvd/phase.hpp"
#include "hpvd/postprocess.hpp"
#include "hpvd/resample.hpp"
#include "hpvd/rng.hpp"
#include "hpvd/tensor.hpp"
#include "hpvd/volume.hpp"
#include "hpvd/volume_io.hpp"
#include "hpvd/windows.hpp"
