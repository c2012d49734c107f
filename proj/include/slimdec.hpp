#pragma once

// Umbrella header.

#include "slimdec/archive.hpp"
#include "slimdec/backprop.hpp"
#include "slimdec/bench.hpp"
#include "slimdec/config.hpp"
#include "slimdec/config_json.hpp"
#include "slimdec/decode.hpp"
#include "slimdec/edit_distance.hpp"
#include "slimdec/embr.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/joint.hpp"
#include "slimdec/lattice.hpp"
#include "slimdec/lookup.hpp"
#include "slimdec/math.hpp"
#include "slimdec/optimizer.hpp"
#include "slimdec/prediction.hpp"
#include "slimdec/timing.hpp"
#include "slimdec/toy_task.hpp"
#include "slimdec/trainer.hpp"
#include "slimdec/weights.hpp"
