#pragma once

// Convenience umbrella: the full library surface.

#include "laplora/autodiff.hpp"
#include "laplora/common.hpp"
#include "laplora/datasets.hpp"
#include "laplora/diagnostics.hpp"
#include "laplora/eigensolver.hpp"
#include "laplora/filters.hpp"
#include "laplora/graph.hpp"
#include "laplora/model.hpp"
#include "laplora/sparse.hpp"
