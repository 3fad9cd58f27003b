#pragma once

#include "taskgen/analysis.hpp"
#include "taskgen/atg.hpp"
#include "taskgen/divergence.hpp"
#include "taskgen/embeddings.hpp"
#include "taskgen/episodes.hpp"
#include "taskgen/error.hpp"
#include "taskgen/io.hpp"
#include "taskgen/rng.hpp"
#include "taskgen/synth.hpp"
