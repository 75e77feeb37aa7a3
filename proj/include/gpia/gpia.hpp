#pragma once

#include "gpia/approximation.hpp"
#include "gpia/attack.hpp"
#include "gpia/cg.hpp"
#include "gpia/error.hpp"
#include "gpia/graph.hpp"
#include "gpia/graph_io.hpp"
#include "gpia/louvain.hpp"
#include "gpia/model.hpp"
#include "gpia/model_io.hpp"
#include "gpia/pipeline.hpp"
#include "gpia/property.hpp"
#include "gpia/sampling.hpp"
#include "gpia/sbm.hpp"
#include "gpia/selection.hpp"
#include "gpia/util.hpp"
