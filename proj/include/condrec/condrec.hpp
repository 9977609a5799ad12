#pragma once

#include "condrec/analytics.hpp"
#include "condrec/chemspace.hpp"
#include "condrec/encoder.hpp"
#include "condrec/error.hpp"
#include "condrec/gateways.hpp"
#include "condrec/http_gateways.hpp"
#include "condrec/instrument.hpp"
#include "condrec/pipeline.hpp"
#include "condrec/recommend.hpp"
#include "condrec/retrieval.hpp"
#include "condrec/rng.hpp"
#include "condrec/scl.hpp"
#include "condrec/synth.hpp"
#include "condrec/video.hpp"
