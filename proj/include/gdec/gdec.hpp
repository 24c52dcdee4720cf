#pragma once

#include "gdec/bridge.hpp"
#include "gdec/decoder_config.hpp"
#include "gdec/decoders.hpp"
#include "gdec/error.hpp"
#include "gdec/halluc_metrics.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/mock_session.hpp"
#include "gdec/numeric.hpp"
#include "gdec/pdm.hpp"
#include "gdec/preference.hpp"
#include "gdec/rng.hpp"
#include "gdec/simulator.hpp"
#include "gdec/trace.hpp"

namespace gdec {
inline constexpr const char* kVersion = "0.1.0";
}
