#pragma once

// Umbrella header.

#include "hypodl/syntax.hpp"
#include "hypodl/parser.hpp"
#include "hypodl/analysis.hpp"
#include "hypodl/storage.hpp"
#include "hypodl/engine.hpp"
#include "hypodl/session.hpp"
