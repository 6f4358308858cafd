#pragma once

#include "bench.hpp"
#include "config.hpp"
#include "gamp.hpp"
#include "ggamp_sbl.hpp"
#include "ggamp_tsbl.hpp"
#include "matgen.hpp"
#include "metrics.hpp"
#include "oracles.hpp"
#include "sbl_ref.hpp"
#include "types.hpp"
