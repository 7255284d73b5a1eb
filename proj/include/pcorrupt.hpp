#pragma once

#include "pcorrupt/acrt.hpp"
#include "pcorrupt/checkpoint.hpp"
#include "pcorrupt/corruption.hpp"
#include "pcorrupt/data.hpp"
#include "pcorrupt/engine.hpp"
#include "pcorrupt/error.hpp"
#include "pcorrupt/error_bound.hpp"
#include "pcorrupt/eta.hpp"
#include "pcorrupt/hessian.hpp"
#include "pcorrupt/indicator.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/params.hpp"
#include "pcorrupt/probes.hpp"
#include "pcorrupt/report.hpp"
#include "pcorrupt/rng.hpp"
#include "pcorrupt/scan.hpp"
#include "pcorrupt/tape.hpp"
#include "pcorrupt/tensor.hpp"
#include "pcorrupt/zoo.hpp"
