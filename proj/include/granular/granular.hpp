#pragma once

#include "claims.hpp"
#include "copula.hpp"
#include "dates.hpp"
#include "delay.hpp"
#include "error.hpp"
#include "frequency.hpp"
#include "hac.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "payments.hpp"
#include "random.hpp"
#include "reserving.hpp"
#include "serialization.hpp"
#include "severity.hpp"
#include "stats.hpp"
#include "synth.hpp"
