#pragma once

#include "agestd/age_schedule.hpp"
#include "agestd/data_io.hpp"
#include "agestd/deaths.hpp"
#include "agestd/decompose.hpp"
#include "agestd/errors.hpp"
#include "agestd/meanref.hpp"
#include "agestd/rates.hpp"
