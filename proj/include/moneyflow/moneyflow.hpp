#pragma once

#include "moneyflow/distmodel.hpp"
#include "moneyflow/entities.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/generator.hpp"
#include "moneyflow/ingest.hpp"
#include "moneyflow/random.hpp"
#include "moneyflow/sampling.hpp"
#include "moneyflow/stats.hpp"
