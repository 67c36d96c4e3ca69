#pragma once

#include <gfi/cluster.hpp>
#include <gfi/combiner.hpp>
#include <gfi/data.hpp>
#include <gfi/dnorm.hpp>
#include <gfi/error.hpp>
#include <gfi/harness.hpp>
#include <gfi/inference.hpp>
#include <gfi/math.hpp>
#include <gfi/model.hpp>
#include <gfi/models/cauchy_regression.hpp>
#include <gfi/models/gpd_tail.hpp>
#include <gfi/models/normal_location.hpp>
#include <gfi/models/normal_mixture.hpp>
#include <gfi/parallel.hpp>
#include <gfi/rng.hpp>
#include <gfi/sampler.hpp>
