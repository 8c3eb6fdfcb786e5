#pragma once

#include "vcgan/checkpoint.hpp"
#include "vcgan/diffcore.hpp"
#include "vcgan/harness/config.hpp"
#include "vcgan/harness/datasets.hpp"
#include "vcgan/harness/emit.hpp"
#include "vcgan/harness/experiment.hpp"
#include "vcgan/harness/gradcheck_suite.hpp"
#include "vcgan/layers.hpp"
#include "vcgan/metrics.hpp"
#include "vcgan/models.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"
#include "vcgan/training.hpp"
