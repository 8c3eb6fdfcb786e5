#pragma once

#include "vcgan/diffcore/adam.hpp"
#include "vcgan/diffcore/conv.hpp"
#include "vcgan/diffcore/gradcheck.hpp"
#include "vcgan/diffcore/graph.hpp"
#include "vcgan/diffcore/norm.hpp"
#include "vcgan/diffcore/ops.hpp"
#include "vcgan/diffcore/spectral.hpp"
#include "vcgan/diffcore/tape.hpp"
#include "vcgan/diffcore/tensor.hpp"
