#pragma once

// Umbrella header.

#include "abed/abft_gemm.hpp"
#include "abed/checksum.hpp"
#include "abed/convolution.hpp"
#include "abed/cost_model.hpp"
#include "abed/faults.hpp"
#include "abed/network_config.hpp"
#include "abed/rng.hpp"
#include "abed/tensor.hpp"
