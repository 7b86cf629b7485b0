#pragma once

// Umbrella header: wavelet decomposition prior, the trainable decomposition
// network, both task models, importance analysis, data handling and
// persistence.

#include "mwdn/analysis.hpp"
#include "mwdn/checkpoint.hpp"
#include "mwdn/config.hpp"
#include "mwdn/data.hpp"
#include "mwdn/gradcheck.hpp"
#include "mwdn/mlstm.hpp"
#include "mwdn/network.hpp"
#include "mwdn/nn.hpp"
#include "mwdn/rcf.hpp"
#include "mwdn/rng.hpp"
#include "mwdn/tensor.hpp"
#include "mwdn/wavelet.hpp"
