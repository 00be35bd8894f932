#pragma once

// Umbrella header for the multi-domain image restoration library.

#include "restore/autodiff.hpp"
#include "restore/conditioning.hpp"
#include "restore/data.hpp"
#include "restore/errors.hpp"
#include "restore/label_estimation.hpp"
#include "restore/losses.hpp"
#include "restore/metrics.hpp"
#include "restore/networks.hpp"
#include "restore/nn_ops.hpp"
#include "restore/random.hpp"
#include "restore/tensor.hpp"
#include "restore/training.hpp"
#include "restore/wavelet.hpp"
