#pragma once

#include "cdnn/data.hpp"
#include "cdnn/diagnostics.hpp"
#include "cdnn/errors.hpp"
#include "cdnn/gradcheck.hpp"
#include "cdnn/io.hpp"
#include "cdnn/layers.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/network.hpp"
#include "cdnn/random.hpp"
#include "cdnn/regularization.hpp"
#include "cdnn/spectral.hpp"
#include "cdnn/training.hpp"
#include "cdnn/verify.hpp"
