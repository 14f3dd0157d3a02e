#pragma once

#include "fblab/lattice.hpp"
#include "fblab/rng.hpp"
#include "fblab/stats.hpp"
#include "fblab/parallel.hpp"
#include "fblab/model.hpp"
#include "fblab/spectral.hpp"
#include "fblab/uncertainty.hpp"
#include "fblab/fluctuation.hpp"
#include "fblab/wegner.hpp"
#include "fblab/msa.hpp"
#include "fblab/config.hpp"
#include "fblab/report.hpp"
#include "fblab/experiment.hpp"
