#ifndef FIRE_FIRE_HPP
#define FIRE_FIRE_HPP

#include "fire/dataset.hpp"
#include "fire/ensemble_io.hpp"
#include "fire/error.hpp"
#include "fire/extract.hpp"
#include "fire/mapping.hpp"
#include "fire/path.hpp"
#include "fire/penalties.hpp"
#include "fire/solver.hpp"
#include "fire/synthetic.hpp"
#include "fire/training.hpp"
#include "fire/tree.hpp"

#endif  // FIRE_FIRE_HPP
