#ifndef SCRN_SCRN_HPP_
#define SCRN_SCRN_HPP_

#include "scrn/numerics.hpp"
#include "scrn/corpus.hpp"
#include "scrn/model.hpp"
#include "scrn/gradients.hpp"
#include "scrn/cells.hpp"
#include "scrn/output.hpp"
#include "scrn/evaluator.hpp"
#include "scrn/trainer.hpp"
#include "scrn/checkpoint.hpp"
#include "scrn/gradcheck.hpp"

#endif  // SCRN_SCRN_HPP_
