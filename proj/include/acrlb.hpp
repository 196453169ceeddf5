#ifndef ACRLB_HPP
#define ACRLB_HPP

#include "acrlb/bound.hpp"
#include "acrlb/error.hpp"
#include "acrlb/estimation.hpp"
#include "acrlb/experiments.hpp"
#include "acrlb/geometry.hpp"
#include "acrlb/linalg.hpp"
#include "acrlb/model.hpp"
#include "acrlb/model_spec.hpp"
#include "acrlb/report.hpp"
#include "acrlb/rng.hpp"
#include "acrlb/selftest.hpp"

#endif  // ACRLB_HPP
