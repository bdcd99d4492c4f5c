#pragma once

// Umbrella header for the CHNS two-phase flow solver library.

#include "chns/basis.hpp"
#include "chns/config.hpp"
#include "chns/csr.hpp"
#include "chns/errors.hpp"
#include "chns/field.hpp"
#include "chns/forms.hpp"
#include "chns/limiters.hpp"
#include "chns/mesh.hpp"
#include "chns/newton.hpp"
#include "chns/observables.hpp"
#include "chns/parallel.hpp"
#include "chns/quadrature.hpp"
#include "chns/scenario.hpp"
#include "chns/simulation.hpp"
#include "chns/solvers.hpp"
#include "chns/stepper.hpp"
#include "chns/vtk.hpp"
