#pragma once

#include "torusmap/types.hpp"
#include "torusmap/mesh.hpp"
#include "torusmap/torus.hpp"
#include "torusmap/energy.hpp"
#include "torusmap/homology.hpp"
#include "torusmap/initmap.hpp"
#include "torusmap/optim.hpp"
#include "torusmap/quality.hpp"
#include "torusmap/registration.hpp"
#include "torusmap/synthetic.hpp"
#include "torusmap/pipeline.hpp"
