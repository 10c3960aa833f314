#ifndef SILAB_SILAB_HPP
#define SILAB_SILAB_HPP

#include "silab/autodiff.hpp"
#include "silab/checkpoint.hpp"
#include "silab/commands.hpp"
#include "silab/config.hpp"
#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/geometry.hpp"
#include "silab/io.hpp"
#include "silab/lab.hpp"
#include "silab/net.hpp"
#include "silab/optim.hpp"
#include "silab/params.hpp"
#include "silab/pool.hpp"
#include "silab/protocols.hpp"
#include "silab/regimes.hpp"
#include "silab/rng.hpp"
#include "silab/svg.hpp"
#include "silab/tensor.hpp"
#include "silab/text.hpp"
#include "silab/train.hpp"

#endif
