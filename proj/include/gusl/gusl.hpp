#pragma once

#include "gusl/error.hpp"
#include "gusl/parallel.hpp"
#include "gusl/image.hpp"
#include "gusl/image_io.hpp"
#include "gusl/metrics.hpp"
#include "gusl/trees.hpp"
#include "gusl/dcp.hpp"
#include "gusl/saab.hpp"
#include "gusl/rft.hpp"
#include "gusl/lnt.hpp"
#include "gusl/ushape.hpp"
#include "gusl/model_io.hpp"
#include "gusl/harness.hpp"
