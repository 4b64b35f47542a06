#pragma once

#include "lsg/binary_io.hpp"
#include "lsg/dataset.hpp"
#include "lsg/embeddings.hpp"
#include "lsg/error.hpp"
#include "lsg/gcn.hpp"
#include "lsg/grad_check.hpp"
#include "lsg/gradient_suite.hpp"
#include "lsg/graph.hpp"
#include "lsg/matrix.hpp"
#include "lsg/optimizer.hpp"
#include "lsg/primary_model.hpp"
#include "lsg/random.hpp"
#include "lsg/sparse.hpp"
#include "lsg/trainer.hpp"
