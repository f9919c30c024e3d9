#pragma once

#include "skinseg/config.hpp"
#include "skinseg/error.hpp"
#include "skinseg/evaluation.hpp"
#include "skinseg/image_io.hpp"
#include "skinseg/imaging.hpp"
#include "skinseg/kernels.hpp"
#include "skinseg/model_io.hpp"
#include "skinseg/morphology.hpp"
#include "skinseg/nn.hpp"
#include "skinseg/patches.hpp"
#include "skinseg/pipeline.hpp"
#include "skinseg/preprocess.hpp"
#include "skinseg/synthetic.hpp"
