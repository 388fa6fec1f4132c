#pragma once

#include "facexai/atlas.hpp"
#include "facexai/classifier.hpp"
#include "facexai/color.hpp"
#include "facexai/error.hpp"
#include "facexai/eval.hpp"
#include "facexai/facealign.hpp"
#include "facexai/image.hpp"
#include "facexai/io.hpp"
#include "facexai/landmarks.hpp"
#include "facexai/lime.hpp"
#include "facexai/parallel.hpp"
#include "facexai/rise.hpp"
#include "facexai/rng.hpp"
#include "facexai/segmentation.hpp"
#include "facexai/wire.hpp"
