#pragma once

#include "wellness_dlm/archive.hpp"
#include "wellness_dlm/config.hpp"
#include "wellness_dlm/data_model.hpp"
#include "wellness_dlm/gauss_hermite.hpp"
#include "wellness_dlm/inference.hpp"
#include "wellness_dlm/normal.hpp"
#include "wellness_dlm/panel_io.hpp"
#include "wellness_dlm/preprocess.hpp"
#include "wellness_dlm/rng.hpp"
#include "wellness_dlm/sampler.hpp"
#include "wellness_dlm/synth.hpp"
#include "wellness_dlm/truncated_normal.hpp"
#include "wellness_dlm/validation.hpp"
