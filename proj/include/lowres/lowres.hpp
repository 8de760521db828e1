#pragma once

#include "lowres/alignment.hpp"
#include "lowres/augment.hpp"
#include "lowres/bpe.hpp"
#include "lowres/cleaning.hpp"
#include "lowres/corpus.hpp"
#include "lowres/denoise.hpp"
#include "lowres/error.hpp"
#include "lowres/manifest.hpp"
#include "lowres/metrics.hpp"
#include "lowres/pipeline.hpp"
#include "lowres/process.hpp"
#include "lowres/random.hpp"
#include "lowres/rdrop.hpp"
#include "lowres/report.hpp"
#include "lowres/sampling.hpp"
