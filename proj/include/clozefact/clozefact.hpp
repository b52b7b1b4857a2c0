#pragma once

#include "clozefact/checkpoint.hpp"
#include "clozefact/classifier.hpp"
#include "clozefact/config.hpp"
#include "clozefact/corpus.hpp"
#include "clozefact/csv.hpp"
#include "clozefact/encoder.hpp"
#include "clozefact/error.hpp"
#include "clozefact/metrics.hpp"
#include "clozefact/mlm.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/pipeline.hpp"
#include "clozefact/prompt.hpp"
#include "clozefact/random.hpp"
#include "clozefact/snapshot.hpp"
#include "clozefact/stacking.hpp"
#include "clozefact/tensor.hpp"
#include "clozefact/tokenizer.hpp"
#include "clozefact/training.hpp"
