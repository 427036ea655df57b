#pragma once

#include "vipnet/bound.hpp"
#include "vipnet/campaign.hpp"
#include "vipnet/conv.hpp"
#include "vipnet/dataset.hpp"
#include "vipnet/layers.hpp"
#include "vipnet/manifest.hpp"
#include "vipnet/model_io.hpp"
#include "vipnet/network.hpp"
#include "vipnet/pipeline.hpp"
#include "vipnet/reference.hpp"
#include "vipnet/report.hpp"
#include "vipnet/rng.hpp"
#include "vipnet/tensor.hpp"
#include "vipnet/threading.hpp"
#include "vipnet/trainer.hpp"
#include "vipnet/vip.hpp"
