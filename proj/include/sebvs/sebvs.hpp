#pragma once

#include "sebvs/common.hpp"
#include "sebvs/image.hpp"
#include "sebvs/dvs.hpp"
#include "sebvs/event_frame.hpp"
#include "sebvs/worldsim.hpp"
#include "sebvs/expert.hpp"
#include "sebvs/dataset.hpp"
#include "sebvs/vit.hpp"
#include "sebvs/trainer.hpp"
#include "sebvs/recorder.hpp"
#include "sebvs/eval.hpp"
#include "sebvs/config.hpp"
