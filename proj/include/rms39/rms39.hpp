#pragma once

#include "rms39/common.hpp"
#include "rms39/converter.hpp"
#include "rms39/dataset.hpp"
#include "rms39/loads.hpp"
#include "rms39/machines.hpp"
#include "rms39/metrics.hpp"
#include "rms39/network.hpp"
#include "rms39/plot.hpp"
#include "rms39/profiles.hpp"
#include "rms39/scenario.hpp"
#include "rms39/simulator.hpp"
#include "rms39/storage.hpp"
#include "rms39/trace_io.hpp"
#include "rms39/wind.hpp"
