#pragma once

#include "agent_bias.hpp"
#include "agent_module.hpp"
#include "attention.hpp"
#include "bench.hpp"
#include "model.hpp"
#include "module_io.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"
#include "verify.hpp"
