#pragma once

#include <nsq/condense.hpp>
#include <nsq/diagnostics.hpp>
#include <nsq/embed.hpp>
#include <nsq/error.hpp>
#include <nsq/experiment.hpp>
#include <nsq/parallel.hpp>
#include <nsq/quantize.hpp>
#include <nsq/random.hpp>
#include <nsq/recover.hpp>
#include <nsq/transforms.hpp>
