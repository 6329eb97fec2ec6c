#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/bitstream.hpp>
#include <sbnn/codecs.hpp>
#include <sbnn/container.hpp>
#include <sbnn/data.hpp>
#include <sbnn/design.hpp>
#include <sbnn/domain.hpp>
#include <sbnn/error.hpp>
#include <sbnn/infer.hpp>
#include <sbnn/model.hpp>
#include <sbnn/run.hpp>
#include <sbnn/train.hpp>
