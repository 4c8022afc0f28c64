#pragma once

#include <gtest/gtest.h>

#include "fixtures.hpp"
