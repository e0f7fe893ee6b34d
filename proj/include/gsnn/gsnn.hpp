#pragma once

// Everything: data generation, training stages, correction, perception and file formats.

#include "gsnn/correction.hpp"
#include "gsnn/dataset.hpp"
#include "gsnn/perception.hpp"
