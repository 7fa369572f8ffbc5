#pragma once

// Umbrella header.

#include "msface/detect.hpp"
#include "msface/error.hpp"
#include "msface/face_corpus.hpp"
#include "msface/geometry.hpp"
#include "msface/image.hpp"
#include "msface/imgproc.hpp"
#include "msface/io.hpp"
#include "msface/manifest.hpp"
#include "msface/pgm.hpp"
#include "msface/pipeline.hpp"
#include "msface/pose_forest.hpp"
#include "msface/recognize.hpp"
#include "msface/synth.hpp"
#include "msface/thermal.hpp"
#include "msface/verify.hpp"
