#pragma once

// Umbrella header for the multidomain training data pathway: dataset
// manifests, room-simulated noise, bandwidth and codec perturbation, the
// logmel/LFR frontend, the asynchronous feature pipeline, and cluster
// analysis.

#include "mdaudio/audio.hpp"
#include "mdaudio/bounded_queue.hpp"
#include "mdaudio/cluster.hpp"
#include "mdaudio/codec.hpp"
#include "mdaudio/fft.hpp"
#include "mdaudio/frontend.hpp"
#include "mdaudio/manifest.hpp"
#include "mdaudio/perturb.hpp"
#include "mdaudio/pipeline.hpp"
#include "mdaudio/resample.hpp"
#include "mdaudio/rng.hpp"
#include "mdaudio/roomsim.hpp"
