#pragma once

#include "fedsynth/dataset.hpp"
#include "fedsynth/rng.hpp"

namespace fedsynth {

// Class means on a sphere of radius 2 (evenly spaced on a circle with a
// random phase in two dimensions, random directions otherwise).
Matrix make_blob_means(std::size_t num_classes, std::size_t dim, Rng& rng);

// points_per_class draws of mean + spread * N(0, I) per class, shuffled.
Dataset sample_blobs(const Matrix& means, std::size_t points_per_class, double spread, Rng& rng);

// Layout and samples from one stream.
Dataset make_blobs(std::size_t num_classes, std::size_t points_per_class, std::size_t dim, double spread, Rng& rng);

}  // namespace fedsynth
