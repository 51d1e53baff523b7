"""
Hashing images and watching the hash move along a blend
=======================================================

Build the default pipeline, hash a few synthetic images, then sweep the
blend ``alpha * x1 + (1 - alpha) * x2`` and print how close each blend's
hash stays to either endpoint.
"""

import numpy as np

from phlab import Pipeline, PipelineConfig
from phlab.datasets import SyntheticSpec, generate_synthetic
from phlab.experiments import run_interpolation_sweep
from phlab.pipeline import hamming_similarity

# a small labeled set: 3 classes, 2 samples each
ds = generate_synthetic(SyntheticSpec(class_count=3, per_class=2, rng_seed=0))
pipe = Pipeline(PipelineConfig())
for img, label in zip(ds.images, ds.labels):
    print(f"{img.image_id}  class={ds.class_names[label]:<16} hash={pipe(img).hex()}")

# same-class images share more bits than cross-class ones
h = [pipe(im) for im in ds.images]
print("same class  :", hamming_similarity(h[0], h[1]))
print("other class :", hamming_similarity(h[0], h[2]))

# with the linear surrogate, similarity to x1 can only grow as alpha -> 1
linear = Pipeline(PipelineConfig(embedder="linear-surrogate"))
sw = run_interpolation_sweep(ds.images[0], ds.images[4], 11, linear.oracle())
for a, s1, s2 in zip(sw.alphas, sw.sim_to_x1, sw.sim_to_x2):
    print(f"alpha={a:.1f}  sim_to_x1={s1:.3f}  sim_to_x2={s2:.3f}")
print("monotone:", bool(np.all(np.diff(sw.sim_to_x1) >= 0)))
