"""
Growing a near-collision with a genetic search
==============================================

Search signed blends of a small database for an image whose hash agrees
with a held-out target on as many bits as possible, then compare with the
best of the same number of random noise images.
"""

import numpy as np

from phlab import Image, Pipeline, PipelineConfig
from phlab.attacks import GeneticConfig, baseline_max_similarity, genetic_near_collision
from phlab.datasets import SyntheticSpec, generate_synthetic, split_by_parity

train, held_out = split_by_parity(generate_synthetic(SyntheticSpec(per_class=4, rng_seed=2)))
oracle = Pipeline(PipelineConfig()).oracle()
target = oracle(held_out.images[0])

cfg = GeneticConfig(iterations=30)
res = genetic_near_collision(target, list(train.images), oracle, cfg)
print("best fitness per 5 generations:", np.round(res.history[::5], 3))
print(f"final fitness {res.fitness:.3f} using {res.queries} queries")

# uniform noise with the same query budget
rng = np.random.default_rng(0)
base = baseline_max_similarity(target, lambda: Image(rng.random((32, 32, 3))), res.queries, oracle)
print(f"noise baseline {base:.3f}")
