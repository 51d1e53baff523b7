"""
Evading the hash with a faint blend
===================================

Mix a little of a carrier image into a source until the hash flips, and
check how little the picture itself changed.
"""

from phlab import Pipeline, PipelineConfig
from phlab.attacks import evade
from phlab.datasets import SyntheticSpec, generate_synthetic

ds = generate_synthetic(SyntheticSpec(class_count=2, per_class=1, rng_seed=1))
source, carrier = ds.images
oracle = Pipeline(PipelineConfig()).oracle()

res = evade(source, carrier, oracle, grid_step=0.01)
print(f"alpha* = {res.alpha_star:.2f}  (fraction of the source kept)")
print(f"SSIM to source = {res.ssim_to_source:.4f}")
print(f"hash changed: {res.evaded}  after {res.queries} queries")
print(oracle(source).hex(), "->", oracle(res.adversarial_image).hex())
