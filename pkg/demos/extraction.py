"""
Reading the class off a hash
============================

Given only hashes of a labeled database and the hash of an unseen image,
fit signed weights over the database and vote by class.
"""

from phlab import Pipeline, PipelineConfig
from phlab.attacks import ExtractionConfig, extract_classes
from phlab.datasets import SyntheticSpec, generate_synthetic, split_by_parity

train, test = split_by_parity(generate_synthetic(SyntheticSpec(per_class=20, rng_seed=3)))
oracle = Pipeline(PipelineConfig()).oracle()
db = [oracle(im) for im in train.images]
targets = [oracle(im) for im in test.images]

results = extract_classes(targets, db, train.labels, ExtractionConfig(epochs=5), n_classes=train.class_count)
hits = sum(r.predicted_class == y for r, y in zip(results, test.labels))
print(f"accuracy {hits / len(test):.2f} over {len(test)} hashes (chance {1 / train.class_count:.2f})")
r = results[0]
print("class support for the first target:", r.support.round(3))
