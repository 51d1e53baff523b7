"""Black-box interpolation attacks on a perceptual hash.

Every attack sees the hash function only as ``oracle(image) -> BinaryHash``
(or, for class extraction, only precomputed hashes); nothing here reads a
pipeline's configuration or internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from phlab.imaging import Image, check_weights, interpolate, ssim, stack_images, weighted_sum
from phlab.pipeline import HASH_BITS, BinaryHash, hamming_similarity

Oracle = Callable[[Image], BinaryHash]


def normalize_weights(p: np.ndarray) -> np.ndarray | None:
    """Scale so sum(|p|) == 1; None when p is identically zero."""
    total = np.abs(p).sum()
    if total == 0 or not np.isfinite(total):
        return None
    return p / total


def format_weights(p, tol: float = 0.0) -> str:
    """Sparse ``index:value`` text, one pair per nonzero entry."""
    return " ".join(f"{i}:{p[i]:.17g}" for i in np.flatnonzero(np.abs(p) > tol))


def parse_weights(text: str, k: int) -> np.ndarray:
    p = np.zeros(k)
    for item in text.split():
        i, v = item.split(":")
        p[int(i)] = float(v)
    return check_weights(p, k)


# --------------------------------------------------------------------------
# Evasion


@dataclass(frozen=True)
class EvasionResult:
    alpha_star: float
    adversarial_image: Image
    ssim_to_source: float
    evaded: bool
    queries: int


def alpha_grid(grid_step: float) -> np.ndarray:
    """Candidate alphas 1 - step, 1 - 2 step, ... strictly inside (0, 1)."""
    n = int(np.floor(1.0 / grid_step + 1e-9))
    alphas = np.round(1.0 - grid_step * np.arange(1, n + 1), 12)
    return alphas[alphas > 0]


def evade(x: Image, x0: Image, oracle: Oracle, grid_step: float = 0.01) -> EvasionResult:
    """Blend a carrier ``x0`` into ``x`` as little as possible to change its hash.

    Scans alpha downward from 1 and stops at the first (largest) alpha whose
    blend ``alpha * x + (1 - alpha) * x0`` hashes differently from ``x``.
    On failure the source itself is returned with alpha* = 0.
    """
    if x.shape != x0.shape:
        raise ValueError(f"source {x.shape} and carrier {x0.shape} differ in shape")
    if not 0 < grid_step <= 0.1:
        raise ValueError("grid_step must lie in (0, 0.1]")
    h = oracle(x)
    queries = 1
    for alpha in alpha_grid(grid_step):
        cand = interpolate(x, x0, float(alpha))
        queries += 1
        if oracle(cand) != h:
            return EvasionResult(float(alpha), cand, ssim(x, cand), True, queries)
    return EvasionResult(0.0, x, 1.0, False, queries)


# --------------------------------------------------------------------------
# Genetic near-collision search


@dataclass(frozen=True)
class GeneticConfig:
    population_start: int = 100
    population_end: int = 10
    decay_rate: float = 0.97
    iterations: int = 50
    children_per_iter: int = 20
    mutation_range: float = 0.05
    rng_seed: int = 0
    initial_nonzero: int = 5

    def __post_init__(self):
        if not 0 < self.population_end <= self.population_start:
            raise ValueError("need 0 < population_end <= population_start")
        if not 0 < self.decay_rate < 1:
            raise ValueError("decay_rate must lie in (0, 1)")
        if self.iterations < 0 or self.children_per_iter < 1 or self.mutation_range < 0:
            raise ValueError("invalid genetic schedule")

    def population_size(self, generation: int) -> int:
        return max(self.population_end, int(round(self.population_start * self.decay_rate**generation)))

    @property
    def query_budget(self) -> int:
        return self.population_start + self.iterations * self.children_per_iter


class GeneticResult(NamedTuple):
    weights: np.ndarray
    image: Image
    fitness: float
    history: np.ndarray  # best-so-far fitness after init and after each generation
    queries: int


def initial_population(k: int, cfg: GeneticConfig, rng: np.random.Generator) -> list[np.ndarray]:
    nnz = min(cfg.initial_nonzero, k)
    pop = []
    while len(pop) < cfg.population_start:
        p = np.zeros(k)
        p[rng.choice(k, size=nnz, replace=False)] = rng.uniform(-1.0, 1.0, nnz)
        p = normalize_weights(p)
        if p is not None:
            pop.append(p)
    return pop


def crossover(p: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray | None:
    return normalize_weights(alpha * p + (1.0 - alpha) * q)


def mutate(p: np.ndarray, index: int, delta: float) -> np.ndarray | None:
    r = p.copy()
    r[index] += delta
    return normalize_weights(r)


def genetic_near_collision(
    target: BinaryHash,
    database: Sequence[Image],
    oracle: Oracle,
    cfg: GeneticConfig = GeneticConfig(),
    rng: np.random.Generator | None = None,
) -> GeneticResult:
    """Search signed blends of ``database`` for a hash close to ``target``.

    Children come from crossover or mutation with equal probability; the
    population is truncated to the top individuals by fitness after each
    generation, shrinking geometrically from ``population_start`` toward
    ``population_end``.
    """
    stack = stack_images(database)
    k = len(stack)
    if rng is None:
        rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
    target_signed = target.signed
    queries = 0

    def render(p):
        return Image(np.clip(weighted_sum(stack, p), 0.0, 1.0))

    def fitness(p):
        nonlocal queries
        queries += 1
        s = oracle(render(p)).signed
        return 0.5 * (1.0 + float(s @ target_signed) / HASH_BITS)

    pop = initial_population(k, cfg, rng)
    fit = np.array([fitness(p) for p in pop])
    best_i = int(np.argmax(fit))
    best_p, best_f = pop[best_i], float(fit[best_i])
    history = [best_f]

    for g in range(cfg.iterations):
        children = []
        for _ in range(cfg.children_per_iter):
            if rng.random() < 0.5:
                i, j = rng.integers(len(pop), size=2)
                child = crossover(pop[i], pop[j], rng.uniform(0.0, 1.0))
                parent = pop[i]
            else:
                i = rng.integers(len(pop))
                child = mutate(pop[i], int(rng.integers(k)), rng.uniform(-cfg.mutation_range, cfg.mutation_range))
                parent = pop[i]
            children.append(parent.copy() if child is None else child)
        child_fit = np.array([fitness(c) for c in children])
        pop = pop + children
        fit = np.concatenate([fit, child_fit])
        order = np.argsort(-fit, kind="stable")[: cfg.population_size(g + 1)]
        pop = [pop[i] for i in order]
        fit = fit[order]
        if fit[0] > best_f:
            best_p, best_f = pop[0], float(fit[0])
        history.append(best_f)

    return GeneticResult(best_p.copy(), render(best_p), best_f, np.array(history), queries)


# --------------------------------------------------------------------------
# Class extraction from hashes


@dataclass(frozen=True)
class ExtractionConfig:
    epochs: int = 25
    steps_per_epoch: int = 100
    learning_rate: float = 2e-5
    entropy_epsilon: float = 1e-8
    rng_seed: int = 0
    init: str = "uniform"

    def __post_init__(self):
        if min(self.epochs, self.steps_per_epoch) <= 0 or self.learning_rate <= 0 or self.entropy_epsilon <= 0:
            raise ValueError("extraction settings must be positive")
        if self.init not in ("uniform", "random"):
            raise ValueError("init must be 'uniform' or 'random'")


class ExtractionResult(NamedTuple):
    predicted_class: int
    support: np.ndarray  # total |p_i| per class id
    weights: np.ndarray


def extraction_objective(p, hashes, target, eps: float = 1e-8) -> float:
    """||sum_i p_i h_i - h*||^2 - sum_i |p_i| log(|p_i| + eps)."""
    p = np.asarray(p, dtype=np.float64)
    r = p @ hashes - target
    a = np.abs(p)
    return float(r @ r - np.sum(a * np.log(a + eps)))


def extraction_gradient(p, hashes, target, eps: float = 1e-8) -> np.ndarray:
    """Analytic gradient of :func:`extraction_objective` (p may be batched)."""
    p = np.asarray(p, dtype=np.float64)
    r = p @ hashes - target
    a = np.abs(p)
    return 2.0 * r @ hashes.T - np.sign(p) * (np.log(a + eps) + a / (a + eps))


def _descend(hashes: np.ndarray, targets: np.ndarray, cfg: ExtractionConfig) -> np.ndarray:
    # rows of `targets` are independent problems solved in lockstep
    k = hashes.shape[0]
    t = targets.shape[0]
    if cfg.init == "uniform":
        p = np.full((t, k), 1.0 / k)
    else:
        rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
        p = rng.uniform(-1.0, 1.0, (t, k))
        p /= np.abs(p).sum(axis=1, keepdims=True)
    for _ in range(cfg.epochs * cfg.steps_per_epoch):
        p = p - cfg.learning_rate * extraction_gradient(p, hashes, targets, cfg.entropy_epsilon)
        total = np.abs(p).sum(axis=1, keepdims=True)
        p = np.where(total > 0, p / np.where(total > 0, total, 1.0), 1.0 / k)
    return p


def class_support(p: np.ndarray, labels, n_classes: int) -> np.ndarray:
    return np.bincount(np.asarray(labels), weights=np.abs(p), minlength=n_classes)


def extract_classes(
    targets: Sequence[BinaryHash],
    database_hashes: Sequence[BinaryHash],
    labels: Sequence[int],
    cfg: ExtractionConfig = ExtractionConfig(),
    n_classes: int | None = None,
) -> list[ExtractionResult]:
    """Vectorized :func:`extract_class` over many target hashes."""
    if len(database_hashes) != len(labels):
        raise ValueError("database_hashes and labels differ in length")
    if len(database_hashes) < 1:
        raise ValueError("database must be nonempty")
    labels = np.asarray(labels, dtype=int)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    hashes = np.array([h.signed for h in database_hashes])
    if not len(targets):
        return []
    tmat = np.array([h.signed for h in targets])
    ps = _descend(hashes, tmat, cfg)
    out = []
    for p in ps:
        support = class_support(p, labels, n_classes)
        out.append(ExtractionResult(int(np.argmax(support)), support, p))
    return out


def extract_class(
    target: BinaryHash,
    database_hashes: Sequence[BinaryHash],
    labels: Sequence[int],
    cfg: ExtractionConfig = ExtractionConfig(),
    n_classes: int | None = None,
) -> ExtractionResult:
    """Guess the class of the image behind ``target`` from hashes alone.

    Gradient descent on the extraction objective in the signed hash view,
    projecting back to sum(|p|) == 1 after each step; the prediction is the
    class carrying the most absolute weight.
    """
    return extract_classes([target], database_hashes, labels, cfg, n_classes)[0]


# --------------------------------------------------------------------------
# Random-search baseline


def baseline_max_similarity(target: BinaryHash, sampler: Callable[[], Image], n: int, oracle: Oracle) -> float:
    """Best similarity to ``target`` among ``n`` images drawn from ``sampler``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return max(hamming_similarity(oracle(sampler()), target) for _ in range(n))
