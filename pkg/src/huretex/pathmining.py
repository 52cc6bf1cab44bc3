"""Confident prediction paths through a flow graph.

A path picks one node per layer.  Each existing edge contributes a confidence
(the harmonic mean of its certainty and covering); the path's aggregate is the
left fold of a triangular norm or co-norm over those confidences, and any
missing edge forces the aggregate to 0 no matter which aggregator is used (a
never-traversed path must not outrank a realized one).

Three search routes: exhaustive enumeration (cross-check), an exact layered
dynamic program (monotonicity of the aggregators makes per-node maxima safe),
and the generational evolutionary algorithm.  All three rank paths by
(aggregate descending, node-index sequence ascending) and agree bit-for-bit,
including tie-breaks: the DP re-derives candidate completions with the same
left-fold arithmetic the enumerator uses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod
from typing import Callable, Sequence

from .errors import HuretexError
from .rng import SplitMix64
from .rsfg import FlowGraph


class MiningError(HuretexError, ValueError):
    pass


# ---------------------------------------------------------------------------
# aggregators
#
# The implementations below preserve the algebraic identities bitwise where
# tests rely on them: T(a,1)=a and S(a,0)=a exactly, bit-exact commutativity,
# and results always inside [0,1].


def _tnorm_min(a: float, b: float) -> float:
    return a if a < b else b


def _tnorm_product(a: float, b: float) -> float:
    return a * b


def _tnorm_lukasiewicz(a: float, b: float) -> float:
    if a == 1.0:
        return b
    if b == 1.0:
        return a
    s = (a + b) - 1.0
    return s if s > 0.0 else 0.0


def _tconorm_max(a: float, b: float) -> float:
    return a if a > b else b


def _tconorm_probsum(a: float, b: float) -> float:
    if a < b:
        a, b = b, a    # canonical argument order keeps it bit-commutative
    return a + b * (1.0 - a)


def _tconorm_bounded(a: float, b: float) -> float:
    s = a + b
    return s if s < 1.0 else 1.0


@dataclass(frozen=True)
class Aggregator:
    kind: str
    is_tnorm: bool
    identity: float
    fn: Callable[[float, float], float]


AGGREGATORS: dict[str, Aggregator] = {
    "tnorm_min": Aggregator("tnorm_min", True, 1.0, _tnorm_min),
    "tnorm_product": Aggregator("tnorm_product", True, 1.0, _tnorm_product),
    "tnorm_lukasiewicz": Aggregator("tnorm_lukasiewicz", True, 1.0, _tnorm_lukasiewicz),
    "tconorm_max": Aggregator("tconorm_max", False, 0.0, _tconorm_max),
    "tconorm_probsum": Aggregator("tconorm_probsum", False, 0.0, _tconorm_probsum),
    "tconorm_bounded": Aggregator("tconorm_bounded", False, 0.0, _tconorm_bounded),
}


def get_aggregator(name: str | Aggregator) -> Aggregator:
    if isinstance(name, Aggregator):
        return name
    try:
        return AGGREGATORS[name]
    except KeyError:
        raise MiningError(f"unknown aggregator {name!r}; choose one of "
                          f"{sorted(AGGREGATORS)}") from None


def edge_confidence(certainty: float, covering: float) -> float:
    """Harmonic mean ``2cv/(c+v)``; both arguments must be in (0, 1].

    Equal arguments short-circuit so HM(a, a) == a holds bitwise, and the
    result is clamped into [min, max] against ulp-level rounding.
    """
    if not 0.0 < certainty <= 1.0 or not 0.0 < covering <= 1.0:
        raise MiningError(f"certainty/covering must be in (0, 1], got "
                          f"({certainty}, {covering})")
    if certainty == covering:
        return certainty
    hm = 2.0 * certainty * covering / (certainty + covering)
    lo, hi = (certainty, covering) if certainty < covering else (covering, certainty)
    return lo if hm < lo else (hi if hm > hi else hm)


# ---------------------------------------------------------------------------
# path scoring


@dataclass(frozen=True)
class PredictionPath:
    nodes: tuple[int, ...]                 # one node index per layer
    edge_confidences: tuple[float, ...]    # 0.0 where the edge is missing
    aggregate: float
    feasible: bool


def confidence_tables(graph: FlowGraph) -> list[list[list[float | None]]]:
    """Per layer pair: dense (from x to) confidence lookup, None = no edge."""
    tables = []
    for a, pair in enumerate(graph.edges):
        table: list[list[float | None]] = [[None] * len(graph.layers[a + 1])
                                           for _ in range(len(graph.layers[a]))]
        for e in pair:
            table[e.from_index][e.to_index] = edge_confidence(e.certainty, e.covering)
        tables.append(table)
    return tables


def _score_path(nodes: Sequence[int], tables, widths: Sequence[int],
                agg: Aggregator) -> PredictionPath:
    nodes = tuple(int(x) for x in nodes)
    if len(nodes) != len(widths):
        raise MiningError(f"path has {len(nodes)} nodes, graph has "
                          f"{len(widths)} layers")
    for a, j in enumerate(nodes):
        if not 0 <= j < widths[a]:
            raise MiningError(f"node index {j} out of range for layer {a}")
    confs = []
    feasible = True
    v = agg.identity
    for a in range(len(widths) - 1):
        c = tables[a][nodes[a]][nodes[a + 1]]
        if c is None:
            feasible = False
            confs.append(0.0)
        else:
            confs.append(c)
            if feasible:
                v = agg.fn(v, c)
    return PredictionPath(nodes=nodes, edge_confidences=tuple(confs),
                          aggregate=v if feasible else 0.0, feasible=feasible)


def path_aggregate(nodes: Sequence[int], graph: FlowGraph,
                   aggregator: str | Aggregator) -> float:
    """Aggregate confidence of one node-per-layer path (0 if any edge is
    missing)."""
    agg = get_aggregator(aggregator)
    return _score_path(nodes, confidence_tables(graph), graph.widths, agg).aggregate


def _path_sort_key(p: PredictionPath):
    return (-p.aggregate, p.nodes)


# ---------------------------------------------------------------------------
# exact search


def _forward_best(tables, widths: Sequence[int], start_layer: int,
                  init: dict[int, float], agg: Aggregator) -> float:
    """Best achievable final left-fold over all completions of the given
    per-node prefix values; completions that hit a missing edge score 0."""
    cur = init
    for a in range(start_layer, len(widths) - 1):
        nxt: dict[int, float] = {}
        table = tables[a]
        for u in sorted(cur):
            vu = cur[u]
            row = table[u]
            for w in range(widths[a + 1]):
                c = row[w]
                if c is None:
                    continue
                val = agg.fn(vu, c)
                if w not in nxt or val > nxt[w]:
                    nxt[w] = val
        if not nxt:
            return 0.0    # every continuation dies on a missing edge
        cur = nxt
    return max(cur.values())


def best_path_exact(graph: FlowGraph, aggregator: str | Aggregator) -> PredictionPath:
    """Global optimum by layered dynamic programming, ties broken by the
    lexicographically smallest node-index sequence (bit-compatible with
    :func:`enumerate_paths` ordering)."""
    agg = get_aggregator(aggregator)
    widths = graph.widths
    if len(widths) < 2:
        raise MiningError(f"path search needs at least 2 layers, got {len(widths)}")
    tables = confidence_tables(graph)
    vstar = _forward_best(tables, widths, 0,
                          {j: agg.identity for j in range(widths[0])}, agg)

    nodes: list[int] = []
    v = agg.identity
    alive = True
    for a in range(len(widths)):
        for j in range(widths[a]):
            if a == 0:
                v2, alive2 = agg.identity, True
            elif not alive:
                v2, alive2 = 0.0, False
            else:
                c = tables[a - 1][nodes[-1]][j]
                if c is None:
                    v2, alive2 = 0.0, False
                else:
                    v2, alive2 = agg.fn(v, c), True
            h = _forward_best(tables, widths, a, {j: v2}, agg) if alive2 else 0.0
            if h == vstar:
                nodes.append(j)
                v, alive = v2, alive2
                break
        else:
            raise AssertionError("no candidate achieves the optimum")
    return _score_path(nodes, tables, widths, agg)


def enumerate_paths(graph: FlowGraph, aggregator: str | Aggregator,
                    limit: int = 100_000) -> list[PredictionPath]:
    """Every node sequence, scored (missing edges score 0) and sorted by
    (aggregate descending, node sequence ascending)."""
    agg = get_aggregator(aggregator)
    widths = graph.widths
    if len(widths) < 2:
        raise MiningError(f"path search needs at least 2 layers, got {len(widths)}")
    total = prod(widths)
    if total > limit:
        raise MiningError(f"graph has {total} node sequences, which exceeds "
                          f"the enumeration limit {limit}")
    tables = confidence_tables(graph)
    paths = [_score_path(nodes, tables, widths, agg)
             for nodes in itertools.product(*(range(w) for w in widths))]
    paths.sort(key=_path_sort_key)
    return paths


# ---------------------------------------------------------------------------
# evolutionary search


@dataclass(frozen=True)
class EAConfig:
    """Defaults sized for small layered search spaces.

    ``mutation_prob=None`` resolves to ``1/m`` (m = layer count) at mining
    time.  ``generations=0`` is allowed and scores only the random initial
    population.
    """
    population: int = 100
    generations: int = 200
    crossover_prob: float = 0.9
    mutation_prob: float | None = None
    tournament_size: int = 2
    elitism: int = 1
    top_k: int = 5
    seed: int = 0

    def validate(self) -> None:
        if not isinstance(self.population, int) or self.population < 1:
            raise MiningError(f"population must be >= 1, got {self.population!r}")
        if not isinstance(self.generations, int) or self.generations < 0:
            raise MiningError(f"generations must be >= 0, got {self.generations!r}")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise MiningError(f"crossover_prob must be in [0,1], got {self.crossover_prob!r}")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise MiningError(f"mutation_prob must be in [0,1], got {self.mutation_prob!r}")
        if not isinstance(self.tournament_size, int) or self.tournament_size < 1:
            raise MiningError(f"tournament_size must be >= 1, got {self.tournament_size!r}")
        if not isinstance(self.elitism, int) or not 0 <= self.elitism < self.population:
            raise MiningError(f"elitism must be in 0..population-1, got {self.elitism!r}")
        if not isinstance(self.top_k, int) or self.top_k < 1:
            raise MiningError(f"top_k must be >= 1, got {self.top_k!r}")


@dataclass(frozen=True)
class MiningResult:
    paths: tuple[PredictionPath, ...]   # top_k distinct node sequences, ranked
    evaluations: int
    oracle_optimum: float | None = None


def ea_mine(graph: FlowGraph, aggregator: str | Aggregator,
            config: EAConfig | None = None) -> MiningResult:
    """Generational EA over node sequences.

    Chromosome: one node index per layer.  Uniform random initialization,
    tournament selection (ties go to the earliest draw), single-point
    crossover at a layer boundary, per-gene mutation to a uniformly random
    node of that layer, elitism, and an archive of every evaluated sequence
    from which the top_k distinct paths are ranked.

    Fully deterministic given ``config.seed``; one sequential SplitMix64
    stream consumed in this order: (1) initial population, per individual per
    layer one ``randint``; (2) per generation, per offspring pair: two
    tournaments (``tournament_size`` ``randint`` draws each), one crossover
    coin, one ``randint`` for the crossover point when it hits, then per
    child (both children, even if only one is appended) per gene one mutation
    coin plus one ``randint`` when it hits.
    """
    agg = get_aggregator(aggregator)
    config = config or EAConfig()
    config.validate()
    widths = graph.widths
    m = len(widths)
    if m < 2:
        raise MiningError(f"path search needs at least 2 layers, got {m}")
    tables = confidence_tables(graph)
    mut_prob = config.mutation_prob if config.mutation_prob is not None else 1.0 / m
    rng = SplitMix64(config.seed)

    archive: dict[tuple[int, ...], PredictionPath] = {}
    evaluations = 0

    def evaluate(nodes: tuple[int, ...]) -> float:
        nonlocal evaluations
        evaluations += 1
        path = _score_path(nodes, tables, widths, agg)
        if path.nodes not in archive:
            archive[path.nodes] = path
        return path.aggregate

    population = [tuple(rng.randint(w) for w in widths)
                  for _ in range(config.population)]
    fitness = [evaluate(ind) for ind in population]

    def tournament() -> tuple[int, ...]:
        best = -1
        for _ in range(config.tournament_size):
            idx = rng.randint(config.population)
            if best < 0 or fitness[idx] > fitness[best]:
                best = idx
        return population[best]

    for _generation in range(config.generations):
        elite_order = sorted(range(config.population),
                             key=lambda i: (-fitness[i], population[i]))
        next_pop = [population[i] for i in elite_order[:config.elitism]]
        next_fit = [fitness[i] for i in elite_order[:config.elitism]]
        while len(next_pop) < config.population:
            p1 = tournament()
            p2 = tournament()
            if rng.chance(config.crossover_prob) and m >= 2:
                point = 1 + rng.randint(m - 1)
                children = (p1[:point] + p2[point:], p2[:point] + p1[point:])
            else:
                children = (p1, p2)
            for child in children:
                genes = list(child)
                for g in range(m):
                    if rng.chance(mut_prob):
                        genes[g] = rng.randint(widths[g])
                if len(next_pop) < config.population:
                    mutated = tuple(genes)
                    next_pop.append(mutated)
                    next_fit.append(evaluate(mutated))
        population, fitness = next_pop, next_fit

    ranked = sorted(archive.values(), key=_path_sort_key)
    oracle = best_path_exact(graph, agg).aggregate
    return MiningResult(paths=tuple(ranked[:config.top_k]),
                        evaluations=evaluations, oracle_optimum=oracle)
