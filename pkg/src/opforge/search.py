"""Reward-guided tree search over layered model-building candidates.

The reasoning tree has four layers: the question (Q), sets and parameters
(SP), variables (V), and objective plus constraints (OC). A candidate
generator proposes content fragments layer by layer, a process scorer rates
cumulative path prefixes, and a pairwise preference judge compares finished
candidates. A reasoning step is one generated child fragment; scoring and
preference calls are never counted as steps.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence


class SearchError(RuntimeError):
    """Raised when a suite call fails or a contract is violated mid-search."""


class Layer(enum.Enum):
    Q = 0
    SP = 1
    V = 2
    OC = 3

    @property
    def successor(self) -> "Layer":
        if self is Layer.OC:
            raise ValueError("OC is the final layer")
        return Layer(self.value + 1)


EXPANSION_LAYERS = (Layer.SP, Layer.V, Layer.OC)


class Algorithm(enum.Enum):
    GREEDY = "greedy"
    EPSILON_GREEDY = "epsilon_greedy"
    RANDOM_GREEDY = "random_greedy"
    BEAM = "beam"
    BPP = "bpp"
    FULL_TRAVERSE = "full_traverse"
    DIRECT = "direct"


@dataclass(frozen=True)
class Node:
    id: int
    layer: Layer
    content: str
    parent_id: int | None = None
    prm_score: float | None = None


@dataclass(frozen=True)
class SearchConfig:
    algorithm: Algorithm
    branching: int = 3
    beam_width: int = 2
    epsilon: float = 0.1
    threshold: float = 0.05
    rng_seed: int = 0

    def check(self) -> None:
        if self.branching < 1:
            raise ValueError("branching must be at least 1")
        if not 1 <= self.beam_width <= self.branching ** len(EXPANSION_LAYERS):
            raise ValueError("beam width must lie in [1, branching^depth]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.threshold < 0.0:
            raise ValueError("threshold must be non-negative")


class CandidateGenerator(Protocol):
    def expand(
        self, question: str, path_prefix: tuple[str, ...], layer: Layer | None, n: int
    ) -> list[str]:
        """Return exactly ``n`` content fragments (``layer=None``: one complete model)."""


class ProcessScorer(Protocol):
    def score_logit(self, question: str, path_prefix: tuple[str, ...]) -> float:
        """Logit that the cumulative prefix is a correct partial model."""


class PreferenceJudge(Protocol):
    def prefer_logit(self, question: str, candidate_a: str, candidate_b: str) -> float:
        """Logit that the first candidate is the better complete model."""


@dataclass(frozen=True)
class ScorerSuite:
    generator: CandidateGenerator
    process_scorer: ProcessScorer
    preference_judge: PreferenceJudge


@dataclass(frozen=True)
class SearchOutcome:
    chosen_leaf: Node
    reasoning_steps: int
    visited: tuple[int, ...]
    final_queue: tuple[Node, ...] = ()
    final_scores: tuple[float, ...] = ()

    def report(self, algorithm: str, seed: int) -> dict:
        return {
            "algorithm": algorithm,
            "seed": seed,
            "reasoning_steps": self.reasoning_steps,
            "chosen_leaf": {
                "id": self.chosen_leaf.id,
                "content": self.chosen_leaf.content,
                "prm_score": self.chosen_leaf.prm_score,
            },
            "final_queue": [
                {"id": node.id, "content": node.content, "score": score}
                for node, score in zip(self.final_queue, self.final_scores)
            ],
            "visited": list(self.visited),
        }


# ---------------------------------------------------------------------------
# Elementary operations


def sigmoid(logit: float) -> float:
    """Numerically stable logistic function."""
    if logit >= 0:
        return 1.0 / (1.0 + math.exp(-logit))
    value = math.exp(logit)
    return value / (1.0 + value)


def select_greedy(scores: Sequence[float]) -> int:
    """Index of the highest score; ties go to the lowest index."""
    if not scores:
        raise ValueError("empty candidate set")
    return max(range(len(scores)), key=lambda i: (scores[i], -i))


def select_epsilon_greedy(scores: Sequence[float], epsilon: float, rng: random.Random) -> int:
    """With probability epsilon pick uniformly, otherwise greedily."""
    if not scores:
        raise ValueError("empty candidate set")
    if rng.random() < epsilon:
        return rng.randrange(len(scores))
    return select_greedy(scores)


def select_random_greedy(
    scores: Sequence[float], threshold: float, rng: random.Random
) -> int:
    """Uniform choice among candidates within ``threshold`` of the best score."""
    if not scores:
        raise ValueError("empty candidate set")
    best = max(scores)
    eligible = [i for i, s in enumerate(scores) if best - s <= threshold]
    return rng.choice(eligible)


def aggregate_preference(prefs: Sequence[Sequence[float]]) -> list[float]:
    """Average each candidate's pairwise win scores over all opponents."""
    n = len(prefs)
    if n < 2:
        raise ValueError("preference aggregation needs at least two candidates")
    return [
        sum(prefs[i][j] for j in range(n) if j != i) / (n - 1) for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Tree bookkeeping


class SearchTree:
    def __init__(self, question: str) -> None:
        self.question = question
        self.nodes: list[Node] = [Node(0, Layer.Q, question)]

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def add(
        self, layer: Layer, content: str, parent: Node, prm_score: float | None = None
    ) -> Node:
        node = Node(len(self.nodes), layer, content, parent.id, prm_score)
        self.nodes.append(node)
        return node

    def path_fragments(self, node: Node) -> tuple[str, ...]:
        """Content fragments from the first layer below Q down to ``node``."""
        fragments: list[str] = []
        current: Node | None = node
        while current is not None and current.layer is not Layer.Q:
            fragments.append(current.content)
            parent_id = current.parent_id
            current = self.nodes[parent_id] if parent_id is not None else None
        return tuple(reversed(fragments))

    @property
    def steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def visited(self) -> tuple[int, ...]:
        return tuple(node.id for node in self.nodes)


def _generate(
    tree: SearchTree,
    suite: ScorerSuite,
    parent: Node,
    layer: Layer,
    n: int,
    score: bool = True,
) -> list[Node]:
    prefix = tree.path_fragments(parent)
    try:
        fragments = suite.generator.expand(tree.question, prefix, layer, n)
    except Exception as exc:
        raise SearchError(
            f"generator failed at layer {layer.name}, node {parent.id}: {exc}"
        ) from exc
    if len(fragments) != n:
        raise SearchError(
            f"generator returned {len(fragments)} fragments at layer {layer.name},"
            f" expected {n}"
        )
    children = []
    for fragment in fragments:
        prm = None
        if score:
            try:
                logit = suite.process_scorer.score_logit(
                    tree.question, prefix + (fragment,)
                )
            except Exception as exc:
                raise SearchError(
                    f"process scorer failed at layer {layer.name}, node {parent.id}: {exc}"
                ) from exc
            prm = sigmoid(logit)
        children.append(tree.add(layer, fragment, parent, prm))
    return children


def beam_step(
    tree: SearchTree,
    beams: Sequence[Node],
    k: int,
    suite: ScorerSuite,
    question: str,
    branching: int = 3,
) -> list[Node]:
    """Expand every beam and keep the top-k children by process score.

    Ties break toward the lower parent index, then the lower child index,
    which the stable sort provides for free.
    """
    if not beams:
        raise ValueError("empty beam queue")
    del question  # carried by the tree; kept in the signature for clarity
    children: list[Node] = []
    for beam in beams:
        children.extend(
            _generate(tree, suite, beam, beams[0].layer.successor, branching)
        )
    ranked = sorted(children, key=lambda node: -(node.prm_score or 0.0))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Search algorithms


def _judge_pair(suite: ScorerSuite, question: str, a: str, b: str) -> float:
    try:
        forward = sigmoid(suite.preference_judge.prefer_logit(question, a, b))
        backward = sigmoid(suite.preference_judge.prefer_logit(question, b, a))
    except Exception as exc:
        raise SearchError(f"preference judge failed: {exc}") from exc
    # querying both orders and averaging cancels position bias
    return (forward + (1.0 - backward)) / 2.0


def _preference_matrix(
    suite: ScorerSuite, question: str, candidates: Sequence[str]
) -> list[list[float]]:
    n = len(candidates)
    prefs = [[0.5] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            score = _judge_pair(suite, question, candidates[i], candidates[j])
            prefs[i][j] = score
            prefs[j][i] = 1.0 - score
    return prefs


def _greedy_family(
    tree: SearchTree, config: SearchConfig, suite: ScorerSuite, rng: random.Random
) -> Node:
    current = tree.root
    for layer in EXPANSION_LAYERS:
        children = _generate(tree, suite, current, layer, config.branching)
        scores = [child.prm_score or 0.0 for child in children]
        if config.algorithm is Algorithm.GREEDY:
            pick = select_greedy(scores)
        elif config.algorithm is Algorithm.EPSILON_GREEDY:
            pick = select_epsilon_greedy(scores, config.epsilon, rng)
        else:
            pick = select_random_greedy(scores, config.threshold, rng)
        current = children[pick]
    return current


def _run_beam(
    tree: SearchTree, config: SearchConfig, suite: ScorerSuite
) -> tuple[list[Node], list[float]]:
    beams: list[Node] = [tree.root]
    for _ in EXPANSION_LAYERS:
        beams = beam_step(
            tree, beams, config.beam_width, suite, tree.question, config.branching
        )
    return beams, [node.prm_score or 0.0 for node in beams]


def _full_traverse(
    tree: SearchTree, config: SearchConfig, suite: ScorerSuite
) -> tuple[list[Node], list[float]]:
    frontier: list[Node] = [tree.root]
    for layer in EXPANSION_LAYERS:
        score = layer is Layer.OC  # only leaves need evaluation
        next_frontier: list[Node] = []
        for node in frontier:
            next_frontier.extend(
                _generate(tree, suite, node, layer, config.branching, score=score)
            )
        frontier = next_frontier
    return frontier, [node.prm_score or 0.0 for node in frontier]


def run_search(question: str, config: SearchConfig, suite: ScorerSuite) -> SearchOutcome:
    """Run the configured search over the SP, V, and OC layers."""
    config.check()
    rng = random.Random(config.rng_seed)
    tree = SearchTree(question)

    if config.algorithm is Algorithm.DIRECT:
        try:
            fragments = suite.generator.expand(question, (), None, 1)
        except Exception as exc:
            raise SearchError(f"generator failed in direct mode: {exc}") from exc
        if len(fragments) != 1:
            raise SearchError("direct mode expects exactly one fragment")
        leaf = tree.add(Layer.OC, fragments[0], tree.root)
        return SearchOutcome(leaf, tree.steps, tree.visited)

    if config.algorithm in (
        Algorithm.GREEDY,
        Algorithm.EPSILON_GREEDY,
        Algorithm.RANDOM_GREEDY,
    ):
        leaf = _greedy_family(tree, config, suite, rng)
        return SearchOutcome(leaf, tree.steps, tree.visited)

    if config.algorithm is Algorithm.BEAM:
        queue, scores = _run_beam(tree, config, suite)
        pick = select_greedy(scores)
        return SearchOutcome(
            queue[pick], tree.steps, tree.visited, tuple(queue), tuple(scores)
        )

    if config.algorithm is Algorithm.BPP:
        queue, _ = _run_beam(tree, config, suite)
        if len(queue) == 1:
            return SearchOutcome(
                queue[0], tree.steps, tree.visited, tuple(queue), (1.0,)
            )
        candidates = ["\n".join(tree.path_fragments(node)) for node in queue]
        prefs = _preference_matrix(suite, question, candidates)
        scores = aggregate_preference(prefs)
        # ties break by higher process score, then by lower queue index
        pick = max(
            range(len(queue)),
            key=lambda i: (scores[i], queue[i].prm_score or 0.0, -i),
        )
        return SearchOutcome(
            queue[pick], tree.steps, tree.visited, tuple(queue), tuple(scores)
        )

    if config.algorithm is Algorithm.FULL_TRAVERSE:
        leaves, scores = _full_traverse(tree, config, suite)
        pick = select_greedy(scores)
        return SearchOutcome(
            leaves[pick], tree.steps, tree.visited, tuple(leaves), tuple(scores)
        )

    raise ValueError(f"unknown algorithm {config.algorithm}")
