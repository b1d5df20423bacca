"""Synthetic campaigns: ground truth without a fuzzer.

Small control-flow-graph models generate program behaviors by seeded
random walks. Each walk yields an ordered edge sequence, per-branch hit
counts, an outcome (normal exit or triggered exception), and the logic
state the execution collapses to. Because the generator also keeps an
exact distinct count, it doubles as the oracle for validating the
filter's estimates end to end.

Two fixed models reproduce the worked behaviors the metric is built
around: a three-independent-loops graph whose behaviors collapse to
exactly eight logic states no matter how high the hit counts climb, and
a straight-line graph with one mid-path exception point whose crashing
and completing behaviors always land in different states, separable by
the presence of an exit edge.
"""

import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from .bloom import OracleSet
from .collector import FrameSender
from .frames import FLAG_ABNORMAL, TraceWriter, encode_frame
from .logic_state import LogicState, combine_edge

log = logging.getLogger("lscov.synth")

DEFAULT_WALK_CAP = 10_000

NORMAL = "normal"
ABNORMAL = "abnormal"


class WalkCapExceeded(RuntimeError):
    """The walk ran past the step cap; models nontermination."""


@dataclass(frozen=True)
class Branch:
    """One two-way branch: taken target and fallthrough target.

    taken == fallthrough models an unconditional jump.
    """

    source: int
    taken: int
    fallthrough: int

    @property
    def is_conditional(self) -> bool:
        return self.taken != self.fallthrough


@dataclass(frozen=True)
class ExceptionPoint:
    """A block that may abort the execution on entry.

    Armed or not is decided once per behavior with the given
    probability; an armed point fires the first time the walk enters
    its block.
    """

    block: int
    probability: float


@dataclass(frozen=True)
class SynthCfg:
    """A small program model: blocks, branches, exits, exception points.

    Every non-exit block carries exactly one branch so walks are total;
    exit blocks carry none and end the walk. Exception points never sit
    on exit blocks, so an aborted walk can never contain an exit edge.
    """

    blocks: "tuple[int, ...]"
    entry: int
    branches: "tuple[Branch, ...]"
    exit_blocks: frozenset
    exceptions: "tuple[ExceptionPoint, ...]" = ()
    _by_source: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        known = set(self.blocks)
        if len(known) != len(self.blocks):
            raise ValueError("duplicate block ids")
        if not self.exit_blocks:
            raise ValueError("need at least one exit block")
        if not self.exit_blocks <= known:
            raise ValueError("exit blocks must be blocks")
        if self.entry not in known:
            raise ValueError("entry must be a block")
        by_source = {}
        for br in self.branches:
            for ref in (br.source, br.taken, br.fallthrough):
                if ref not in known:
                    raise ValueError(f"branch references unknown block {ref}")
            if br.source in self.exit_blocks:
                raise ValueError(f"exit block {br.source} cannot branch")
            if br.source in by_source:
                raise ValueError(f"block {br.source} has two branches")
            by_source[br.source] = br
        for b in known - self.exit_blocks:
            if b not in by_source:
                raise ValueError(f"non-exit block {b} has no branch")
        for ep in self.exceptions:
            if ep.block not in known:
                raise ValueError(f"exception on unknown block {ep.block}")
            if ep.block in self.exit_blocks:
                raise ValueError("exception points cannot sit on exit blocks")
            if not 0.0 <= ep.probability <= 1.0:
                raise ValueError(f"bad trigger probability {ep.probability}")
        object.__setattr__(self, "_by_source", by_source)

    def branch_for(self, block: int) -> Optional[Branch]:
        return self._by_source.get(block)

    def exit_edges(self) -> frozenset:
        """Every edge id that enters an exit block."""
        edges = set()
        for br in self.branches:
            for target in (br.taken, br.fallthrough):
                if target in self.exit_blocks:
                    edges.add(combine_edge(br.source, target))
        return frozenset(edges)


@dataclass
class SynthBehavior:
    """One generated execution: ordered edges, hit counts, outcome."""

    edge_sequence: "tuple[int, ...]"
    block_path: "tuple[int, ...]"
    hit_counts: "dict[int, int]"     # branch source block -> times taken
    outcome: str                     # NORMAL or ABNORMAL
    state: LogicState

    @property
    def digest(self) -> int:
        return self.state.digest()


def _walk(cfg: SynthCfg, choose, armed, max_steps: int) -> SynthBehavior:
    """Shared walk driver. `choose(branch) -> bool` picks taken or not."""
    edges = []
    path = [cfg.entry]
    hits = Counter()
    state = LogicState()
    cur = cfg.entry
    outcome = NORMAL
    if cur in armed:
        outcome = ABNORMAL
    else:
        for _ in range(max_steps):
            if cur in cfg.exit_blocks:
                break
            br = cfg.branch_for(cur)
            take = br.is_conditional and choose(br)
            nxt = br.taken if take else br.fallthrough
            if take:
                hits[br.source] += 1
            edges.append(state.record_block(cur, nxt))
            path.append(nxt)
            cur = nxt
            if cur in armed:
                outcome = ABNORMAL
                break
        else:
            raise WalkCapExceeded(
                f"walk exceeded {max_steps} steps from entry {cfg.entry}")
    return SynthBehavior(
        edge_sequence=tuple(edges), block_path=tuple(path),
        hit_counts=dict(hits), outcome=outcome, state=state)


def run_behavior(cfg: SynthCfg, input_seed: int,
                 max_steps: int = DEFAULT_WALK_CAP) -> SynthBehavior:
    """One pseudo-random execution of the model, determined by the seed.

    The seed drives both the per-behavior arming of exception points
    and every branch decision, so equal seeds give equal digests.
    """
    rng = random.Random(input_seed)
    armed = {ep.block for ep in cfg.exceptions if rng.random() < ep.probability}
    return _walk(cfg, lambda br: rng.random() < 0.5, armed, max_steps)


def walk_hit_grid(cfg: SynthCfg, taken_budget: "dict[int, int]",
                  max_steps: int = DEFAULT_WALK_CAP) -> SynthBehavior:
    """Deterministic walk taking each listed branch exactly its budgeted
    number of times (then falling through). Gives exact control over
    per-branch hit counts for the collapse property.
    """
    remaining = dict(taken_budget)

    def choose(br: Branch) -> bool:
        left = remaining.get(br.source, 0)
        if left > 0:
            remaining[br.source] = left - 1
            return True
        return False

    return _walk(cfg, choose, frozenset(), max_steps)


# -- fixed models ----------------------------------------------------------

FIG2_LOOP_HEADS = (11, 13, 15)


def build_fig2_cfg() -> SynthCfg:
    """Entry, three independent loops in sequence, exit.

    Block 10 is the entry, blocks 11/13/15 are the loop heads (their
    taken edges enter bodies 12/14/16), block 17 is the exit.
    """
    e, l1, b1, l2, b2, l3, b3, x = range(10, 18)
    return SynthCfg(
        blocks=(e, l1, b1, l2, b2, l3, b3, x),
        entry=e,
        branches=(
            Branch(e, l1, l1),
            Branch(l1, b1, l2), Branch(b1, l1, l1),
            Branch(l2, b2, l3), Branch(b2, l2, l2),
            Branch(l3, b3, x), Branch(b3, l3, l3),
        ),
        exit_blocks=frozenset({x}),
    )


FIG3_EXCEPTION_BLOCK = 34
FIG3_EXIT_BLOCK = 36


def build_fig3_cfg() -> SynthCfg:
    """Straight-line model with one benign branch and one mid-path
    exception point.

    Entry 30 branches to 31 or 32 (both rejoin at 33); block 34 may
    abort the execution; the surviving path runs 34 -> 35 -> exit 36.
    A behavior that aborts at 34 can therefore never contain the exit
    edge 35 -> 36.
    """
    e, a1, a2, f, u, d, x = range(30, 37)
    return SynthCfg(
        blocks=(e, a1, a2, f, u, d, x),
        entry=e,
        branches=(
            Branch(e, a1, a2),
            Branch(a1, f, f), Branch(a2, f, f),
            Branch(f, u, u), Branch(u, d, d), Branch(d, x, x),
        ),
        exit_blocks=frozenset({x}),
        exceptions=(ExceptionPoint(u, 0.5),),
    )


# -- model checks -----------------------------------------------------------

def fig2_distinct_states(grid_max: int) -> "tuple[int, int]":
    """Walk every hit-count combination in {0..grid_max}^3 over the
    three loops; returns (distinct logic states, hit-count vectors).
    """
    if grid_max < 1:
        raise ValueError("grid_max must be >= 1")
    cfg = build_fig2_cfg()
    states = set()
    n_vectors = 0
    for counts in product(range(grid_max + 1), repeat=3):
        budget = dict(zip(FIG2_LOOP_HEADS, counts))
        behavior = walk_hit_grid(cfg, budget)
        states.add(behavior.state.edges)
        n_vectors += 1
    return len(states), n_vectors


def fig3_check(n_behaviors: int = 10_000, seed: int = 0) -> dict:
    """Randomized separation check on the exception model.

    Verifies that every normal behavior's state contains an exit edge,
    every aborted behavior's state contains none, and the two groups
    share no digest.
    """
    cfg = build_fig3_cfg()
    exit_edges = cfg.exit_edges()
    rng = random.Random(seed)
    normal_digests = set()
    abnormal_digests = set()
    normal_with_exit = 0
    abnormal_without_exit = 0
    n_normal = 0
    n_abnormal = 0
    for _ in range(n_behaviors):
        behavior = run_behavior(cfg, rng.getrandbits(64))
        has_exit = bool(behavior.state.edges & exit_edges)
        if behavior.outcome == NORMAL:
            n_normal += 1
            normal_with_exit += has_exit
            normal_digests.add(behavior.digest)
        else:
            n_abnormal += 1
            abnormal_without_exit += not has_exit
            abnormal_digests.add(behavior.digest)
    return {
        "behaviors": n_behaviors,
        "normal": n_normal,
        "abnormal": n_abnormal,
        "normal_with_exit_edge": normal_with_exit,
        "abnormal_without_exit_edge": abnormal_without_exit,
        "shared_digests": len(normal_digests & abnormal_digests),
        "separated": (normal_with_exit == n_normal
                      and abnormal_without_exit == n_abnormal
                      and not normal_digests & abnormal_digests),
    }


# -- random models -----------------------------------------------------------

def random_cfg(seed: int, n_blocks: int, back_edge_prob: float = 0.25,
               n_exceptions: int = 0,
               exception_prob: float = 0.5) -> SynthCfg:
    """Deterministic random model of n_blocks blocks.

    Block i falls through to block i+1 (so every walk can reach the
    final block, the single exit); each taken edge jumps backward with
    back_edge_prob, else forward. Exception points are drawn from the
    interior blocks.
    """
    if n_blocks < 1:
        raise ValueError("need at least one block")
    if n_exceptions > max(0, n_blocks - 1):
        raise ValueError(
            f"cannot place {n_exceptions} exception points in "
            f"{n_blocks} blocks while keeping the exit clean")
    rng = random.Random(seed)
    ids = []
    seen = set()
    while len(ids) < n_blocks:
        bid = rng.getrandbits(32)
        if bid not in seen:
            seen.add(bid)
            ids.append(bid)
    branches = []
    for i in range(n_blocks - 1):
        if rng.random() < back_edge_prob:
            taken = ids[rng.randrange(0, i + 1)]
        else:
            taken = ids[rng.randrange(i + 1, n_blocks)]
        branches.append(Branch(ids[i], taken, ids[i + 1]))
    exceptions = tuple(
        ExceptionPoint(b, exception_prob)
        for b in rng.sample(ids[:-1], n_exceptions))
    return SynthCfg(
        blocks=tuple(ids),
        entry=ids[0],
        branches=tuple(branches),
        exit_blocks=frozenset({ids[-1]}),
        exceptions=exceptions,
    )


def enumerate_states(cfg: SynthCfg, max_steps: int,
                     max_walks: int = 1_000_000) -> "set[frozenset]":
    """Exhaustively enumerate terminal walks up to max_steps edges and
    collect their logic states. Exception-free models only; intended as
    a brute-force oracle at small scale.
    """
    if cfg.exceptions:
        raise ValueError("enumeration oracle only supports exception-free models")
    states = set()
    walks = 0
    # stack holds (current block, edges frozen so far as a sorted tuple)
    stack = [(cfg.entry, frozenset(), 0)]
    while stack:
        cur, edges, depth = stack.pop()
        if cur in cfg.exit_blocks:
            walks += 1
            if walks > max_walks:
                raise RuntimeError(f"more than {max_walks} terminal walks")
            states.add(edges)
            continue
        if depth >= max_steps:
            continue
        br = cfg.branch_for(cur)
        targets = {br.taken, br.fallthrough}
        for nxt in targets:
            stack.append(
                (nxt, edges | {combine_edge(cur, nxt)}, depth + 1))
    return states


# -- campaign generation ------------------------------------------------------

@dataclass
class CampaignResult:
    emitted: int
    distinct_exact: int
    abnormal: int
    discarded: int


def run_campaign(cfg: SynthCfg, n_execs: int, sink: str, seed: int = 0,
                 max_steps: int = DEFAULT_WALK_CAP) -> CampaignResult:
    """Generate n_execs behaviors and emit one frame each to the sink
    (a trace file path, or a unix:/udp: collector endpoint).

    Keeps an exact distinct count on the side; walks that blow the step
    cap are discarded and retried so exactly n_execs frames go out.
    """
    # explicit scheme prefix means live endpoint; anything else is a path
    is_endpoint = sink.startswith(("unix:", "udp:"))
    rng = random.Random(seed)
    oracle = OracleSet()
    emitted = 0
    abnormal = 0
    discarded = 0
    writer = None
    sender = None
    try:
        if is_endpoint:
            sender = FrameSender(sink)
        else:
            writer = TraceWriter(sink)
        while emitted < n_execs:
            try:
                behavior = run_behavior(cfg, rng.getrandbits(64), max_steps)
            except WalkCapExceeded:
                discarded += 1
                if discarded > 10 * n_execs + 100:
                    raise RuntimeError(
                        "walk cap exceeded too often; model likely "
                        "nonterminating") from None
                continue
            digest = behavior.digest
            oracle.add(digest)
            flags = FLAG_ABNORMAL if behavior.outcome == ABNORMAL else 0
            if sender is not None:
                sender.send_frame(encode_frame(digest, flags))
            else:
                writer.write(digest, flags)
            emitted += 1
            if behavior.outcome == ABNORMAL:
                abnormal += 1
    finally:
        if sender is not None:
            sender.close()
        if writer is not None:
            writer.close()
    if discarded:
        log.info("discarded %d capped walks while emitting %d frames",
                 discarded, emitted)
    return CampaignResult(
        emitted=emitted, distinct_exact=oracle.count,
        abnormal=abnormal, discarded=discarded)
