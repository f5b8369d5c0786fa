"""Trace-driven experiment loop: one routing agent per routed pair."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

import numpy as np

from .agent import AgentConfig, RoundOutcome, RoutingAgent
from .errors import BudgetViolationError, InvalidInputError, MalformedSpecError
from .overlay import OverlayTopology, enumerate_paths
from .oracle import RoundReport, oracle_series
from .probing import probe_path
from .trace import GeneratorSpec, LinkTrace, generate_trace

DEFAULT_BUDGET = 4


@dataclass
class ExperimentConfig:
    """Everything needed to replay a run.

    ``probing_budget`` caps the links one source may measure per round,
    summed over every flow it routes. It is checked when the config is
    built: K paths of up to ``max_hops`` hops for each of its flows must fit.
    """

    trace: LinkTrace
    pairs: list[tuple[int, int]]
    rounds: int | None = None
    max_hops: int = 2
    oracle_max_hops: int = 4
    probing_budget: int = DEFAULT_BUDGET
    agent: AgentConfig = field(default_factory=AgentConfig)
    topology: OverlayTopology | None = None

    def __post_init__(self) -> None:
        self.pairs = [(int(a), int(b)) for a, b in self.pairs]
        if self.rounds is None:
            self.rounds = self.trace.rounds
        if not 0 <= self.rounds <= self.trace.rounds:
            raise InvalidInputError(f"rounds={self.rounds} but the trace has {self.trace.rounds}")
        n = self.trace.n_nodes
        if self.topology is None:
            self.topology = OverlayTopology.anonymous(n)
        elif len(self.topology) != n:
            raise InvalidInputError("topology and trace disagree on the node count")
        if not self.pairs:
            raise InvalidInputError("no pairs to route")
        for a, b in self.pairs:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise InvalidInputError(f"bad pair ({a}, {b})")
        if len(set(self.pairs)) != len(self.pairs):
            raise InvalidInputError("duplicate routed pair")
        if self.max_hops < 1 or self.oracle_max_hops < self.max_hops:
            raise InvalidInputError("need 1 <= max_hops <= oracle_max_hops")
        flows_per_src: dict[int, int] = {}
        for a, _ in self.pairs:
            flows_per_src[a] = flows_per_src.get(a, 0) + 1
        for src, count in sorted(flows_per_src.items()):
            worst = count * self.agent.k_select * self.max_hops
            if worst > self.probing_budget:
                raise BudgetViolationError(
                    f"source {src}: {count} flow(s) of K={self.agent.k_select} paths of up to "
                    f"{self.max_hops} hops may charge {worst} links, above the budget of "
                    f"{self.probing_budget}"
                )

    def agent_seed(self, pair_index: int) -> int:
        ss = np.random.SeedSequence([self.agent.seed, pair_index])
        return int(ss.generate_state(1)[0])


def run_experiment(
    config: ExperimentConfig,
    on_outcome: Callable[[tuple[int, int], RoundOutcome], None] | None = None,
) -> Iterator[RoundReport]:
    """Yield one report per (round, pair), rounds outermost."""
    trace, rounds = config.trace, config.rounds
    assert rounds is not None
    if rounds == 0:
        return
    window = LinkTrace(trace.rtt_us[:rounds], trace.lost[:rounds])
    flows = []
    for idx, (src, dst) in enumerate(config.pairs):
        cfg = AgentConfig(**{**config.agent.to_dict(), "seed": config.agent_seed(idx)})
        agent = RoutingAgent(enumerate_paths(config.topology, src, dst, config.max_hops), cfg)
        oracle = oracle_series(window, src, dst, config.oracle_max_hops)
        flows.append(((src, dst), agent, oracle, window.disconnected(src, dst)))

    for t in range(rounds):
        spent: dict[int, int] = {}
        for pair, agent, oracle, disconnected in flows:
            selected = agent.select_paths()
            charged = sum(agent.paths[j].hop_count for j in selected)
            spent[pair[0]] = spent.get(pair[0], 0) + charged
            if spent[pair[0]] > config.probing_budget:
                raise BudgetViolationError(
                    f"round {t}, source {pair[0]}: {spent[pair[0]]} links > budget "
                    f"{config.probing_budget}"
                )
            probes = [probe_path(window, t, agent.paths[j]) for j in selected]
            outcome = agent.learning_round(probes, t)
            if on_outcome is not None:
                on_outcome(pair, outcome)
            src, dst = pair
            direct = None if window.lost[t, src, dst] else int(window.rtt_us[t, src, dst])
            if outcome.all_lost:
                chosen_rtt = direct
            else:
                chosen_rtt = next(p.total_rtt for j, p in outcome.probed if j == outcome.winner)
            best = int(oracle.best_rtt[t])
            yield RoundReport(
                round=t,
                pair=pair,
                chosen_path=outcome.chosen_path,
                chosen_rtt=chosen_rtt,
                direct_rtt=direct,
                oracle_path=oracle.path(t),
                oracle_rtt=None if best < 0 else best,
                hop_class_min={
                    h: (None if v < 0 else int(v)) for h, v in enumerate(oracle.class_min[t], start=1)
                },
                links_charged=charged,
                probed=sorted(selected),
                all_lost=outcome.all_lost,
                direct_disconnected=bool(disconnected[t]),
            )


def _resolve(base_dir: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base_dir / p


def config_from_dict(d: dict[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    """Build a config from its JSON form, loading referenced topology/trace files.

    The trace comes either from ``"trace"`` (a canonical trace CSV) or from
    ``"generator"`` (an inline spec or a path to one) plus ``"trace_seed"``.
    """
    from .ingest import load_trace

    base_dir = Path(base_dir)
    known = {"topology", "trace", "generator", "trace_seed", "pairs", "rounds", "max_hops",
             "oracle_max_hops", "probing_budget", "agent"}
    unknown = set(d) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    if ("trace" in d) == ("generator" in d):
        raise InvalidInputError("config needs exactly one of 'trace' or 'generator'")
    if "trace" in d:
        trace = load_trace(_resolve(base_dir, d["trace"]))
    else:
        gen = d["generator"]
        spec = (GeneratorSpec.load(_resolve(base_dir, gen)) if isinstance(gen, str)
                else GeneratorSpec.from_dict(gen))
        trace = generate_trace(spec, int(d.get("trace_seed", 0)))
    topology = None
    if "topology" in d:
        topo = d["topology"]
        topology = (OverlayTopology.load(_resolve(base_dir, topo)) if isinstance(topo, str)
                    else OverlayTopology.from_records(topo))
    if "pairs" not in d:
        raise InvalidInputError("config lists no 'pairs'")
    return ExperimentConfig(
        trace=trace,
        pairs=[tuple(p) for p in d["pairs"]],
        rounds=d.get("rounds"),
        max_hops=int(d.get("max_hops", 2)),
        oracle_max_hops=int(d.get("oracle_max_hops", 4)),
        probing_budget=int(d.get("probing_budget", DEFAULT_BUDGET)),
        agent=AgentConfig.from_dict(d.get("agent", {})),
        topology=topology,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedSpecError(f"{path}: {exc}") from exc
    return config_from_dict(d, path.parent)
