"""Random machine generation and the timing harness."""

from __future__ import annotations

import csv
import json
import logging
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import paths, smtgen
from .core import (
    CTOR,
    INT,
    Assignment,
    Binary,
    BoolLit,
    ConstructorLabel,
    Dafsm,
    DafsmError,
    Declaration,
    IntLit,
    QualifiedParticipant,
    Transition,
    TransitionLabel,
    Var,
)
from .solver import NON_STOP, SolverConfig, check_machine

log = logging.getLogger(__name__)

GRID_STATES = (10, 20, 30)
REPLICAS = 5
RUNS = 10
CSV_COLUMNS = ["id", "states", "transitions", "paths", "callercheck_ms", "detcheck_ms", "aconsistency_ms", "verdict"]


class InfeasibleParams(ValueError):
    pass


@dataclass(frozen=True)
class GenParams:
    seed: int
    p: int  # max participants
    f: int  # max function index
    v: int  # max data variables / parameters
    s: int  # states
    t: int  # transitions

    def __post_init__(self):
        if not 2 <= self.p <= 10:
            raise ValueError(f"p={self.p} outside [2, 10]")
        if not 10 <= self.f <= 20:
            raise ValueError(f"f={self.f} outside [10, 20]")
        if not 1 <= self.v <= 50:
            raise ValueError(f"v={self.v} outside [1, 50]")
        if self.s < 1:
            raise ValueError("need at least one state")


def _role(i: int, p: int) -> str:
    nroles = max(1, (p + 1) // 2)
    return f"R{(i - 1) % nroles + 1}"


def _guard(rng: random.Random, nvars: int, params: list[str]):
    x = Var(f"x{rng.randint(1, nvars)}")
    k = IntLit(rng.randint(-3, 3))
    choices = ["true", "gt", "le"] + (["param", "mixed"] if params else [])
    c = rng.choice(choices)
    if c == "true":
        return BoolLit(True)
    if c == "gt":
        return Binary(">", x, k)
    if c == "le":
        return Binary("<=", x, k)
    a = Var(rng.choice(params))
    if c == "param":
        return Binary(">=", a, k)
    return Binary(">", Binary("+", x, a), k)


def _assignments(rng: random.Random, nvars: int, params: list[str]):
    targets = rng.sample(range(1, nvars + 1), min(nvars, rng.randint(0, 2)))
    out = []
    for i in targets:
        x = f"x{i}"
        c = rng.choice(["inc", "dec"] + (["param"] if params else []))
        if c == "param":
            out.append(Assignment(x, Var(rng.choice(params))))
        else:
            out.append(Assignment(x, Binary("+" if c == "inc" else "-", Var(x), IntLit(rng.randint(1, 3)))))
    return tuple(out)


def generate(params: GenParams) -> Dafsm:
    """Deterministic random machine with ``s`` states, all reachable, and ``t`` transitions.

    States are named in the order they get connected; the current source
    advances round-robin over that order.
    """
    s, t = params.s, params.t
    if t < s - 1:
        raise InfeasibleParams(f"{t} transitions cannot connect {s} states")
    rng = random.Random(params.seed)
    nvars = params.v
    ctor = ConstructorLabel(
        "p1",
        _role(1, params.p),
        (),
        tuple(Assignment(f"x{i}", IntLit(0)) for i in range(1, nvars + 1)),
    )
    connected = ["S0"]
    transitions = []
    current = 0
    while len(transitions) < t:
        src = connected[current]
        for _ in range(min(rng.randint(2, 5), t - len(transitions))):
            if len(connected) < s:
                tgt = f"S{len(connected)}"
                connected.append(tgt)
            else:
                tgt = rng.choice(connected)
            who = rng.randint(1, params.p)
            kind = rng.choice(["fresh", "existing", "bound"])
            var, role = f"p{who}", _role(who, params.p)
            qp = {
                "fresh": QualifiedParticipant.fresh(var, role),
                "existing": QualifiedParticipant.existing(var, role),
                "bound": QualifiedParticipant.bound(var),
            }[kind]
            fn = f"f{rng.randint(0, params.f)}"
            names = [f"_a{j}" for j in range(1, rng.randint(0, params.v) + 1)]
            decls = tuple(Declaration(n, INT) for n in names)
            label = TransitionLabel(_guard(rng, nvars, names), qp, fn, decls, _assignments(rng, nvars, names))
            transitions.append(Transition(src, label, tgt))
        current = (current + 1) % len(connected)
    sources = {tr.source for tr in transitions}
    accepting = {st for st in connected if st not in sources} | {connected[-1]}
    return Dafsm.build("S0", accepting, "c", ctor, transitions, states=connected)


def grid():
    """(s, t) pairs of the evaluation grid: t a multiple of 5 in [s, 3s]."""
    return [(s, t) for s in GRID_STATES for t in range(s, 3 * s + 1) if t % 5 == 0]


@dataclass
class BenchRow:
    id: str
    states: int
    transitions: int
    paths: int
    callercheck_ms: float
    detcheck_ms: float
    aconsistency_ms: float
    verdict: str
    samples: dict = field(default_factory=dict, repr=False)

    def csv_row(self):
        times = [f"{ms:.6f}" for ms in (self.callercheck_ms, self.detcheck_ms, self.aconsistency_ms)]
        return [self.id, self.states, self.transitions, self.paths, *times, self.verdict]


def _time(fn, runs):
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1000)
    return samples


def measure(machine: Dafsm, runs: int = RUNS):
    """Per-check timing samples (milliseconds) for one machine."""
    return {
        "callercheck": _time(lambda: paths.caller_check(machine), runs),
        "detcheck": _time(lambda: [smtgen.build_determinism(machine, st) for st in machine.states], runs),
        "aconsistency": _time(
            lambda: [smtgen.build_consistency(machine, i) for i in range(CTOR, len(machine.transitions))], runs
        ),
    }


def run_suite(out, seed: int, *, runs: int = RUNS, config: SolverConfig | None = None, verdicts: bool = True):
    """Generate the evaluation grid, time each check and write one CSV row per machine."""
    config = config or SolverConfig(mode=NON_STOP)
    master = random.Random(seed)
    rows, manifest = [], []
    for s, t in grid():
        for r in range(REPLICAS):
            gp = GenParams(
                seed=master.getrandbits(64),
                p=master.randint(2, 10),
                f=master.randint(10, 20),
                v=master.randint(1, 50),
                s=s,
                t=t,
            )
            machine = generate(gp)
            samples = measure(machine, runs)
            verdict = "skipped"
            if verdicts:
                try:
                    verdict = check_machine(machine, config).overall
                except DafsmError as exc:
                    verdict = f"Error: {type(exc).__name__}"
            row = BenchRow(
                id=f"s{s}_t{t}_r{r}",
                states=len(machine.states),
                transitions=len(machine.transitions),
                paths=paths.count_acyclic_paths(machine),
                callercheck_ms=statistics.fmean(samples["callercheck"]),
                detcheck_ms=statistics.fmean(samples["detcheck"]),
                aconsistency_ms=statistics.fmean(samples["aconsistency"]),
                verdict=verdict,
                samples=samples,
            )
            log.info("%s paths=%d caller=%.2fms %s", row.id, row.paths, row.callercheck_ms, verdict)
            rows.append(row)
            manifest.append({"id": row.id, **asdict(gp)})
    rows.sort(key=lambda row: (row.states, row.transitions, int(row.id.rsplit("_r", 1)[1])))
    if out is not None:
        out = Path(out)
        with out.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            w.writerows(row.csv_row() for row in rows)
        out.with_suffix(".manifest.json").write_text(json.dumps({"seed": seed, "machines": manifest}, indent=1))
    return rows
