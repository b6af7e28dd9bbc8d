"""External SMT-LIB 2 solver driver and verdict assembly."""

from __future__ import annotations

import json
import os
import re
import selectors
import shutil
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from . import paths, smtgen
from .core import Dafsm, DafsmError, validate_structure

NON_STOP = "non-stop"
STOP = "stop"

WELL_FORMED = "WellFormed"
NOT_WELL_FORMED = "NotWellFormed"
INCONCLUSIVE = "Inconclusive"

PASS, FAIL, UNKNOWN = "Pass", "Fail", "Unknown"
CLOSED, EMPTY_ROLE_FREE = "Closed", "EmptyRoleFree"
CONSISTENT, DETERMINISTIC = smtgen.CONSISTENT, smtgen.DETERMINISTIC


class SolverUnavailable(DafsmError):
    pass


class ProtocolError(DafsmError):
    def __init__(self, message, raw=""):
        super().__init__(f"{message}: {raw!r}")
        self.raw = raw


class StructureInvalid(DafsmError):
    def __init__(self, errors):
        super().__init__("; ".join(map(str, errors)))
        self.errors = errors


def default_solver() -> str:
    return os.environ.get("DAFSM_SOLVER") or "z3"


@dataclass(frozen=True)
class SolverConfig:
    executable: str = field(default_factory=default_solver)
    timeout_ms: int = 10_000
    mode: str = NON_STOP
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.mode not in (NON_STOP, STOP):
            raise ValueError(f"unknown mode {self.mode!r}")

    def argv(self) -> list[str]:
        exe = shutil.which(self.executable) or self.executable
        name = os.path.basename(exe).lower()
        if name.startswith("z3"):
            return [exe, "-in", "-smt2", f"-t:{self.timeout_ms}"]
        if name.startswith("cvc"):
            return [exe, "--lang=smt2", "--incremental", f"--tlimit-per={self.timeout_ms}"]
        return [exe]


@dataclass(frozen=True)
class Sat:
    model: str


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str


def _readline(proc, deadline) -> str | None:
    sel = selectors.DefaultSelector()
    sel.register(proc.stdout, selectors.EVENT_READ)
    buf = b""
    try:
        while not buf.endswith(b"\n"):
            left = deadline - time.monotonic()
            if left <= 0 or not sel.select(left):
                return None
            chunk = os.read(proc.stdout.fileno(), 1)
            if not chunk:
                break
            buf += chunk
    finally:
        sel.close()
    return buf.decode()


def run_script(config: SolverConfig, script: smtgen.SolverScript | str):
    """Run one script; returns Sat(model) / Unsat() / Unknown(reason)."""
    text = script.text if isinstance(script, smtgen.SolverScript) else script
    deadline = time.monotonic() + config.timeout_ms / 1000
    try:
        proc = subprocess.Popen(config.argv(), stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
    except OSError as exc:
        raise SolverUnavailable(f"cannot start solver {config.executable!r}: {exc}") from exc
    try:
        proc.stdin.write(text.encode())
        proc.stdin.flush()
        line = _readline(proc, deadline)
        if line is None:
            return Unknown("timeout")
        answer = line.strip()
        if answer == "sat":
            follow = "(get-model)\n(exit)\n"
        elif answer == "unknown":
            follow = "(get-info :reason-unknown)\n(exit)\n"
        elif answer == "unsat":
            follow = "(exit)\n"
        else:
            rest = _drain(proc, follow="(exit)\n")
            raise ProtocolError("unexpected solver output", line + rest)
        rest = _drain(proc, follow)
        if answer == "sat":
            return Sat(rest.strip())
        if answer == "unsat":
            return Unsat()
        m = re.search(r':reason-unknown\s+"?([^")]*)', rest)
        reason = m.group(1).strip() if m else "unknown"
        return Unknown("timeout" if "timeout" in reason or "canceled" in reason else reason)
    finally:
        if proc.poll() is None:
            proc.kill()
        proc.wait()
        for f in (proc.stdin, proc.stdout):
            try:
                f.close()
            except OSError:
                pass


def _drain(proc, follow) -> str:
    try:
        out, _ = proc.communicate(follow.encode(), timeout=5)
    except (subprocess.TimeoutExpired, BrokenPipeError):
        return ""
    return out.decode()


_DEFINE = re.compile(r"\(define-fun\s+(\|[^|]*\||\S+)\s+\(\)\s+(Int|Bool)\s+(\(-\s*\d+\)|-?\d+|true|false)\s*\)")


def parse_model(text: str) -> dict:
    """Values of the constants in a ``(get-model)`` answer."""
    out = {}
    for name, sort, value in _DEFINE.findall(text):
        name = name.strip("|")
        if sort == "Bool":
            out[name] = value == "true"
        else:
            out[name] = -int(value[1:-1].replace("-", "").strip()) if value.startswith("(") else int(value)
    return out


# --------------------------------------------------------------------------
# Verdict
# --------------------------------------------------------------------------


@dataclass
class CheckRecord:
    site: str
    kind: str
    outcome: str
    witness: str = ""
    ms: float = 0.0


@dataclass
class Verdict:
    overall: str
    checks: list[CheckRecord]
    warnings: list[str] = field(default_factory=list)

    @staticmethod
    def summarize(records) -> str:
        outcomes = {r.outcome for r in records}
        if FAIL in outcomes:
            return NOT_WELL_FORMED
        if UNKNOWN in outcomes:
            return INCONCLUSIVE
        return WELL_FORMED

    def failures(self, kind=None):
        return [r for r in self.checks if r.outcome == FAIL and (kind is None or r.kind == kind)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "overall": self.overall,
                "checks": [{**asdict(r), "ms": round(r.ms, 3)} for r in self.checks],
                "warnings": self.warnings,
            },
            indent=2,
        )

    def render(self) -> str:
        lines = [self.overall]
        for r in self.checks:
            if r.outcome != PASS:
                lines.append(f"  {r.outcome:7} {r.kind:14} {r.site}")
                for w in r.witness.splitlines():
                    lines.append(f"          {w}")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def _caller_records(machine, report: paths.CallerReport, ms: float):
    failed = {}
    for v in report.closed:
        failed[(v.transition, CLOSED)] = f"{v.var} unbound on: {paths.format_path(machine, v.witness)}"
    for v in report.empty_role:
        failed[(v.transition, EMPTY_ROLE_FREE)] = (
            f"role {v.role} never expanded on: {paths.format_path(machine, v.witness)}"
        )
    records = []
    for i in report.checked:
        kind = CLOSED if machine.transitions[i].label.participant.kind.value == "bound" else EMPTY_ROLE_FREE
        w = failed.get((i, kind))
        records.append(CheckRecord(smtgen.site_name(i), kind, FAIL if w else PASS, w or "", ms))
    return records


def _smt_record(script: smtgen.SolverScript, config: SolverConfig) -> CheckRecord:
    f = script.formula
    t0 = time.perf_counter()
    res = run_script(config, script)
    ms = (time.perf_counter() - t0) * 1000
    if isinstance(res, Unsat):
        return CheckRecord(f.site, f.kind, PASS, "", ms)
    if isinstance(res, Sat):
        witness = res.model if not f.note else f"{f.note}\n{res.model}"
        return CheckRecord(f.site, f.kind, FAIL, witness, ms)
    return CheckRecord(f.site, f.kind, UNKNOWN, res.reason, ms)


def check_machine(machine: Dafsm, config: SolverConfig | None = None, *, quantify_targets: bool = True) -> Verdict:
    """Closedness, empty-role freedom, consistency and determinism of ``machine``."""
    config = config or SolverConfig()
    errors = validate_structure(machine)
    if errors:
        raise StructureInvalid(errors)
    stop = config.mode == STOP
    warnings = [
        f"transition t{i} is unreachable ({machine.transitions[i].source} cannot be reached)"
        for i in paths.unreachable_transitions(machine)
    ]

    t0 = time.perf_counter()
    report = paths.caller_check(machine, stop=stop)
    ms = (time.perf_counter() - t0) * 1000
    records = _caller_records(machine, report, ms)
    if stop and any(r.outcome == FAIL for r in records):
        return Verdict(NOT_WELL_FORMED, [r for r in records if r.outcome == FAIL][:1], warnings)

    manifest = smtgen.assemble_model(smtgen.build_all(machine, quantify_targets=quantify_targets))
    if stop:
        for script in manifest:
            rec = _smt_record(script, config)
            records.append(rec)
            if rec.outcome == FAIL:
                break
    else:
        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            records += list(pool.map(lambda s: _smt_record(s, config), manifest))
    return Verdict(Verdict.summarize(records), records, warnings)
