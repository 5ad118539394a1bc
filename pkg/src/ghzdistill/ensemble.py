"""Seeded Monte Carlo over input ensembles.

Sample ``i`` draws its state from its own generator,
``SeedSequence(seed, spawn_key=(i,))``, and samples are processed in chunks
of fixed size.  Worker processes only decide who computes a chunk, so the
report does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .assistance import EPR_MODES
from .protocols import _TERMINALS, DistillConfig, Protocol, Terminal, _combine, _drive, baseline_batch
from .state import haar_amplitudes, load_states

CHUNK = 1000
ALL = "all"
HAAR = "haar"
PROTOCOL_NAMES = tuple(p.value for p in Protocol)


@dataclass(frozen=True)
class EnsembleConfig:
    samples: int = 1000
    seed: int = 0
    protocol: str = ALL
    epsilon: float = 1e-3
    d_tol: float = 1e-3
    max_iters: int = 50
    max_steps: int = 10**6
    epr_mode: str = "asymptotic"
    distribution: str = HAAR
    allocation: str = "per-state"
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.protocol not in PROTOCOL_NAMES + (ALL,):
            raise ValueError(f"protocol must be one of {PROTOCOL_NAMES + (ALL,)}")
        if self.epr_mode not in EPR_MODES:
            raise ValueError(f"epr_mode must be one of {EPR_MODES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.distribution:
            raise ValueError("distribution must be 'haar' or a state file path")
        self.distill_config()

    def protocols(self) -> list[Protocol]:
        if self.protocol == ALL:
            return list(Protocol)
        return [Protocol(self.protocol)]

    def distill_config(self) -> DistillConfig:
        return DistillConfig(
            d_tol=self.d_tol,
            max_iters=self.max_iters,
            epsilon=self.epsilon,
            max_steps=self.max_steps,
            epr_mode=self.epr_mode,
            allocation=self.allocation,
        )

    @classmethod
    def from_mapping(cls, data: dict) -> "EnsembleConfig":
        """Build from string or typed values; unknown keys are an error."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config field {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    kwargs[key] = int(float(value)) if isinstance(value, str) and "e" in value.lower() else int(value)
                elif kind == "float":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = str(value)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"bad value for {key}: {value!r}") from exc
        return cls(**kwargs)


def parse_config_text(text: str) -> dict:
    """JSON object, or ``key = value`` lines with ``#`` comments."""
    stripped = text.strip()
    if stripped.startswith("{"):
        data = json.loads(stripped)
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
        return data
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def sample_states(cfg: EnsembleConfig, start: int, stop: int) -> np.ndarray:
    """Input states for sample indices ``start..stop-1``, shape (n, 8)."""
    if cfg.distribution == HAAR:
        rows = [
            haar_amplitudes(np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,))))
            for i in range(start, stop)
        ]
        return np.array(rows, dtype=complex).reshape(-1, 8)
    states = load_states(cfg.distribution)
    # a file ensemble is cycled through in order
    return np.array([states[i % len(states)].amps for i in range(start, stop)])


@dataclass
class ChunkResult:
    start: int
    primary: dict
    epr: dict
    terminal: dict
    cycles: dict


def _run_chunk(cfg: EnsembleConfig, start: int, stop: int) -> ChunkResult:
    amps = sample_states(cfg, start, stop)
    dcfg = cfg.distill_config()
    out = ChunkResult(start, {}, {}, {}, {})
    for proto in cfg.protocols():
        name = proto.value
        if proto is Protocol.BASELINE:
            out.primary[name] = np.zeros(len(amps))
            out.epr[name] = baseline_batch(amps, dcfg)
            out.terminal[name] = np.full(len(amps), -1)
            out.cycles[name] = np.zeros(len(amps), dtype=int)
        else:
            res = _drive(amps, proto, dcfg)
            out.primary[name] = res.primary
            out.epr[name] = res.epr
            out.terminal[name] = res.terminal
            out.cycles[name] = res.cycles
    return out


@dataclass
class ProtocolSummary:
    protocol: str
    samples: int
    seed: int
    primary_yield: float
    epr_counts: list[float]
    secondary_ghz: float
    total_yield: float
    # GHZ count when EPR pairs are pooled over the whole ensemble before combining
    pooled_secondary_ghz: float
    se: dict
    histogram: list[dict]
    terminals: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnsembleReport:
    config: EnsembleConfig
    results: list[ProtocolSummary] = field(default_factory=list)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("workers")
        return {"config": cfg, "results": [r.to_dict() for r in self.results]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["protocol", "samples", "seed", "primary_yield", "secondary_ghz", "total_yield"]
        head += ["se_primary", "se_secondary", "se_total", "n12", "n23", "n31"]
        head += [t.value for t in Terminal]
        w.writerow(head)
        for r in self.results:
            row = [r.protocol, r.samples, r.seed, repr(r.primary_yield), repr(r.secondary_ghz), repr(r.total_yield)]
            row += [repr(r.se[k]) for k in ("primary", "secondary", "total")]
            row += [repr(x) for x in r.epr_counts]
            row += [r.terminals[t.value] for t in Terminal]
            w.writerow(row)
        return buf.getvalue()

    def result(self, protocol: str | Protocol) -> ProtocolSummary:
        name = protocol.value if isinstance(protocol, Protocol) else protocol
        for r in self.results:
            if r.protocol == name:
                return r
        raise KeyError(name)


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / len(x)


def standard_error(x: np.ndarray) -> float:
    """Standard error of the mean (sample standard deviation / sqrt n)."""
    n = len(x)
    if n < 2:
        return 0.0
    m = _mean(x)
    return math.sqrt(math.fsum(((x - m) ** 2).tolist()) / (n - 1) / n)


def _histogram(terminal: np.ndarray, cycles: np.ndarray) -> list[dict]:
    conv = terminal == _TERMINALS.index(Terminal.CONVERGED)
    counts = np.bincount(cycles[conv]) if conv.any() else np.zeros(0, dtype=int)
    hist = [{"cycles": int(c), "count": int(n)} for c, n in enumerate(counts) if n]
    hist.append({"cycles": None, "count": int((~conv).sum())})
    return hist


def summarize(cfg: EnsembleConfig, name: str, primary, epr, terminal, cycles) -> ProtocolSummary:
    secondary = _combine(epr)
    total = primary + secondary
    terms = {t.value: int((terminal == j).sum()) for j, t in enumerate(_TERMINALS)}
    return ProtocolSummary(
        protocol=name,
        samples=cfg.samples,
        seed=cfg.seed,
        primary_yield=_mean(primary),
        epr_counts=[_mean(epr[:, j]) for j in range(3)],
        secondary_ghz=_mean(secondary),
        total_yield=_mean(total),
        pooled_secondary_ghz=float(_combine(np.array([_mean(epr[:, j]) for j in range(3)]))),
        se={"primary": standard_error(primary), "secondary": standard_error(secondary), "total": standard_error(total)},
        histogram=_histogram(terminal, cycles),
        terminals=terms,
    )


def run_ensemble(cfg: EnsembleConfig) -> EnsembleReport:
    bounds = [(lo, min(lo + CHUNK, cfg.samples)) for lo in range(0, cfg.samples, CHUNK)]
    if cfg.workers == 1 or len(bounds) == 1:
        chunks = [_run_chunk(cfg, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_chunk, cfg, lo, hi) for lo, hi in bounds]
            chunks = [f.result() for f in futures]
    chunks.sort(key=lambda c: c.start)
    report = EnsembleReport(cfg)
    for proto in cfg.protocols():
        name = proto.value
        cat = lambda attr: np.concatenate([getattr(c, attr)[name] for c in chunks])  # noqa: E731
        report.results.append(summarize(cfg, name, cat("primary"), cat("epr"), cat("terminal"), cat("cycles")))
    return report
