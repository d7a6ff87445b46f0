"""Spec parsing, network serialization and result emission."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .clique import CliqueNetwork
from .dynamics import ERASED, NetworkConfig, WeightMatrix
from .experiments import CurveSpec, ExperimentSpec
from .noise import FiringContext, InterferenceModel, NoiseChannel, SynapticModel

ERASED_TOKEN = "ERASED"
WEIGHTS_FORMAT = "hebbclique.weights"
CLIQUE_FORMAT = "hebbclique.clique"
FORMAT_VERSION = 1


class SpecError(ValueError):
    """Invalid parameter file; ``str()`` carries ``path:line: message``."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path, self.line, self.detail = path, line, message
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingFieldError(SpecError):
    pass


class RangeError(SpecError):
    pass


class DimensionError(SpecError):
    pass


class _Doc:
    """Parsed JSON plus enough of the source text to point at offending lines."""

    def __init__(self, text: str, path: str | None):
        self.text, self.path = text, path
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None

    def line_of(self, key: str) -> int | None:
        needle = f'"{key}"'
        for lineno, line in enumerate(self.text.splitlines(), start=1):
            if needle in line:
                return lineno
        return None

    def error(self, cls, key: str, message: str):
        return cls(message, self.path, self.line_of(key))


def _get(doc: _Doc, obj: dict, key: str, kind, default=Any, where: str = ""):
    if not isinstance(obj, dict):
        raise SpecError(f"expected an object{where}", doc.path)
    if key not in obj:
        if default is Any:
            raise MissingFieldError(f"missing required field '{key}'{where}", doc.path)
        return default
    value = obj[key]
    ok = (isinstance(value, bool) if kind is bool
          else isinstance(value, int) and not isinstance(value, bool) if kind is int
          else isinstance(value, (int, float)) and not isinstance(value, bool) if kind is float
          else isinstance(value, kind))
    if not ok:
        raise doc.error(SpecError, key, f"field '{key}' must be of type {kind.__name__}, "
                                        f"got {value!r}")
    return float(value) if kind is float else value


def _check(doc: _Doc, key: str, cond: bool, message: str):
    if not cond:
        raise doc.error(RangeError, key, message)


def _network(doc: _Doc, obj: dict) -> NetworkConfig:
    g = lambda k, kind, d=Any: _get(doc, obj, k, kind, d, " in 'network'")
    n, c, ell = g("n", int), g("c", int), g("ell", int)
    eps = g("epsilon", float)
    gamma = g("gamma", float, 1.0)
    rule = g("energy_rule", str, "clustered")
    tie = g("tie_policy", str, "lowest_index")
    iters = g("decode_iterations", int, 6)
    loops = g("self_loops", bool, False)
    for key, value in (("n", n), ("c", c), ("ell", ell), ("decode_iterations", iters)):
        _check(doc, key, value >= 1, f"'{key}' must be >= 1, got {value}")
    _check(doc, "epsilon", 0.0 < eps <= 1.0,
           f"'epsilon' must lie in (0, 1] (increment must be positive), got {eps}")
    _check(doc, "gamma", gamma >= 0, f"'gamma' must be >= 0, got {gamma}")
    _check(doc, "energy_rule", rule in ("clustered", "global"),
           f"'energy_rule' must be 'clustered' or 'global', got {rule!r}")
    _check(doc, "tie_policy", tie in ("lowest_index", "keep_all", "seeded_random"),
           f"unknown 'tie_policy' {tie!r}")
    if rule == "clustered" and n != c * ell:
        raise doc.error(DimensionError, "ell",
                        f"clustered rule needs n = c*ell, got n={n}, c={c}, ell={ell} "
                        f"(c*ell={c * ell})")
    _check(doc, "c", c <= n, f"'c' ({c}) exceeds 'n' ({n})")
    return NetworkConfig(n, c, ell, eps, gamma, rule, tie, iters, loops)


def _channel(doc: _Doc, obj: dict) -> NoiseChannel:
    p_ins = _get(doc, obj, "p_ins", float, where=" in 'channel'")
    p_del = _get(doc, obj, "p_del", float, where=" in 'channel'")
    for key, value in (("p_ins", p_ins), ("p_del", p_del)):
        _check(doc, key, 0.0 <= value <= 1.0, f"'{key}' must lie in [0, 1], got {value}")
    return NoiseChannel(p_ins, p_del)


def _seed(doc: _Doc, obj: dict) -> int:
    seed = _get(doc, obj, "seed", int, 0)
    _check(doc, "seed", 0 <= seed < 2 ** 64, "'seed' must be an unsigned 64-bit integer")
    return seed


def _experiment(doc: _Doc, obj: dict) -> ExperimentSpec:
    config = _network(doc, _get(doc, obj, "network", dict))
    channel = _channel(doc, _get(doc, obj, "channel", dict))
    M, n_it = _get(doc, obj, "M", int), _get(doc, obj, "n_it", int)
    trials = _get(doc, obj, "trials", int, 1)
    for key, value in (("M", M), ("n_it", n_it), ("trials", trials)):
        _check(doc, key, value >= 1, f"'{key}' must be >= 1, got {value}")
    return ExperimentSpec(config, channel, M, n_it, trials, _seed(doc, obj))


def _read(path) -> _Doc:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc.strerror}", str(path)) from None
    return _Doc(text, str(path))


def parse_experiment(path) -> ExperimentSpec:
    doc = _read(path)
    return _experiment(doc, doc.data)


def parse_table1(path) -> list[ExperimentSpec]:
    """A single experiment object, or shared fields plus a ``rows`` list."""
    doc = _read(path)
    data = doc.data
    if isinstance(data, dict) and "rows" in data:
        rows = _get(doc, data, "rows", list)
        shared = {k: v for k, v in data.items() if k != "rows"}
        return [_experiment(doc, {**shared, **row}) for row in rows]
    return [_experiment(doc, data)]


def parse_curve(path) -> CurveSpec:
    doc = _read(path)
    obj = doc.data
    config = _network(doc, _get(doc, obj, "network", dict))
    grid = _get(doc, obj, "M_grid", list)
    _check(doc, "M_grid", len(grid) > 0 and all(isinstance(m, int) and m >= 1 for m in grid),
           "'M_grid' must be a non-empty list of positive integers")
    known = _get(doc, obj, "known_positions", int)
    _check(doc, "known_positions", 0 < known < config.c,
           f"'known_positions' must lie in [1, c), got {known}")
    trials = _get(doc, obj, "trials", int, 1)
    _check(doc, "trials", trials >= 1, f"'trials' must be >= 1, got {trials}")
    gamma = _get(doc, obj, "gamma", float, None)
    iterations = _get(doc, obj, "iterations", int, None)
    return CurveSpec(config, grid, known, trials, _seed(doc, obj), gamma, iterations)


@dataclass(frozen=True)
class NoiseParams:
    synaptic: SynapticModel
    interference: InterferenceModel
    firing: FiringContext


def parse_noise(path) -> NoiseParams:
    doc = _read(path)
    obj = doc.data
    g = lambda k, kind: _get(doc, obj, k, kind)
    n_syn, p_rel = g("n_syn", int), g("p_rel", float)
    n_ex, n_in = g("n_ex", int), g("n_in", int)
    f_ext, t_int = g("f_ext", float), g("t_int", float)
    sigma, n_inputs = g("sigma", float), g("n_inputs", int)
    _check(doc, "n_syn", n_syn >= 1, f"'n_syn' must be >= 1, got {n_syn}")
    _check(doc, "p_rel", 0 <= p_rel <= 1, f"'p_rel' must lie in [0, 1], got {p_rel}")
    _check(doc, "n_ex", n_ex >= 0, f"'n_ex' must be >= 0, got {n_ex}")
    _check(doc, "n_in", n_in >= 0, f"'n_in' must be >= 0, got {n_in}")
    _check(doc, "f_ext", f_ext >= 0, f"'f_ext' must be >= 0, got {f_ext}")
    _check(doc, "t_int", t_int > 0, f"'t_int' must be > 0, got {t_int}")
    _check(doc, "sigma", sigma > 0, f"'sigma' must be > 0, got {sigma}")
    _check(doc, "n_inputs", n_inputs >= 0, f"'n_inputs' must be >= 0, got {n_inputs}")
    return NoiseParams(SynapticModel(n_syn, p_rel), InterferenceModel(n_ex, n_in, f_ext, t_int),
                       FiringContext(sigma, n_inputs))


def parse_network(path) -> NetworkConfig:
    doc = _read(path)
    data = doc.data
    if isinstance(data, dict) and "network" in data:
        data = data["network"]
    return _network(doc, data)


def parse_spec(path):
    """Parse any parameter file, dispatching on the fields it contains."""
    doc = _read(path)
    data = doc.data
    if not isinstance(data, dict):
        raise SpecError("top level must be a JSON object", doc.path, 1)
    if "n_syn" in data:
        return parse_noise(path)
    if "M_grid" in data:
        return parse_curve(path)
    if "rows" in data:
        return parse_table1(path)
    if "channel" in data or "n_it" in data:
        return parse_experiment(path)
    return parse_network(path)


def spec_hash(path) -> str:
    """SHA-256 over the canonical (sorted, compact) JSON form of a spec file."""
    data = json.loads(Path(path).read_text())
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- message files ------------------------------------------------------------

def read_messages(path, c: int | None = None, header: bool = False) -> np.ndarray:
    """Message or probe CSV: one row per message, one column per cluster.

    Set ``header`` to skip a leading column-name row, as written by recall.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([ERASED if tok.strip() in (ERASED_TOKEN, "", "-1") else int(tok)
                             for tok in row])
            except ValueError:
                raise SpecError(f"non-integer entry in row {row!r}", str(path), lineno) from None
            if c is not None and len(rows[-1]) != c:
                raise DimensionError(f"expected {c} columns, got {len(rows[-1])}",
                                     str(path), lineno)
    if len({len(r) for r in rows}) > 1:
        raise DimensionError("rows have differing column counts", str(path))
    return np.array(rows, dtype=np.int64).reshape(len(rows), -1 if rows else (c or 0))


def write_messages(path, messages) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for msg in np.asarray(messages):
            w.writerow([ERASED_TOKEN if v == ERASED else int(v) for v in msg])


# -- network serialization --------------------------------------------------------

def weights_to_dict(W: WeightMatrix, config: NetworkConfig | None = None) -> dict:
    return {
        "format": WEIGHTS_FORMAT,
        "version": FORMAT_VERSION,
        "n": W.n,
        "self_loops": W.self_loops,
        "config": config.to_dict() if config is not None else None,
        "consolidated": W.consolidated_edges().tolist(),
        "transient": [[i, j, w] for (i, j), w in W.transient().items()],
    }


def weights_from_dict(d: dict) -> tuple[WeightMatrix, NetworkConfig | None]:
    if d.get("format") != WEIGHTS_FORMAT:
        raise SpecError(f"not a weight-matrix file (format={d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise SpecError(f"unsupported weight-matrix version {d.get('version')!r}")
    transient = {(int(i), int(j)): float(w) for i, j, w in d["transient"]}
    W = WeightMatrix.from_edges(d["n"], d["consolidated"], transient, d["self_loops"])
    config = NetworkConfig(**d["config"]) if d.get("config") else None
    return W, config


def clique_to_dict(net: CliqueNetwork) -> dict:
    return {"format": CLIQUE_FORMAT, "version": FORMAT_VERSION, "c": net.c, "ell": net.ell,
            "edges": net.edges().tolist()}


def clique_from_dict(d: dict) -> CliqueNetwork:
    if d.get("format") != CLIQUE_FORMAT:
        raise SpecError(f"not a clique-network file (format={d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise SpecError(f"unsupported clique-network version {d.get('version')!r}")
    return CliqueNetwork.from_edges(d["c"], d["ell"], d["edges"])


def save_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None


# -- result emission -------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


@dataclass
class RunManifest:
    subcommand: str
    seed: int | None
    spec_hash: str | None
    started: float = field(default_factory=time.time)
    finished: float | None = None
    outputs: list[str] = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool": "hebbclique",
            "version": self.version,
            "subcommand": self.subcommand,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.finished or self.started)),
            "wall_time_s": round((self.finished or self.started) - self.started, 3),
            "outputs": self.outputs,
        }


def emit_results(tables: dict[str, tuple[Sequence[str], Iterable[dict]]], output_dir,
                 manifest: RunManifest) -> RunManifest:
    """Write each ``name -> (header, rows)`` table as ``name`` in ``output_dir``,
    then ``manifest.json`` listing them."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in tables.items():
            write_csv(out / name, header, rows)
            manifest.outputs.append(name)
        manifest.finished = time.time()
        (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc.strerror or exc}") from exc
    return manifest
