"""
``nonlocal-boxes`` command line: runs experiments and writes flat result tables.

    nonlocal-boxes verify
    nonlocal-boxes sweep --p-min 0.86 --p-max 0.96 --step 0.01 --depths 0,2,4,6 --function ip:2
    nonlocal-boxes ip-decay --n-max 6 --model noisy:tsirelson
    nonlocal-boxes exact --protocol nlm --model noisy:0.9
    nonlocal-boxes sample --protocol trivial --function ip:2 --depth 4 --model noisy:0.95 --trials 100000
    nonlocal-boxes circuit --ip 3 --out ip3.circuit
    nonlocal-boxes circuit --eval ip3.circuit --model noisy:tsirelson

Every subcommand also accepts ``--config FILE`` (YAML with the same field
names as the flags); flags given on the command line override the file.
Exit status: 0 success, 1 a verification check failed, 2 configuration error.
"""

import argparse
import contextlib
import csv
import io
import json
import logging
import math
import sys
import typing
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence

import jinja2
import numpy as np
import yaml

from . import analysis, boxes, circuits, core, engines, protocols
from .random_utils import derive_seed

log = logging.getLogger("nonlocal_boxes")

COMMANDS = ("verify", "sweep", "ip-decay", "exact", "sample", "circuit")
SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field = field
        self.message = message
        self.line = line
        where = f"line {line}, " if line is not None else ""
        super().__init__(f"{where}field {field!r}: {message}")


###################
# Spec parsing
###################


def parse_function(spec: str) -> core.BooleanFunction:
    """``ip:n``, ``eq:n``, ``and``, ``xor``, ``random:m,n,seed`` or ``table:PATH``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "ip":
            return core.inner_product(int(arg))
        if name == "eq":
            return core.equality(int(arg))
        if name == "and" and not arg:
            return core.and2()
        if name == "xor" and not arg:
            return core.xor2()
        if name == "random":
            m, n, seed = (int(v) for v in arg.split(","))
            return core.random_function(m, n, seed)
        if name == "table":
            return load_table(arg)
    except (ValueError, OSError) as e:
        raise ConfigError("function", f"{spec!r}: {e}") from e
    raise ConfigError("function", f"unknown function {spec!r}")


def load_table(path: str) -> core.BooleanFunction:
    """A truth table file: ``2**m`` rows of ``2**n`` whitespace-separated bits."""
    table = np.loadtxt(path, dtype=np.int64, ndmin=2)
    rows, cols = table.shape
    m, n = rows.bit_length() - 1, cols.bit_length() - 1
    if 1 << m != rows or 1 << n != cols:
        raise ValueError(f"table shape {table.shape} is not 2**m x 2**n")
    return core.make_function(table, m, n, name=f"table:{path}")


def parse_model(spec: str) -> boxes.BoxModel:
    try:
        return boxes.BoxModel.find(spec)
    except ValueError as e:
        raise ConfigError("model", str(e)) from e


##########################
# Experiment configuration
##########################


@dataclass
class ExperimentConfig:
    command: str
    model: str = "perfect"
    function: str = "ip:2"
    depth: int = 0
    trials: int = 10_000
    seed: int = 0
    format: str = "csv"
    out: Optional[str] = None
    protocol: str = "trivial"
    mode: str = "full"
    p_min: float = 0.5
    p_max: float = 1.0
    step: float = 0.05
    depths: List[int] = field(default_factory=lambda: [0, 2, 4, 6])
    n_max: int = 6
    engine: str = "auto"
    workers: Optional[int] = None
    ip: Optional[int] = None
    circuit: Optional[str] = None

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str, **overrides) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text) or {}
            lines = _key_lines(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError("<file>", str(e), mark.line + 1 if mark else None) from e
        if not isinstance(data, dict):
            raise ConfigError("<file>", "a config file is a mapping of field names to values")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data, lines)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], lines: Optional[Dict[str, int]] = None) -> "ExperimentConfig":
        lines = lines or {}
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, "unknown field", lines.get(key))
            if not _matches(hints[key], value):
                raise ConfigError(key, f"expected {_type_name(hints[key])}, got {value!r}", lines.get(key))
        if "command" not in data:
            raise ConfigError("command", "missing")
        config = cls(**data)
        config.validate(lines)
        return config

    def validate(self, lines: Optional[Dict[str, int]] = None):
        lines = lines or {}

        def check(ok, key, message):
            if not ok:
                raise ConfigError(key, message, lines.get(key))

        check(self.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
        check(self.format in ("csv", "json"), "format", "must be csv or json")
        check(self.trials >= 1, "trials", "must be at least 1")
        check(self.depth >= 0, "depth", "must be non-negative")
        check(all(d >= 0 for d in self.depths), "depths", "must be non-negative")
        check(self.step > 0, "step", "must be positive")
        check(0.5 <= self.p_min <= self.p_max <= 1.0, "p_min", "need 0.5 <= p_min <= p_max <= 1")
        check(1 <= self.n_max <= 20, "n_max", "must be in [1, 20]")
        check(self.engine in ("auto", "exact", "compositional", "sampled"), "engine", "unknown engine")
        check(self.mode in ("full", "compositional"), "mode", "must be full or compositional")
        check(self.workers is None or self.workers >= 1, "workers", "must be at least 1")
        check(self.ip is None or 1 <= self.ip <= 20, "ip", "must be in [1, 20]")
        check(self.protocol in protocols.Protocol._registry, "protocol", "unknown protocol")
        for key, parse in (("model", parse_model), ("function", parse_function)):
            try:
                parse(getattr(self, key))
            except ConfigError as e:
                raise ConfigError(key, e.message, lines.get(key)) from e


def _key_lines(text: str) -> Dict[str, int]:
    node = yaml.compose(text)
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {key.value: key.start_mark.line + 1 for key, _ in node.value}


def _matches(hint, value) -> bool:
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        return any(_matches(arg, value) for arg in typing.get_args(hint))
    if hint is type(None):
        return value is None
    if origin is list:
        (item,) = typing.get_args(hint)
        return isinstance(value, list) and all(_matches(item, v) for v in value)
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, hint)


def _type_name(hint) -> str:
    return getattr(hint, "__name__", str(hint).replace("typing.", ""))


##################
# Result tables
##################


@dataclass
class ResultTable:
    """
    A versioned flat table.

    CSV output starts with a ``# schema: <name> v<version>`` line; JSON output
    is ``{"schema": ..., "version": ..., "columns": [...], "records": [...]}``.
    Reading a table with a different schema or version raises ``ValueError``.
    """

    schema: str
    columns: Dict[str, type]
    records: List[Dict[str, Any]] = field(default_factory=list)
    version: int = SCHEMA_VERSION

    def add(self, **record):
        if set(record) != set(self.columns):
            raise ValueError(f"record fields {sorted(record)} do not match columns {list(self.columns)}")
        self.records.append({name: record[name] for name in self.columns})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {self.schema} v{self.version}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for record in self.records:
            writer.writerow([_format_cell(record[name]) for name in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": self.schema,
                "version": self.version,
                "columns": list(self.columns),
                "records": self.records,
            },
            indent=2,
        )

    def dumps(self, format: str) -> str:
        return self.to_csv() if format == "csv" else self.to_json()

    def write(self, path: Optional[str], format: str):
        text = self.dumps(format)
        if path is None:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
        else:
            with open(path, "w") as f:
                f.write(text)

    @classmethod
    def loads(cls, text: str, format: str, schema: str, columns: Dict[str, type]) -> "ResultTable":
        table = cls(schema, dict(columns))
        if format == "csv":
            header, _, body = text.partition("\n")
            cls._check_schema(header.removeprefix("# schema: ").strip(), f"{schema} v{SCHEMA_VERSION}")
            rows = list(csv.reader(io.StringIO(body)))
            if rows[0] != list(columns):
                raise ValueError(f"columns {rows[0]} do not match {list(columns)}")
            for row in rows[1:]:
                table.add(**{name: _parse_cell(cell, columns[name]) for name, cell in zip(columns, row)})
        else:
            data = json.loads(text)
            cls._check_schema(f"{data['schema']} v{data['version']}", f"{schema} v{SCHEMA_VERSION}")
            for record in data["records"]:
                table.add(**record)
        return table

    @staticmethod
    def _check_schema(found: str, expected: str):
        if found != expected:
            raise ValueError(f"result schema is {found!r}, expected {expected!r}")


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_cell(cell: str, kind: type):
    if kind is bool:
        return cell == "true"
    if cell == "":
        return None
    return kind(cell)


SWEEP_COLUMNS = {
    "p": float,
    "depth": int,
    "analytic": float,
    "sampled": float,
    "ci_low": float,
    "ci_high": float,
    "above_threshold": bool,
}
IP_DECAY_COLUMNS = {"n": int, "mode": str, "success": float, "ci_low": float, "ci_high": float, "analytic": float}
EXACT_COLUMNS = {"x": int, "y": int, "success": float}
SAMPLE_COLUMNS = {
    "trials": int,
    "successes": int,
    "estimate": float,
    "ci_low": float,
    "ci_high": float,
    "seed": int,
    "bits_communicated": int,
}
VERIFY_COLUMNS = {"module": str, "check": str, "measured": float, "expected": float, "passed": bool}


############
# Commands
############


def _protocol(config: ExperimentConfig) -> protocols.Protocol:
    function = parse_function(config.function)
    model = parse_model(config.model)
    try:
        return protocols.build_protocol(config.protocol, function=function, model=model, depth=config.depth)
    except ValueError as e:
        raise ConfigError("protocol", str(e)) from e


@contextlib.contextmanager
def _engine_errors(field: str):
    """Report an engine that cannot evaluate the requested combination as a config error on ``field``."""
    try:
        yield
    except (engines.CompositionError, engines.RandomnessSpaceError) as e:
        raise ConfigError(field, str(e)) from e


def sweep_points(p_min: float, p_max: float, step: float) -> List[float]:
    count = int(math.floor((p_max - p_min) / step + 1e-9)) + 1
    return [round(p_min + i * step, 12) for i in range(count)]


def cmd_sweep(config: ExperimentConfig) -> ResultTable:
    f = parse_function(config.function)
    leaf = analysis.base_bias_success(f.bob_arity)
    table = ResultTable("sweep", SWEEP_COLUMNS)
    for i, p in enumerate(sweep_points(config.p_min, config.p_max, config.step)):
        q = analysis.q_of_p(p)
        for depth in config.depths:
            protocol = protocols.TrivialProtocol(f, protocols.AmplificationSpec(depth, boxes.Noisy(p)))
            sample = engines.sample_success(
                protocol, config.trials, derive_seed(config.seed, i, depth), workers=config.workers
            )
            table.add(
                p=p,
                depth=depth,
                analytic=analysis.amplified_success(leaf, q, depth),
                sampled=sample.estimate,
                ci_low=sample.ci95[0],
                ci_high=sample.ci95[1],
                above_threshold=p > analysis.threshold(),
            )
            log.info("sweep p=%s depth=%d: %.6f", p, depth, sample.estimate)
    return table


def cmd_ip_decay(config: ExperimentConfig) -> ResultTable:
    model = parse_model(config.model)
    with _engine_errors("engine"):
        rows = circuits.ip_decay_experiment(
            range(1, config.n_max + 1),
            model,
            engine=config.engine,
            trials=config.trials,
            seed=config.seed,
            workers=config.workers,
        )
    table = ResultTable("ip-decay", IP_DECAY_COLUMNS)
    for row in rows:
        table.add(**asdict(row))
    return table


def cmd_exact(config: ExperimentConfig) -> ResultTable:
    protocol = _protocol(config)
    with _engine_errors("mode"):
        result = engines.exact_success(protocol, config.mode)
    table = ResultTable("exact", EXACT_COLUMNS)
    for (x, y), success in result.per_input.items():
        table.add(x=x, y=y, success=success)
    log.info("worst case %.12f, average %.12f", result.worst_case, result.average)
    return table


def cmd_sample(config: ExperimentConfig) -> ResultTable:
    result = engines.sample_success(_protocol(config), config.trials, config.seed, workers=config.workers)
    table = ResultTable("sample", SAMPLE_COLUMNS)
    table.add(
        trials=result.trials,
        successes=result.successes,
        estimate=result.estimate,
        ci_low=result.ci95[0],
        ci_high=result.ci95[1],
        seed=result.master_seed,
        bits_communicated=result.bits_communicated,
    )
    return table


def cmd_circuit(config: ExperimentConfig) -> Optional[ResultTable]:
    """Write the inner-product circuit (``--ip N``) or evaluate a circuit file (``--eval FILE``)."""
    if config.ip is not None:
        text = circuits.build_ip_circuit(config.ip).to_text()
        if config.out is None:
            sys.stdout.write(text)
        else:
            with open(config.out, "w") as f:
                f.write(text)
        return None
    if config.circuit is None:
        raise ConfigError("circuit", "give --ip N to write a circuit or --eval FILE to evaluate one")
    try:
        with open(config.circuit) as f:
            circuit = circuits.DistributedCircuit.from_text(f.read())
    except (OSError, circuits.CircuitError) as e:
        raise ConfigError("circuit", str(e)) from e
    protocol = circuits.CircuitProtocol(circuit, parse_model(config.model))
    table = ResultTable("ip-decay", IP_DECAY_COLUMNS)
    g = engines.exact_success(protocols.DistributedAndProtocol(protocol.model)).worst_case
    analytic = analysis.xor_chain_success(g, circuit.and_count) if circuit.xor_chain_length() else math.nan
    if config.engine == "sampled":
        result = engines.sample_success(protocol, config.trials, config.seed, workers=config.workers)
        table.add(
            n=circuit.and_count,
            mode="sampled",
            success=result.estimate,
            ci_low=result.ci95[0],
            ci_high=result.ci95[1],
            analytic=analytic,
        )
    else:
        mode = "compositional" if config.engine == "compositional" else "full"
        with _engine_errors("engine"):
            result = engines.exact_success(protocol, mode)
        w = result.worst_case
        table.add(n=circuit.and_count, mode=mode, success=w, ci_low=w, ci_high=w, analytic=analytic)
    return table


##########
# Verify
##########


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    measured: float
    expected: float
    passed: bool
    label: str = ""


REPORT_TEMPLATE = jinja2.Template(
    "{% for c in checks %}"
    "{{ 'PASS' if c.passed else 'FAIL' }}  {{ c.module }}/{{ c.name }}: "
    "{{ '%.6f' % c.measured }} ≈ {{ c.label or ('%.6f' % c.expected) }}\n"
    "{% endfor %}"
    "{{ passed }}/{{ checks | length }} checks passed\n",
    undefined=jinja2.StrictUndefined,
)


def _close(module, name, measured, expected, tol=1e-12, label=""):
    measured, expected = float(measured), float(expected)
    return Check(module, name, measured, expected, abs(measured - expected) <= tol, label)


def _verify_checks(trials: int, seed: int, workers: Optional[int]) -> List[Check]:
    checks = []
    tsirelson = boxes.TSIRELSON
    nlm = protocols.NonlocalMajorityProtocol

    # core
    identities = 0
    for a, b, c, d in np.ndindex(2, 2, 2, 2):
        u, v = core.DistributedBit(a, b), core.DistributedBit(c, d)
        identities += int(core.db_value(core.db_not(u)) == 1 ^ core.db_value(u))
        identities += int(core.db_value(core.db_xor(u, v)) == core.db_value(u) ^ core.db_value(v))
    checks.append(_close("core", "distributed-bit algebra", identities, 32, label="32 identities"))
    ip3 = core.inner_product(3)
    checks.append(_close("core", "ip3(111, 111)", int(ip3((1, 1, 1), (1, 1, 1))), 1))

    # boxes
    checks.append(_close("boxes", "tsirelson", boxes.box_success(boxes.QuantumStrategy()), tsirelson, 1e-9, "(2+√2)/4"))
    checks.append(_close("boxes", "classical-max", boxes.best_local_deterministic().max_success, 0.75, label="3/4"))
    checks.append(_close("boxes", "classical-mixture", boxes.box_success(boxes.LocalMixture.classical()), 0.75))
    shipped = [
        boxes.Perfect(),
        boxes.Noisy(0.9),
        boxes.Noisy(0.5),
        boxes.LocalMixture.classical(),
        boxes.QuantumStrategy(),
        *boxes.LocalDeterministic.all_pairs(),
    ]
    no_signalling = sum(bool(boxes.check_no_signalling(m)) for m in shipped)
    checks.append(_close("boxes", "no-signalling", no_signalling, len(shipped), label=f"{len(shipped)} models"))
    checks.append(_close("boxes", "chsh-quantum", boxes.chsh_value(boxes.QuantumStrategy()), 2 * math.sqrt(2), 1e-9))

    # protocols (through the exact engine)
    exact = engines.exact_success
    checks.append(_close("protocols", "nle-perfect", exact(protocols.NonlocalEqualityProtocol("perfect")).worst_case, 1))
    for p in (0.8, 0.9, 0.95, 1.0):
        checks.append(_close("protocols", f"nlm-noisy:{p}", exact(nlm(boxes.Noisy(p))).worst_case, p**2 + (1 - p) ** 2))
    for n in range(1, 5):
        result = exact(protocols.BaseBiasProtocol(core.inner_product(n)))
        checks.append(_close("protocols", f"base-bias n={n}", result.worst_case, analysis.base_bias_success(n)))
    for model, q in ((boxes.Perfect(), 1.0), (boxes.Noisy(0.95), analysis.q_of_p(0.95))):
        spec = protocols.AmplificationSpec(1, model)
        amp = exact(protocols.AmplifyProtocol(core.inner_product(1), spec)).worst_case
        checks.append(_close("protocols", f"amplify depth=1 {model}", amp, analysis.h(0.75, q)))
    trivial = protocols.TrivialProtocol(core.inner_product(2), protocols.AmplificationSpec(2, "noisy:0.95"))
    bits = engines.sample_success(trivial, 100, seed).bits_communicated
    checks.append(_close("protocols", "trivial-protocol bits", bits, 1))
    van_dam = exact(protocols.VanDamProtocol(core.inner_product(2), "perfect")).worst_case
    checks.append(_close("protocols", "van-dam perfect", van_dam, 1))

    # analysis
    t = analysis.threshold()
    checks.append(_close("analysis", "threshold", analysis.q_of_p(t), 5 / 6, label="q_of_p((3+√6)/6)=5/6"))
    checks.append(_close("analysis", "threshold-value", t, 0.9082482905, 1e-9))
    checks.append(_close("analysis", "final-success(0.95)", analysis.final_success(0.95), 0.864302, 1e-5))
    grid = np.linspace(t + 1e-3, 1.0, 200)
    residual = max(abs(analysis.final_success(p) - analysis.fixed_point_s(analysis.q_of_p(p))) for p in grid)
    checks.append(_close("analysis", "fixed-point consistency", residual, 0.0, 1e-9))
    checks.append(
        _close("analysis", "fixed-point numeric", analysis.fixed_point_numeric(0.905), analysis.fixed_point_s(0.905), 1e-9)
    )
    checks.append(_close("analysis", "ip-lower-bound(1, 10)", analysis.ip_lower_bound(1.0, 10), 9.5))

    # circuits
    gate = exact(protocols.DistributedAndProtocol(boxes.Noisy(tsirelson))).worst_case
    checks.append(_close("circuits", "and@tsirelson", gate, 0.75, label="3/4"))
    for row in circuits.ip_decay_experiment(range(1, 4), boxes.Noisy(tsirelson), engine="exact"):
        checks.append(_close("circuits", f"ip n={row.n}", row.success, 0.5 + 0.5 ** (row.n + 1)))

    # engines
    report = engines.cross_check(nlm(boxes.Noisy(0.95)), trials, seed, workers=workers)
    checks.append(Check("engines", "cross-check nlm", report.worst_deviation, report.sigmas, report.passed, "5σ"))
    full = exact(protocols.AmplifyProtocol(core.inner_product(2), protocols.AmplificationSpec(1, "noisy:0.95")))
    comp = exact(
        protocols.AmplifyProtocol(core.inner_product(2), protocols.AmplificationSpec(1, "noisy:0.95")),
        "compositional",
    )
    checks.append(_close("engines", "full vs compositional", full.worst_case, comp.worst_case))
    one = engines.sample_success(nlm(boxes.Noisy(0.9)), 4000, seed, workers=1)
    many = engines.sample_success(nlm(boxes.Noisy(0.9)), 4000, seed, workers=max(2, workers or 1))
    checks.append(Check("engines", "determinism", many.successes, one.successes, one == many))
    return checks


def cmd_verify(config: ExperimentConfig):
    """Run the invariant suite; returns ``(exit_status, report_text, table)``."""
    from . import config as settings

    with settings.set({"sample.batch-size": 1000}):
        checks = _verify_checks(config.trials, config.seed, config.workers)
    passed = sum(c.passed for c in checks)
    report = REPORT_TEMPLATE.render(checks=checks, passed=passed)
    table = ResultTable("verify", VERIFY_COLUMNS)
    for c in checks:
        table.add(module=c.module, check=c.name, measured=c.measured, expected=c.expected, passed=c.passed)
    return (EXIT_OK if passed == len(checks) else EXIT_CHECK_FAILED), report, table


#########
# main
#########


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-boxes",
        description="Simulate nonlocal boxes and the protocols built on them.",
        formatter_class=lambda prog: argparse.HelpFormatter(prog, max_help_position=9999),
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config; flags override it.")
    common.add_argument("--model", help="perfect | noisy:P | classical | quantum[:a0,a1,b0,b1] | local:AB,CD")
    common.add_argument("--function", help="ip:N | eq:N | and | xor | random:M,N,SEED | table:PATH")
    common.add_argument("--depth", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", help="Output path (default: stdout).")
    common.add_argument("--workers", type=int)

    sub.add_parser("verify", parents=[common], help="Run the full check suite.")
    sweep = sub.add_parser("sweep", parents=[common], help="Amplification success across box noise and depth.")
    sweep.add_argument("--p-min", dest="p_min", type=float)
    sweep.add_argument("--p-max", dest="p_max", type=float)
    sweep.add_argument("--step", type=float)
    sweep.add_argument("--depths", type=_int_list, help="Comma-separated depths.")
    decay = sub.add_parser("ip-decay", parents=[common], help="Inner-product circuit success as n grows.")
    decay.add_argument("--n-max", dest="n_max", type=int)
    decay.add_argument("--engine", choices=("auto", "exact", "compositional", "sampled"))
    for name, help in (("exact", "Exact success of one protocol."), ("sample", "Sampled success of one protocol.")):
        p = sub.add_parser(name, parents=[common], help=help)
        p.add_argument("--protocol", choices=sorted(protocols.Protocol._registry))
        if name == "exact":
            p.add_argument("--mode", choices=("full", "compositional"))
    circuit = sub.add_parser("circuit", parents=[common], help="Write or evaluate a circuit file.")
    group = circuit.add_mutually_exclusive_group()
    group.add_argument("--ip", type=int, help="Write the inner-product circuit on N bits.")
    group.add_argument("--eval", dest="circuit", help="Evaluate a circuit file.")
    circuit.add_argument("--engine", choices=("exact", "compositional", "sampled"))
    return parser


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, not {text!r}")


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    if args.config is not None:
        try:
            with open(args.config) as f:
                text = f.read()
        except OSError as e:
            raise ConfigError("config", str(e)) from e
        return ExperimentConfig.from_yaml(text, **flags)
    return ExperimentConfig.from_dict({k: v for k, v in flags.items() if v is not None})


def run(config: ExperimentConfig) -> int:
    if config.command == "verify":
        status, report, table = cmd_verify(config)
        sys.stdout.write(report)
        if config.out is not None:
            table.write(config.out, config.format)
        return status
    command = {
        "sweep": cmd_sweep,
        "ip-decay": cmd_ip_decay,
        "exact": cmd_exact,
        "sample": cmd_sample,
        "circuit": cmd_circuit,
    }[config.command]
    table = command(config)
    if table is not None:
        table.write(config.out, config.format)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        log.info("running %s", config.command)
        return run(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
