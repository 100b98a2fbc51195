"""Batch front end: ``place run | describe | generate``.

Exit codes: 0 success, 2 bad configuration, 3 bad problem, 4 algorithm failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, InvalidProblem, InvalidSpec, PlacementError, ProblemError
from .greedy import (
    PlacementResult,
    exhaustive_search,
    greedy_select,
    lazy_greedy_select,
    stochastic_greedy_select,
)
from .problem import (
    GeneratorSpec,
    InverseProblem,
    assemble_rows,
    generate_problem,
    load_problem,
    low_rank_compress,
    save_problem,
    singular_spectrum,
    suggest_rank,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("greedy", "lazy", "exhaustive", "stochastic")
CSV_COLUMNS = ("step", "candidate", "gain", "phi", "cumulative_gain_evals")
EXIT_CONFIG, EXIT_PROBLEM, EXIT_ALGORITHM = 2, 3, 4


@dataclass
class RunConfig:
    """A batch run. ``problem`` is ``{"path": ...}`` or ``{"generator": {...}}``."""

    problem: dict
    budget: int
    algorithms: tuple
    gain_path: str = "measurement"
    low_rank: Optional[int] = None
    seed: int = 0
    output_dir: str = "out"
    exhaustive_cap: int = 10**6
    epsilon: float = 0.1
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, data, base_dir=".") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for key in ("problem", "budget", "algorithms"):
            if key not in data:
                raise ConfigError(f"missing required field {key!r}")
        problem = data["problem"]
        if isinstance(problem, dict) and "kind" in problem:
            problem = {"generator": problem}
        if not isinstance(problem, dict) or len(set(problem) & {"path", "generator"}) != 1:
            raise ConfigError("problem must be {'path': ...} or {'generator': {...}}")

        algorithms = data["algorithms"]
        if isinstance(algorithms, str) or not isinstance(algorithms, list) or not algorithms:
            raise ConfigError("algorithms must be a non-empty list")
        bad = [a for a in algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if len(set(algorithms)) != len(algorithms):
            raise ConfigError("algorithms listed twice")

        def integer(key, default, minimum):
            value = data.get(key, default)
            if value is None and key == "low_rank":
                return None
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}")
            return value

        gain_path = data.get("gain_path", "measurement")
        if gain_path not in ("measurement", "parameter"):
            raise ConfigError(f"gain_path must be 'measurement' or 'parameter', got {gain_path!r}")
        epsilon = data.get("epsilon", 0.1)
        if not isinstance(epsilon, (int, float)) or not 0.0 < epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon!r}")
        return cls(
            problem=problem,
            budget=integer("budget", None, 1),
            algorithms=tuple(algorithms),
            gain_path=gain_path,
            low_rank=integer("low_rank", None, 1),
            seed=integer("seed", 0, 0),
            output_dir=str(data.get("output_dir", "out")),
            exhaustive_cap=integer("exhaustive_cap", 10**6, 1),
            epsilon=float(epsilon),
            base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def build_problem(self) -> InverseProblem:
        if "path" in self.problem:
            return load_problem(self.base_dir / self.problem["path"])
        gen = self.problem["generator"]
        if not isinstance(gen, dict):
            raise ConfigError("generator must be a JSON object")
        try:
            return generate_problem(GeneratorSpec.from_dict(gen))
        except (InvalidSpec, InvalidProblem) as exc:
            raise ProblemError(f"cannot generate problem: {exc}") from exc


@dataclass
class RunReport:
    results: dict
    instance: dict
    guarantee_ratio: Optional[float]
    version: str = __version__

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "version": self.version,
            "instance": self.instance,
            "guarantee_ratio": self.guarantee_ratio,
            "results": {name: r.to_dict(timing) for name, r in self.results.items()},
        }


def instance_digest(prepared) -> dict:
    gram = np.ascontiguousarray(prepared.gram, dtype="<f8")
    return {
        "d": prepared.d,
        "n": prepared.n,
        "gram_sha256": hashlib.sha256(gram.tobytes()).hexdigest(),
    }


def write_trace(result: PlacementResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        rows = zip(result.selected, result.step_gains, result.phi_trace, result.evals_trace)
        for step, (v, gain, phi, evals) in enumerate(rows, start=1):
            writer.writerow([step, v, f"{gain:.17g}", f"{phi:.17g}", evals])


def run(config: RunConfig, timing: bool = True) -> RunReport:
    """Execute every requested algorithm once and write the report and traces."""
    problem = config.build_problem()
    if config.budget > problem.d:
        raise ConfigError(f"budget {config.budget} exceeds the {problem.d} candidate sensors")
    prepared = assemble_rows(problem)
    if config.low_rank is not None:
        if config.low_rank > min(prepared.d, prepared.n):
            raise ConfigError(f"low_rank {config.low_rank} exceeds min(d, n)")
        prepared = low_rank_compress(prepared, config.low_rank)

    k = config.budget
    runners = {
        "greedy": lambda: greedy_select(prepared, k, config.gain_path),
        "lazy": lambda: lazy_greedy_select(prepared, k, config.gain_path),
        "exhaustive": lambda: exhaustive_search(prepared, k, config.exhaustive_cap),
        "stochastic": lambda: stochastic_greedy_select(
            prepared, k, config.epsilon, config.seed, config.gain_path),
    }
    results = {}
    for name in config.algorithms:
        log.info("running %s with k=%d on d=%d, n=%d", name, k, prepared.d, prepared.n)
        results[name] = runners[name]()

    ratio = None
    if "exhaustive" in results:
        greedy = results.get("greedy") or results.get("lazy") or greedy_select(prepared, k)
        opt = results["exhaustive"].phi
        ratio = greedy.phi / opt if opt > 0 else 1.0

    report = RunReport(results=results, instance=instance_digest(prepared), guarantee_ratio=ratio)
    out = config.base_dir / config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(timing), indent=2, sort_keys=True) + "\n")
    for name, result in results.items():
        write_trace(result, out / f"{name}.csv")
    return report


def describe(path) -> dict:
    """Summary of a problem file: sizes, noise range and Gram spectrum."""
    problem = load_problem(path)
    prepared = assemble_rows(problem)
    spectrum = singular_spectrum(prepared)
    eigenvalues = np.sort(np.linalg.eigvalsh(prepared.gram))[::-1]
    return {
        "d": problem.d,
        "n": problem.n,
        "noise_std_min": float(problem.noise_std.min()),
        "noise_std_max": float(problem.noise_std.max()),
        "gram_top_eigenvalues": [float(x) for x in eigenvalues[:10]],
        "suggested_rank": suggest_rank(spectrum, 1e-8),
    }


def _print_summary(summary: dict) -> None:
    print(f"d: {summary['d']}")
    print(f"n: {summary['n']}")
    print(f"noise_std range: [{summary['noise_std_min']:.6g}, {summary['noise_std_max']:.6g}]")
    print("gram top eigenvalues: " + " ".join(f"{x:.6e}" for x in summary["gram_top_eigenvalues"]))
    print(f"suggested rank (1e-8 spectral mass): {summary['suggested_rank']}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="place", description="Greedy EIG sensor placement.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run selection algorithms from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--no-timing", action="store_true", help="write null wall times")

    p = sub.add_parser("describe", help="summarize a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--json", action="store_true", help="print the summary as JSON")

    p = sub.add_parser("generate", help="write a generated problem to JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            report = run(RunConfig.load(args.config), timing=not args.no_timing)
            for name, result in report.results.items():
                print(f"{name}: selected={list(result.selected)} phi={result.phi:.10g} "
                      f"gain_evals={result.gain_evals}")
            if report.guarantee_ratio is not None:
                print(f"guarantee ratio: {report.guarantee_ratio:.10g}")
        elif args.command == "describe":
            summary = describe(args.problem)
            if args.json:
                print(json.dumps(summary, indent=2))
            else:
                _print_summary(summary)
        else:
            try:
                spec = GeneratorSpec.from_dict(json.loads(Path(args.spec).read_text()))
            except (OSError, json.JSONDecodeError, InvalidSpec) as exc:
                raise ConfigError(f"bad generator spec {args.spec}: {exc}") from exc
            save_problem(generate_problem(spec), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProblemError, InvalidProblem) as exc:
        print(f"problem error: {exc}", file=sys.stderr)
        return EXIT_PROBLEM
    except PlacementError as exc:
        print(f"algorithm error: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    return 0


if __name__ == "__main__":
    sys.exit(main())
