"""Command line: ``sebd run`` farms trajectories, ``sebd verify`` runs the oracle checks.

Settings come from built-in defaults, then an optional flat ``key = value``
file (``--config``), then ``SEBD_WORKERS`` for the worker count, then flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .oracle import CapacityError
from .runner import RunConfig, run, verify

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_CAPACITY = 4

# config-file key -> (RunConfig field, parser)
_KEYS = {
    "model": ("model", str),
    "n": ("n_sites", int),
    "time": ("times", lambda v: tuple(float(x) for x in v.split(",") if x.strip())),
    "dt": ("dt", float),
    "j": ("J", float),
    "h": ("h", float),
    "epsilon": ("epsilon", float),
    "chi_max": ("chi_max", lambda v: None if v.lower() in ("", "none") else int(v)),
    "engine": ("engine", str),
    "basis": ("basis", lambda v: None if v.lower() in ("", "auto") else v),
    "observables": ("observables", lambda v: tuple(x.strip() for x in v.split(",") if x.strip())),
    "samples": ("n_samples", int),
    "seed": ("master_seed", int),
    "workers": ("workers", int),
    "output": ("output", str),
    "format": ("output_format", str),
    "profile_cell": ("profile_cell", lambda v: None if v.lower() in ("", "center") else int(v) - 1),
    "initial": ("initial", str),
}


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower().replace("-", "_")
        if key not in _KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    raw: dict[str, str] = {}
    if args.config:
        raw.update(read_config_file(args.config))
    if environ.get("SEBD_WORKERS"):
        raw["workers"] = environ["SEBD_WORKERS"]
    for key in _KEYS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    fields = {}
    for key, value in raw.items():
        name, parse = _KEYS[key]
        try:
            fields[name] = parse(value)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {value!r}") from exc
    if "dt" not in fields:
        fields["dt"] = 0.1 if fields.get("model") == "heisenberg" else 1.0
    return RunConfig(**fields)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--model", help="kicked_ising | heisenberg")
    p.add_argument("--n", help="number of sites")
    p.add_argument("--time", help="final time, or a comma list of times")
    p.add_argument("--dt", help="Trotter step (kicked Ising: 1)")
    p.add_argument("--j", help="Ising coupling J")
    p.add_argument("--h", help="longitudinal field h")
    p.add_argument("--epsilon", help="relative discarded-weight threshold")
    p.add_argument("--chi-max", dest="chi_max", help="hard bond dimension cap")
    p.add_argument("--engine", help="sebd | tebd")
    p.add_argument("--basis", help="projection basis z | x | y | rdm (default: inferred)")
    p.add_argument("--observables", help="comma list, e.g. sx,sx:bitstring,czz@16,uzz@6")
    p.add_argument("--samples", help="number of trajectories per time")
    p.add_argument("--seed", help="master seed")
    p.add_argument("--workers", help="worker processes (also SEBD_WORKERS)")
    p.add_argument("--output", help="estimator file; profiles go to <stem>.profile<suffix>")
    p.add_argument("--format", help="csv | json")
    p.add_argument("--profile-cell", dest="profile_cell", help="1-based cell for profiles and peaks")
    p.add_argument("--initial", help="neel | up | bitstring | random:<chi>:<seed>")
    p.add_argument("--dump-schedule", action="store_true", help="print the light-cone schedule as JSON and exit")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sebd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="sample trajectories and write aggregated estimates"))
    sub.add_parser("verify", help="oracle and enumeration self-checks, JSON report on stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "verify":
        report = verify()
        print(json.dumps(report, indent=1))
        return EXIT_OK if report["passed"] else EXIT_VERIFY
    try:
        config = build_config(args)
        if args.dump_schedule:
            from .runner import _schedule

            print(_schedule(config.params(max(config.times))).to_json())
            return EXIT_OK
        summary = run(config)
    except CapacityError as exc:
        print(f"sebd: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except MemoryError:
        print("sebd: out of memory", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValueError, OSError) as exc:
        print(f"sebd: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"files": summary.files, "rows": len(summary.estimator_rows), "seconds": round(summary.elapsed, 3)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
