"""Command-line experiment runner.

``percolab --spec exp.yaml [--seed S] [--samples N] [--threads T] [--out DIR] [--format csv|json]``

A spec is a YAML (or JSON) tree::

    name: one-arm
    kind: pi_scaling
    n_samples: 200000
    seed: 1
    params: {radii: [8, 16, 32], half_width: 96}

Exit codes: 0 success, 2 invalid spec, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .inference import drivers
from .inference.runner import default_threads

log = logging.getLogger("percolab")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    n_samples: int = 1000
    seed: int = 0
    threads: int = 1
    output: str = "results"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"name", "kind", "params", "n_samples", "seed", "threads", "output"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown spec keys: {sorted(extra)}")
        if "kind" not in d:
            raise ValueError("spec needs a kind")
        d.setdefault("name", d["kind"])
        d.setdefault("threads", default_threads())
        d["params"] = dict(d.get("params") or {})
        return cls(**d)

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ValueError("spec file must hold a mapping")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)


def validate(spec: ExperimentSpec) -> list:
    """Diagnostics (``code: message``); empty when the experiment can run."""
    out = []
    try:
        if int(spec.n_samples) < 1:
            out.append(drivers.Diagnostic("param", "n_samples must be >= 1"))
        if int(spec.threads) < 1:
            out.append(drivers.Diagnostic("param", "threads must be >= 1"))
        if not 0 <= int(spec.seed) < 2 ** 64:
            out.append(drivers.Diagnostic("param", "seed must be an unsigned 64-bit integer"))
    except (TypeError, ValueError) as e:
        out.append(drivers.Diagnostic("param", str(e)))
    out += drivers.validate_params(spec.kind, spec.params)
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if hasattr(o, "to_dict"):
        return _jsonable(o.to_dict())
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, float) and o != o:
        return None
    return o


def run(spec: ExperimentSpec, out_dir=None, fmt="csv"):
    """Execute ``spec`` and write the manifest and tables; returns ``(exit_code, manifest)``."""
    diags = validate(spec)
    if diags:
        for d in diags:
            log.error("%s", d)
        return EXIT_INVALID, {"diagnostics": [str(d) for d in diags]}
    out = Path(out_dir or spec.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        log.error("output directory not writable: %s", e)
        return EXIT_RUNTIME, {"error": str(e)}
    t0 = time.perf_counter()
    try:
        res = drivers.run_kind(spec.kind, spec.params, spec.n_samples, spec.seed, spec.threads)
    except Exception as e:  # noqa: BLE001 - reported through the exit code
        log.exception("experiment failed")
        return EXIT_RUNTIME, {"error": f"{type(e).__name__}: {e}"}
    wall = time.perf_counter() - t0
    manifest = {
        "experiment": spec.name,
        "kind": spec.kind,
        "params": drivers.with_defaults(spec.kind, spec.params),
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "n_samples": spec.n_samples,
        "threads": spec.threads,
        "replica_ranges": res.ranges,
        "estimates": res.estimates,
        "fit": res.fits,
        "checks": res.checks,
        "extra": res.extra,
        "tables": {k: {"columns": c, "rows": r} for k, (c, r) in res.tables.items()} if fmt == "json" else
        sorted(res.tables),
        "wall_time_s": wall,
    }
    try:
        if fmt == "csv":
            for name, (cols, rows) in sorted(res.tables.items()):
                (out / f"{name}.csv").write_text(_csv_text(cols, rows))
        for name, text in res.files.items():
            (out / name).write_text(text)
        (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        log.error("cannot write results: %s", e)
        return EXIT_RUNTIME, {"error": str(e)}
    return EXIT_OK, _jsonable(manifest)


def build_parser():
    ap = argparse.ArgumentParser(prog="percolab", description="Run a percolation Monte Carlo experiment.")
    ap.add_argument("--spec", required=True, help="YAML or JSON experiment spec")
    ap.add_argument("--seed", type=int, help="override the seed in the file")
    ap.add_argument("--samples", type=int, help="override n_samples")
    ap.add_argument("--threads", type=int, help="worker processes (default: spec, then PERCOLAB_THREADS)")
    ap.add_argument("--out", help="output directory (default: spec output)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--validate", action="store_true", help="print diagnostics and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = ExperimentSpec.load(args.spec)
    except (OSError, ValueError, TypeError, yaml.YAMLError) as e:
        log.error("cannot read spec: %s", e)
        return EXIT_INVALID
    if args.seed is not None:
        spec.seed = args.seed
    if args.samples is not None:
        spec.n_samples = args.samples
    if args.threads is not None:
        spec.threads = args.threads
    if args.validate:
        diags = validate(spec)
        for d in diags:
            print(d)
        return EXIT_INVALID if diags else EXIT_OK
    code, manifest = run(spec, args.out, args.format)
    if code == EXIT_OK:
        print(os.path.join(args.out or spec.output, "manifest.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
