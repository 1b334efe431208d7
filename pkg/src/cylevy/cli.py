"""``cylevy`` command line: ``validate``, ``run`` and ``report``.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 anything else
(unreadable or invalid config, unsupported combination, runtime error).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import CapabilityError, ConfigError, load_config, validate_config
from .experiments import TIMESTAMP_KEY, run_experiment, write_outputs

EXIT_OK, EXIT_ASSERTION, EXIT_INFRA = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cylevy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config against the schema without running it")
    v.add_argument("--config", required=True, type=Path)

    r = sub.add_parser("run", help="execute one experiment and write report.json plus CSV tables")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, help="output directory (default: the config's 'output' or ./out)")
    r.add_argument("--seed", type=_u64, help="override master_seed")
    r.add_argument("--threads", type=_positive, default=1, help="worker threads; never changes results")

    p = sub.add_parser("report", help="pretty-print a report.json")
    p.add_argument("path", type=Path, help="report.json or a directory holding one")
    return ap


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read {args.config}: {exc}")
        return EXIT_INFRA
    errors = validate_config(cfg)
    if errors:
        for e in errors:
            _err(f"error: {e}")
        return EXIT_INFRA
    print(f"ok: {args.config}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read {args.config}: {exc}")
        return EXIT_INFRA
    try:
        report, tables = run_experiment(cfg, threads=args.threads, seed=args.seed)
    except ConfigError as exc:
        for e in exc.errors:
            _err(f"error: {e}")
        return EXIT_INFRA
    except CapabilityError as exc:
        _err(f"capability error: {exc}")
        return EXIT_INFRA
    except Exception as exc:  # noqa: BLE001 - every other failure is infrastructure
        _err(f"run failed: {type(exc).__name__}: {exc}")
        return EXIT_INFRA
    out = args.out or Path(cfg.get("output", "out"))
    write_outputs(report, tables, out)
    for a in report["assertions"]:
        if not a["passed"]:
            _err(f"FAILED {a['name']}: value={a['value']} bound={a['bound']}")
    status = "PASS" if report["passed"] else "FAIL"
    print(f"{status} {report['name']} ({len(report['assertions'])} assertions) -> {out / 'report.json'}")
    return EXIT_OK if report["passed"] else EXIT_ASSERTION


def format_report(report: dict) -> str:
    lines = [
        f"{report.get('name')}  kind={report.get('kind')}  passed={report.get('passed')}",
        f"master_seed={report.get('seeds', {}).get('master_seed')}  "
        f"schema_version={report.get('schema_version')}  {TIMESTAMP_KEY}={report.get(TIMESTAMP_KEY)}",
    ]
    width = max((len(a["name"]) for a in report.get("assertions", [])), default=0)
    for a in report.get("assertions", []):
        mark = "ok  " if a["passed"] else "FAIL"
        lines.append(f"  {mark} {a['name']:<{width}}  value={a['value']}  bound={a['bound']}")
    for k, v in sorted(report.get("estimates", {}).items()):
        text = json.dumps(v)
        lines.append(f"  {k}: {text if len(text) <= 100 else text[:97] + '...'}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    path = args.path / "report.json" if args.path.is_dir() else args.path
    try:
        report = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read {path}: {exc}")
        return EXIT_INFRA
    print(format_report(report))
    return EXIT_OK if report.get("passed") else EXIT_ASSERTION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"validate": cmd_validate, "run": cmd_run, "report": cmd_report}[args.command]
    return handler(args)


if __name__ == "__main__":
    raise SystemExit(main())
