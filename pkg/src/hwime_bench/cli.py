"""hwime-bench: build test sets, replay them against device agents, merge reports."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import agent as agent_cli
from .dataset import (
    TestReplica,
    build_replicas,
    filter_by_charset,
    format_replica,
    load_charset,
    load_pool,
    parse_replica,
    resolve,
)
from .orchestrator import ReportMeta, SessionConfig, merge_reports, run_session, write_report
from .recognizers import format_oracle_labels


def _pools(paths: Sequence[str]):
    return [load_pool(p) for p in paths]


def _replica_for_run(args, pools) -> TestReplica:
    if args.replica:
        return parse_replica(Path(args.replica).read_text(encoding="utf-8"))
    total = sum(len(p) for p in pools)
    size = args.size or total
    return build_replicas(pools, size, 1, args.seed, set_name=args.set_name)[0]


def cmd_run(args) -> int:
    pools = _pools(args.pool)
    replica = _replica_for_run(args, pools)
    samples = resolve(replica, pools)
    cfg = SessionConfig(
        agents=tuple(agent_cli.parse_address(a) for a in args.agent),
        t1_ms=args.t1_ms,
        t2_ms=args.t2_ms,
        normalization_target=args.normalize,
        time_scale=args.time_scale,
        min_wait_ms=args.min_wait_ms,
    )
    records = run_session(cfg, samples)
    meta = ReportMeta(replica.set_name, replica.replica_index, args.system)
    paths = write_report(records, meta, args.report)
    sys.stdout.write(paths["table"].read_text(encoding="utf-8"))
    print(f"report written to {paths['summary']}")
    return 0


def cmd_build_set(args) -> int:
    charset_path = Path(args.charset)
    charset = load_charset(charset_path.read_text(encoding="utf-8"), name=charset_path.stem)
    name = args.name or charset.name
    pools = [filter_by_charset(p, charset) for p in _pools(args.pool)]
    replicas = build_replicas(pools, args.size, args.replicas, args.seed, set_name=name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in replicas:
        path = out / f"{name}_{r.replica_index}.hwrl"
        path.write_text(format_replica(r), encoding="utf-8")
        print(path)
    return 0


def cmd_report(args) -> int:
    table = merge_reports(args.merge)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_labels(args) -> int:
    pools = _pools(args.pool)
    replica = parse_replica(Path(args.replica).read_text(encoding="utf-8"))
    labels = {i: s.label for i, s in enumerate(resolve(replica, pools))}
    Path(args.out).write_text(format_oracle_labels(labels), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hwime-bench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay a replica against one or more agents")
    run.add_argument("--pool", nargs="+", required=True, metavar="HWS")
    run.add_argument("--replica", help="HWRL1 replica file; omit to draw one with --seed")
    run.add_argument("--agent", nargs="+", required=True, metavar="ADDR:PORT")
    run.add_argument("--t1-ms", type=int, default=6)
    run.add_argument("--t2-ms", type=int, default=500)
    run.add_argument("--normalize", type=int, default=180)
    run.add_argument("--time-scale", type=float, default=1.0)
    run.add_argument("--min-wait-ms", type=float, default=50.0,
                     help="real-time floor on the scaled t2 wait")
    run.add_argument("--report", required=True, metavar="DIR")
    run.add_argument("--seed", type=int, default=0, help="seed for an ad-hoc replica when --replica is absent")
    run.add_argument("--size", type=int, help="ad-hoc replica size (default: whole pool)")
    run.add_argument("--set-name", default="adhoc")
    run.add_argument("--system", default="system", help="column name for this run in merged tables")
    run.set_defaults(func=cmd_run)

    bs = sub.add_parser("build-set", help="draw seeded test-set replicas")
    bs.add_argument("--pool", nargs="+", required=True, metavar="HWS")
    bs.add_argument("--charset", required=True)
    bs.add_argument("--size", type=int, required=True)
    bs.add_argument("--replicas", type=int, default=5)
    bs.add_argument("--seed", type=int, required=True)
    bs.add_argument("--out", required=True, metavar="DIR")
    bs.add_argument("--name", help="set name (default: charset file stem)")
    bs.set_defaults(func=cmd_build_set)

    rp = sub.add_parser("report", help="merge summary files into one table")
    rp.add_argument("--merge", nargs="+", required=True, metavar="SUMMARY")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)

    lb = sub.add_parser("labels", help="write the oracle label map for a replica")
    lb.add_argument("--pool", nargs="+", required=True, metavar="HWS")
    lb.add_argument("--replica", required=True)
    lb.add_argument("--out", required=True)
    lb.set_defaults(func=cmd_labels)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["agent"]:
        return agent_cli.main(argv[1:])
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
