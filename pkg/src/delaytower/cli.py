"""Operator command line: mine, verify-tower, bench, simulate, overhead.

Exit codes: 0 success, 1 domain failure (invalid proof, corrupt tower,
degenerate input), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import time
from importlib import resources

from . import sim, tower, vdf
from .bench import reports_to_csv, time_operation

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

DEFAULT_ENDPOINT = "0.0.0.0:6180"


def _load_key(path: str) -> bytes:
    """Read the hex identity key, creating a fresh one when the file is absent."""
    if os.path.exists(path):
        with open(path, "r", encoding="ascii") as fh:
            return bytes.fromhex(fh.read().strip())
    key = secrets.token_bytes(32)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(key.hex() + "\n")
    print(f"generated new identity key at {path}")
    return key


def cmd_mine(args) -> int:
    try:
        key = _load_key(args.key_file)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read key file: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    if os.path.exists(args.tower_file):
        try:
            twr = tower.load_tower(args.tower_file)
        except tower.CorruptTower as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        except OSError as exc:
            print(f"error: cannot read tower file: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        if twr.owner_public_key != key:
            print("error: tower file belongs to a different key", file=sys.stderr)
            return EXIT_DOMAIN
        print(f"resuming tower at height {twr.height} "
              f"(t={twr.params.iterations}, modulus {twr.security.modulus_bits} bits)")
    else:
        security = vdf.SecurityParams(modulus_bits=args.modulus_bits,
                                      iterations=args.iterations)
        effective = vdf.effective_iterations(args.iterations)
        if effective != args.iterations:
            print(f"note: iterations rounded up to {effective}")
        started = time.perf_counter()
        twr = tower.init_tower(security, key, args.endpoint.encode(),
                               created_epoch=args.epoch)
        elapsed = (time.perf_counter() - started) * 1000.0
        tower.save_tower(twr, args.tower_file)
        print(f"initialized tower, height 1 ({elapsed:.1f} ms)")

    try:
        for _ in range(args.proofs):
            started = time.perf_counter()
            twr = tower.extend(twr, created_epoch=args.epoch)
            elapsed = (time.perf_counter() - started) * 1000.0
            tower.save_tower(twr, args.tower_file)
            print(f"height {twr.height - 1} -> {twr.height} ({elapsed:.1f} ms)")
    except tower.CorruptTower as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: cannot write tower file: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"tower height {twr.height}")
    return EXIT_OK


def cmd_verify_tower(args) -> int:
    if not os.path.exists(args.tower_file):
        print(f"error: no such tower file: {args.tower_file}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        twr = tower.load_tower(args.tower_file, validate=False)
    except tower.CorruptTower as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: cannot read tower file: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    for index in range(twr.height):
        started = time.perf_counter()
        ok = tower.record_valid(twr, index)
        elapsed = (time.perf_counter() - started) * 1000.0
        if not ok:
            print(f"record {index}: INVALID")
            print(f"error: tower fails validation at record {index}", file=sys.stderr)
            return EXIT_DOMAIN
        print(f"record {index}: ok ({elapsed:.2f} ms)")
    print(f"tower valid, height {twr.height}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        iteration_points = [int(v) for v in args.iterations_list.split(",") if v.strip()]
    except ValueError:
        print("error: --iterations-list must be comma-separated integers",
              file=sys.stderr)
        return EXIT_USAGE
    if not iteration_points or any(t < 1 for t in iteration_points):
        print("error: --iterations-list needs positive integers", file=sys.stderr)
        return EXIT_USAGE

    reports = []
    for t in iteration_points:
        security = vdf.SecurityParams(modulus_bits=args.modulus_bits, iterations=t)
        pp = vdf.setup(security, b"bench", b"bench")
        x = vdf.hash_to_group(pp.input_digest, pp.modulus)
        output, proof = vdf.eval(pp, x)
        invalid = vdf.VdfProof(
            output=proof.output,
            checkpoints=proof.checkpoints,
            embedded_prime_length_bits=proof.embedded_prime_length_bits - 1,
        )

        def run_eval():
            vdf.eval(pp, x)

        def run_verify_valid():
            vdf.fast_reject(security, proof) or vdf.verify(pp, x, output, proof)

        def run_verify_invalid():
            vdf.fast_reject(security, invalid) or vdf.verify(pp, x, output, invalid)

        for label, fn in (("eval", run_eval),
                          ("verify-valid", run_verify_valid),
                          ("verify-invalid", run_verify_invalid)):
            report = time_operation(label, pp.iterations, fn, args.samples)
            reports.append(report)
            print(report.summary_line())

    try:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(reports_to_csv(reports))
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"wrote {args.out}")
    return EXIT_OK


def _resolve_scenario(spec: str) -> str:
    """Treat the argument as a path first, then as a bundled scenario name."""
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as fh:
            return fh.read()
    name = spec if spec.endswith(".json") else spec + ".json"
    bundle = resources.files("delaytower").joinpath("scenarios").joinpath(name)
    if bundle.is_file():
        return bundle.read_text(encoding="utf-8")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {spec!r}")


def cmd_simulate(args) -> int:
    try:
        text = _resolve_scenario(args.scenario)
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = sim.scenario_from_json(text)
    except json.JSONDecodeError as exc:
        print(f"error: {args.scenario}:{exc.lineno}:{exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_USAGE
    except sim.InvalidScenario as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    metrics = sim.run(scenario)

    try:
        with open(args.out_csv, "w", encoding="ascii") as fh:
            fh.write(metrics.to_csv())
        with open(args.out_summary, "w", encoding="ascii") as fh:
            fh.write(metrics.to_summary_json())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    recovery = sim.recovery_time(metrics)
    recovery_text = "never" if recovery is sim.NEVER_RECOVERED else str(recovery)
    print(f"{len(metrics.epochs)} epochs: {metrics.total_commits} commits, "
          f"{metrics.total_timeouts} timeouts, recovery {recovery_text}")
    print(f"wrote {args.out_csv} and {args.out_summary}")
    return EXIT_OK


def cmd_overhead(args) -> int:
    if args.verify_ms < 0 or args.proofs_per_epoch <= 0 or args.validators <= 0 \
            or args.epoch_seconds <= 0:
        print("error: verify-ms must be >= 0 and the remaining inputs positive",
              file=sys.stderr)
        return EXIT_USAGE
    per_validator = args.verify_ms * args.proofs_per_epoch / 1000.0
    network_total = per_validator * args.validators
    fraction = network_total / (args.epoch_seconds * args.validators)
    print(f"per-validator verification: {per_validator:.2f} s per epoch")
    print(f"network total: {network_total:.2f} s per epoch")
    print(f"fraction of validator time: {fraction * 100:.4g}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaytower",
        description="Mine, validate, benchmark, and simulate delay towers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mine = sub.add_parser("mine", help="extend a local tower file")
    p_mine.add_argument("--tower-file", required=True)
    p_mine.add_argument("--key-file", required=True)
    p_mine.add_argument("--proofs", type=int, default=1)
    p_mine.add_argument("--iterations", type=int, default=4096,
                        help="sequential squarings per proof (fresh towers only)")
    p_mine.add_argument("--modulus-bits", type=int, default=2048)
    p_mine.add_argument("--endpoint", default=DEFAULT_ENDPOINT)
    p_mine.add_argument("--epoch", type=int, default=0,
                        help="epoch tag stored on new proofs")
    p_mine.set_defaults(fn=cmd_mine)

    p_verify = sub.add_parser("verify-tower", help="validate a tower file")
    p_verify.add_argument("--tower-file", required=True)
    p_verify.set_defaults(fn=cmd_verify_tower)

    p_bench = sub.add_parser("bench", help="time eval and verify at several depths")
    p_bench.add_argument("--iterations-list", required=True,
                         help="comma-separated step counts, e.g. 1024,65536")
    p_bench.add_argument("--samples", type=int, default=20)
    p_bench.add_argument("--out", required=True, help="per-sample CSV path")
    p_bench.add_argument("--modulus-bits", type=int, default=512)
    p_bench.set_defaults(fn=cmd_bench)

    p_sim = sub.add_parser("simulate", help="run a scenario file")
    p_sim.add_argument("--scenario", required=True,
                       help="scenario path or bundled name (healthy-100, "
                            "crash-minority, crash-majority)")
    p_sim.add_argument("--out-csv", required=True)
    p_sim.add_argument("--out-summary", required=True)
    p_sim.set_defaults(fn=cmd_simulate)

    p_over = sub.add_parser("overhead", help="verification overhead arithmetic")
    p_over.add_argument("--verify-ms", type=float, required=True)
    p_over.add_argument("--proofs-per-epoch", type=int, required=True)
    p_over.add_argument("--validators", type=int, required=True)
    p_over.add_argument("--epoch-seconds", type=int, required=True)
    p_over.set_defaults(fn=cmd_overhead)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except vdf.InvalidSecurityParams as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
