#!/usr/bin/env python3
"""Sweep the governor's SLO margins and tabulate the energy/latency trade.

Runs the CLI once per margin value on the same generated workload, pulls
energy totals, pass rates, and latency percentiles out of each result.json,
and writes one CSV row per margin. Tighter margins (higher values applied to
latency budgets here mean more slack handed to the governor) buy energy at
the cost of latency; this makes that curve visible for a given workload.
"""

import argparse
import csv
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def quantile(values, q):
    xs = sorted(values)
    if not xs:
        return float("nan")
    pos = q * (len(xs) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def run_one(cli, workload_args, margin, phase, out_dir, env):
    cmd = [cli, "simulate", *workload_args, "--out", str(out_dir)]
    if phase in ("prefill", "both"):
        cmd += ["--margin-prefill", f"{margin}"]
    if phase in ("decode", "both"):
        cmd += ["--margin-decode", f"{margin}"]
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    if proc.returncode != 0:
        sys.stderr.write(proc.stdout + proc.stderr)
        raise RuntimeError(f"simulate failed for margin {margin} (exit {proc.returncode})")

    with open(Path(out_dir) / "result.json") as fh:
        doc = json.load(fh)
    done = [r for r in doc["requests"] if r.get("completed")]
    ttfts = [r["ttft_ms"] for r in done]
    tbt_p95s = [r["tbt"]["p95"] for r in done if r["tbt"]["p95"] is not None]
    return {
        "margin": margin,
        "total_j": doc["energy"]["total_j"],
        "prefill_j": doc["energy"]["prefill_pool_j"],
        "decode_j": doc["energy"]["decode_pool_j"],
        "ttft_pass_pct": doc["pass"]["ttft_pct"],
        "tbt_pass_pct": doc["pass"]["tbt_pct"],
        "ttft_p50_ms": quantile(ttfts, 0.50),
        "ttft_p90_ms": quantile(ttfts, 0.90),
        "tbt_p95_med_ms": quantile(tbt_p95s, 0.50),
        "saturated": int(doc["saturated"]),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "--cli",
        default=str(REPO_ROOT / "build" / "tools" / "greensim"),
        help="path to the greensim binary",
    )
    ap.add_argument(
        "--margins",
        default="0.6,0.8,0.95,1.2,1.5,2.0",
        help="comma-separated margin values to sweep",
    )
    ap.add_argument(
        "--phase",
        choices=["prefill", "decode", "both"],
        default="both",
        help="which pool's margin to vary (the other keeps its preset)",
    )
    ap.add_argument(
        "--gen",
        default="poisson",
        choices=["poisson", "constant", "sinusoid", "prefill-microbench", "decode-microbench"],
    )
    ap.add_argument("--qps", type=float, default=4.0, help="poisson arrival rate")
    ap.add_argument("--tps", type=float, help="token rate for the non-poisson generators")
    ap.add_argument("--duration-ms", type=int, default=60000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--policy", default="greenllm")
    ap.add_argument("--profile", default="default")
    ap.add_argument("--out", default="margin_sweep.csv", help="summary CSV path")
    ap.add_argument("--keep", help="keep per-run artifacts under this directory")
    args = ap.parse_args()

    cli = Path(args.cli)
    if not cli.is_file():
        ap.error(f"CLI binary not found at {cli} (build the project or pass --cli)")

    workload = [
        "--gen", args.gen,
        "--duration-ms", str(args.duration_ms),
        "--seed", str(args.seed),
        "--policy", args.policy,
        "--profile", args.profile,
    ]
    if args.gen == "poisson":
        workload += ["--qps", str(args.qps)]
    else:
        if args.tps is None:
            ap.error(f"--gen {args.gen} needs --tps")
        workload += ["--tps", str(args.tps)]

    env = dict(os.environ)
    env.setdefault("GREENSIM_PROFILE_DIR", str(REPO_ROOT / "profiles"))

    margins = [float(m) for m in args.margins.split(",")]
    rows = []
    with tempfile.TemporaryDirectory(prefix="margin-sweep-") as tmp:
        base = Path(args.keep) if args.keep else Path(tmp)
        for m in margins:
            out_dir = base / f"margin_{m:g}"
            rows.append(run_one(str(cli), workload, m, args.phase, out_dir, env))
            r = rows[-1]
            print(
                f"margin {m:>5.2f}: {r['total_j']:>10.1f} J total"
                f"  ttft p90 {r['ttft_p90_ms']:>8.1f} ms"
                f"  pass ttft {r['ttft_pass_pct']:>6.2f}% tbt {r['tbt_pass_pct']:>6.2f}%"
                + ("  [saturated]" if r["saturated"] else "")
            )

    fields = list(rows[0].keys())
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} rows, phase={args.phase}, gen={args.gen})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
