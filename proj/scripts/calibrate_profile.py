#!/usr/bin/env python3
"""Check a GPU profile's coefficient calibration against the design targets.

The simulator's policies only produce sensible behaviour when the profile's
energy landscape has the right shape: per-batch prefill energy must be
U-shaped in clock frequency with its minimum in a narrow mid-range band, and
the decode per-token optimum must sit strictly below the prefill optimum.
This script evaluates the closed-form latency/power models (the same
polynomials the C++ library uses) on the profile's frequency grid and
verifies those targets, so a new profile can be tuned before it is wired
into runs.

Exit status is 0 when every target holds, 1 otherwise.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def load_profile(path):
    with open(path) as fh:
        return json.load(fh)


def grid_frequencies(grid):
    lo, hi, step = grid["f_min_mhz"], grid["f_max_mhz"], grid["step_mhz"]
    n = int(round((hi - lo) / step))
    if abs(lo + n * step - hi) > 1e-9:
        raise ValueError(f"grid span {lo}..{hi} is not a multiple of step {step}")
    return [lo + i * step for i in range(n + 1)]


def active_power_w(power, f):
    return ((power["k3"] * f + power["k2"]) * f + power["k1"]) * f + power["k0"]


def prefill_t_ref_ms(lat, prompt_tokens):
    return (lat["a"] * prompt_tokens + lat["b"]) * prompt_tokens + lat["c"]


def decode_step_ms(dec, batch, f):
    return (dec["alpha0_ms"] + dec["alpha1_ms"] * batch) + (
        dec["beta0_ms"] + dec["beta1_ms"] * batch
    ) * dec["f_ref_mhz"] / f


def prefill_energy_curve(profile, freqs, prompt_tokens, utilization):
    """Per-batch energy over the window the batch occupies.

    The window is sized so the batch is busy for `utilization` of it at the
    reference clock; slower clocks stretch the busy span into the idle
    remainder, so points with busy time exceeding the window are infeasible
    (the batch would miss its slot) and are skipped.
    """
    lat, power = profile["prefill_latency"], profile["power"]
    t_ref = prefill_t_ref_ms(lat, prompt_tokens)
    window_ms = t_ref / utilization
    curve = []
    for f in freqs:
        busy_ms = t_ref * lat["f_ref_mhz"] / f
        if busy_ms > window_ms + 1e-9:
            curve.append((f, math.nan))
            continue
        active_j = active_power_w(power, f) * busy_ms / 1000.0
        idle_j = power["p_idle_w"] * (window_ms - busy_ms) / 1000.0
        curve.append((f, active_j + idle_j))
    return curve


def decode_energy_curve(profile, freqs, batch):
    """Active energy per generated token at a steady batch size."""
    dec, power = profile["decode_step"], profile["power"]
    return [
        (f, active_power_w(power, f) * decode_step_ms(dec, batch, f) / (1000.0 * batch))
        for f in freqs
    ]


def argmin_f(curve):
    best = None
    for f, e in curve:
        if not math.isnan(e) and (best is None or e < best[1]):
            best = (f, e)
    return best


class Report:
    def __init__(self):
        self.failures = 0

    def check(self, ok, label, detail):
        mark = "ok  " if ok else "FAIL"
        print(f"  [{mark}] {label}: {detail}")
        if not ok:
            self.failures += 1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "profile",
        nargs="?",
        default=str(REPO_ROOT / "profiles" / "default.json"),
        help="profile JSON to check (default: the shipped default profile)",
    )
    ap.add_argument(
        "--band",
        default="950:1050",
        help="required band for the prefill energy optimum, MHz lo:hi",
    )
    ap.add_argument(
        "--min-endpoint-ratio",
        type=float,
        default=1.15,
        help="required E(f_max)/E(optimum) for the prefill curve",
    )
    ap.add_argument(
        "--utilization",
        type=float,
        default=0.5,
        help="prefill busy fraction of the window at the reference clock",
    )
    ap.add_argument(
        "--prompt-tokens", type=int, default=1024, help="representative prefill batch size"
    )
    ap.add_argument(
        "--batches",
        default="1,16,64",
        help="decode batch sizes for the per-token curves",
    )
    ap.add_argument("--csv", help="also dump the evaluated curves to this CSV")
    args = ap.parse_args()

    band_lo, band_hi = (float(x) for x in args.band.split(":"))
    batches = [int(b) for b in args.batches.split(",")]

    profile = load_profile(args.profile)
    freqs = grid_frequencies(profile["grid"])
    power = profile["power"]
    print(f"profile {profile['name']} ({args.profile})")
    print(f"  grid {freqs[0]:.0f}..{freqs[-1]:.0f} MHz step {profile['grid']['step_mhz']:.0f}, {len(freqs)} points")

    rep = Report()

    pw = [active_power_w(power, f) for f in freqs]
    rep.check(
        all(b > a for a, b in zip(pw, pw[1:])),
        "power monotone",
        f"P({freqs[0]:.0f})={pw[0]:.1f} W .. P({freqs[-1]:.0f})={pw[-1]:.1f} W",
    )
    rep.check(
        min(pw) > power["p_idle_w"],
        "active above idle",
        f"min P={min(pw):.1f} W vs p_idle={power['p_idle_w']:.1f} W",
    )

    pf_curve = prefill_energy_curve(profile, freqs, args.prompt_tokens, args.utilization)
    f_star, e_star = argmin_f(pf_curve)
    e_max = dict(pf_curve)[freqs[-1]]
    ratio = e_max / e_star
    rep.check(
        band_lo <= f_star <= band_hi,
        "prefill optimum in band",
        f"argmin {f_star:.0f} MHz, target [{band_lo:.0f}, {band_hi:.0f}] "
        f"(L={args.prompt_tokens}, u={args.utilization:.2f})",
    )
    rep.check(
        ratio >= args.min_endpoint_ratio,
        "prefill U-shape depth",
        f"E(f_max)/E(opt) = {ratio:.3f}, required >= {args.min_endpoint_ratio:.2f}",
    )

    dec_curves = {b: decode_energy_curve(profile, freqs, b) for b in batches}
    worst = max((argmin_f(c)[0], b) for b, c in dec_curves.items())
    for b in batches:
        f_opt, e_opt = argmin_f(dec_curves[b])
        print(f"  decode batch {b:>3}: optimum {f_opt:.0f} MHz, {e_opt * 1000:.2f} mJ/token")
    rep.check(
        worst[0] < f_star,
        "decode optimum below prefill",
        f"max decode argmin {worst[0]:.0f} MHz (batch {worst[1]}) vs prefill {f_star:.0f} MHz",
    )

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["f_mhz", "active_power_w", "prefill_batch_j"]
                + [f"decode_mj_per_token_b{b}" for b in batches]
            )
            for i, f in enumerate(freqs):
                row = [f, pw[i], pf_curve[i][1]]
                row += [dec_curves[b][i][1] * 1000 for b in batches]
                w.writerow(row)
        print(f"  curves written to {args.csv}")

    if rep.failures:
        print(f"{rep.failures} calibration target(s) violated")
    else:
        print("all calibration targets hold")
    return 1 if rep.failures else 0


if __name__ == "__main__":
    sys.exit(main())
