"""Recover the Rossler equations from 1000 noisy samples.

Runs the whole pipeline (data, 5-fold training, rounding + AIC selection,
simulation) and prints the candidate table. Takes a few minutes on one core.

    python demos/recover_rossler.py [seed] [out_dir]
"""

import sys

from symode.reproduce import run_example, summary_line

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out_dir = sys.argv[2] if len(sys.argv) > 2 else "symode_out/rossler_demo"

report, winner, ds = run_example("rossler", seed, out_dir=out_dir, log=print)
print(f"{'tol':>7} {'P':>4} {'AIC':>10}  model")
for c in report.candidates:
    model = " | ".join(c["exprs"]) if c["P"] < 12 else "..."
    print(f"{c['tolerance']:>7} {c['P']:>4} {c['aic'] if c['aic'] is not None else float('nan'):>10.1f}  {model}")
print(summary_line(report))
print(f"artifacts in {out_dir}")
