"""Train the pendulum preset with the custom loss and with plain L1 + MSE.

    python demos/pendulum_losses.py [seed]
"""

import sys

from symode.reproduce import run_example

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
for loss in ("custom", "l1mse"):
    report, _, _ = run_example("pendulum", seed, loss=loss)
    print(f"{loss:>7}: rmse {100 * report.winner_rmse:6.2f}%  {report.winner_exprs}")
