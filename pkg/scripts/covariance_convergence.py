"""Grid convergence table for the stationary covariance solver.

For the SSEP the discrete long-range correlation is compared with
-(rho1 - rho2)^2 x (1 - y) off the diagonal; for a model without a closed
form the self-convergence ratio of C(0.25, 0.5) is reported. Observed orders
come from a least-squares fit of log error against log n.
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.lattice_models import transport_catalogue
from src.mft import covariance
from src.tables import write_table

RESULTS_DIR = Path(__file__).resolve().parent.parent / "results" / "covariance_convergence"


def ssep_errors(grids, rho1=1.0, rho2=0.0):
    model = transport_catalogue("ssep")
    rows = []
    for n in grids:
        result = covariance(model, rho1, rho2, n)
        x = result.x
        exact = -(rho1 - rho2) ** 2 * np.minimum.outer(x, x) * (1.0 - np.maximum.outer(x, x))
        off = ~np.eye(x.size, dtype=bool)
        rows.append({"model": "ssep", "n": n,
                     "error": float(np.max(np.abs(result.long_range - exact)[off])),
                     "value": result.value_at(0.25, 0.5)})
        print(f"   ssep n={n:4d}  max off-diagonal error {rows[-1]['error']:.3e}")
    return rows


def self_convergence(grids, alpha=0.5, rho1=0.9, rho2=0.1):
    model = transport_catalogue("alpha_model", alpha=alpha)
    values = [covariance(model, rho1, rho2, n).value_at(0.25, 0.5) for n in grids]
    rows = []
    for k, n in enumerate(grids):
        error = abs(values[k] - values[k + 1]) if k + 1 < len(values) else np.nan
        rows.append({"model": model.name, "n": n, "error": error, "value": values[k]})
        print(f"   {model.name} n={n:4d}  C(0.25, 0.5) = {values[k]:.12f}")
    return rows


def observed_order(frame):
    data = frame.dropna()
    data = data[data["error"] > 0]
    if len(data) < 2:
        return np.nan
    slope, _ = np.polyfit(np.log(data["n"]), np.log(data["error"]), 1)
    return float(-slope)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grids", type=int, nargs="+", default=[32, 64, 128, 256])
    args = parser.parse_args()

    print("\n" + "=" * 80)
    print("COVARIANCE GRID CONVERGENCE")
    print("=" * 80 + "\n")

    ssep = pd.DataFrame(ssep_errors(args.grids))
    alpha = pd.DataFrame(self_convergence(args.grids))
    orders = {"ssep": observed_order(ssep), "alpha_model": observed_order(alpha)}
    print("\nObserved orders:")
    for name, order in orders.items():
        print(f"   {name:12s} {order:.3f}")

    path = write_table(pd.concat([ssep, alpha], ignore_index=True), RESULTS_DIR / "convergence.csv")
    print(f"\nSaved table to {path}")
    return 0 if abs(orders["alpha_model"] - 2.0) <= 0.2 else 2


if __name__ == "__main__":
    sys.exit(main())
