"""Full-scale simulation benchmark for the open SSEP and the quantum dot.

SSEP L=8 with rates (1, 0, 1, 0): the mean current must lie within 3 standard
errors of 1/9 and the variance rate within 10% of 1/24, estimated from 10^4
replicas run to t = 10^3 after burn-in. The quantum dot's empirical
stationary law must pass the chi-square test at p > 0.01.

The pooled record is saved to results/benchmark/ssep_record.joblib so the
estimators can be rerun without simulating again (--reuse).
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.core.config import settings
from src.kmc_simulator import (
    SimulationPlan,
    SimulationRecord,
    chi_square_stationary,
    current_statistics,
    default_burn_in,
    simulate,
)
from src.lattice_models import SsepParams, quantum_dot_generator
from src.markov_core import stationary_distribution

RESULTS_DIR = Path(__file__).resolve().parent.parent / "results" / "benchmark"
MEAN_CURRENT = 1 / 9
VARIANCE_RATE = 1 / 24


def ssep_benchmark(replicas=10_000, duration=1_000.0, seed=2024, n_jobs=1, reuse=False):
    """
    Run (or reload) the SSEP replicas and compare the current cumulants.

    Returns:
        True when both cumulants are within tolerance
    """
    print("\n" + "=" * 80)
    print(f"SSEP L=8 (1, 0, 1, 0): {replicas} replicas x t={duration:g}")
    print("=" * 80)

    params = SsepParams(8, 1.0, 0.0, 1.0, 0.0)
    path = RESULTS_DIR / "ssep_record.joblib"
    if reuse and path.exists():
        print(f"\nLoading {path}")
        record = SimulationRecord.load(path)
    else:
        burn_in = default_burn_in(params)
        plan = SimulationPlan(params, t_max=burn_in + duration, n_replicas=replicas, seed=seed, burn_in=burn_in)
        start = time.time()
        record = simulate(plan, n_jobs=n_jobs)
        print(f"\nSimulated {int(record.events.sum())} events in {time.time() - start:.1f}s")
        record.save(path)
        print(f"Saved record to {path}")

    stats = current_statistics(record, "left")
    sigmas = abs(stats.mean - MEAN_CURRENT) / stats.mean_stderr
    relative = abs(stats.variance - VARIANCE_RATE) / VARIANCE_RATE
    print(f"\n   mean current   {stats.mean:.6f} +/- {stats.mean_stderr:.6f}  (exact {MEAN_CURRENT:.6f}, "
          f"{sigmas:.2f} sigma)")
    print(f"   variance rate  {stats.variance:.6f} +/- {stats.variance_stderr:.6f}  (exact {VARIANCE_RATE:.6f}, "
          f"{100 * relative:.1f}% off)")
    passed = sigmas <= 3.0 and relative <= 0.10
    print(f"\n{'PASS' if passed else 'FAIL'} ssep current cumulants")
    return passed


def quantum_dot_benchmark(duration=100_000.0, seed=11, n_jobs=1):
    print("\n" + "=" * 80)
    print(f"Quantum dot stationary law: t={duration:g}")
    print("=" * 80)
    gen = quantum_dot_generator(2.0, 1.0, 1.0, 1.0)
    record = simulate(SimulationPlan(gen, t_max=duration, seed=seed), n_jobs=n_jobs)
    statistic, p_value, dof = chi_square_stationary(record, stationary_distribution(gen))
    passed = p_value > 0.01
    print(f"\n   chi2 = {statistic:.3f} with {dof} dof, p = {p_value:.3f}")
    print(f"\n{'PASS' if passed else 'FAIL'} quantum dot stationary law")
    return passed


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicas", type=int, default=10_000)
    parser.add_argument("--duration", type=float, default=1_000.0)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--jobs", type=int, default=settings.THREADS, help="parallel workers")
    parser.add_argument("--reuse", action="store_true", help="reuse a saved SSEP record")
    args = parser.parse_args()

    results = [
        ssep_benchmark(args.replicas, args.duration, args.seed, args.jobs, args.reuse),
        quantum_dot_benchmark(n_jobs=args.jobs),
    ]
    return 0 if all(results) else 2


if __name__ == "__main__":
    sys.exit(main())
