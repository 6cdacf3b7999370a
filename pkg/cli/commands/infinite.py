"""infinite-line command: quenched and annealed current statistics from a step"""
import logging

import numpy as np
import pandas as pd

from cli.core.config import settings
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig, grid_values
from src.exceptions import MissingField
from src.infinite_line import annealed_scgf_ssep, rate_functions, scgf_table, simulate_step_walkers

logger = logging.getLogger(__name__)


def run_infinite_line(job: JobConfig, out: RunOutput):
    """Tables (lambda, mu_quenched, mu_annealed), optionally (q, I_quenched, I_annealed) and walker checks"""
    if job.rho_a is None:
        raise MissingField("rho_a")
    if job.lambda_grid is None:
        raise MissingField("lambda_grid")
    rho_a = float(job.rho_a)
    lambdas = grid_values(job.lambda_grid)
    table = scgf_table(rho_a, lambdas, n_jobs=settings.THREADS)
    if 0 < rho_a <= 1:
        table["mu_annealed_ssep"] = [annealed_scgf_ssep(rho_a, lam) for lam in lambdas]
    out.table("infinite_line_scgf", table)
    out.record(rho_a=rho_a, mean_current=rho_a / np.sqrt(np.pi))

    if job.q_grid is not None:
        out.table("infinite_line_rate", rate_functions(rho_a, grid_values(job.q_grid)))
    if job.walker_samples:
        checks = []
        for ensemble in ("quenched", "annealed"):
            frame = simulate_step_walkers(rho_a, job.walker_time, job.walker_samples, ensemble, seed=job.seed)
            frame.insert(0, "ensemble", ensemble)
            checks.append(frame)
        walkers = pd.concat(checks, ignore_index=True)
        out.table("walkers", walkers)
        out.record(walker_max_relative_error=float(
            np.max(np.abs(walkers["mu_empirical"] / walkers["mu_formula"] - 1.0))))
