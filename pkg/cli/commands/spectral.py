"""scgf and rate-function commands on finite Markov generators"""
import logging

import numpy as np
from joblib import Parallel, delayed

from cli.core.config import settings
from cli.core.model_registry import registry
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig, grid_values
from src.exceptions import IrreversibleTransition, MissingField
from src.markov_core import (
    RateCurve,
    entropy_production_rate,
    fano_factor,
    mean_rate,
    rate_function,
    scgf_value,
)

logger = logging.getLogger(__name__)


def _eigen_method(n_states: int) -> str:
    return "dense" if n_states <= settings.DENSE_EIGEN_MAX else "power"


def _entropy_production(gen):
    try:
        return entropy_production_rate(gen)
    except IrreversibleTransition as e:
        logger.info("no entropy production rate: %s", e)
        return None


def run_scgf(job: JobConfig, out: RunOutput):
    """mu(lambda) on the lambda grid: table (lambda, mu)"""
    if job.lambda_grid is None:
        raise MissingField("lambda_grid")
    gen = registry.get_generator(job.model)
    index = gen.observable_index(job.observable)
    lambdas = grid_values(job.lambda_grid)
    method = _eigen_method(gen.n_states)
    values = Parallel(n_jobs=settings.THREADS)(
        delayed(scgf_value)(gen, float(lam), index, method) for lam in lambdas
    )
    curve = RateCurve(lambdas, np.array(values), "scgf")
    if not curve.is_convex():
        logger.warning("sampled SCGF is not convex (min second difference %.3e)",
                       curve.second_differences().min())
    out.table("scgf", curve.to_frame("lambda", "mu"))
    mean = mean_rate(gen, index)
    out.record(observable=gen.observable_names[index], n_states=gen.n_states, eigen_method=method,
               mean_rate=mean, fano_factor=fano_factor(gen, index) if abs(mean) > 1e-12 else None,
               entropy_production=_entropy_production(gen), convex=curve.is_convex())


def run_rate_function(job: JobConfig, out: RunOutput):
    """I(q) by Legendre transform of the exact SCGF: table (q, I, lambda_star)"""
    if job.q_grid is None:
        raise MissingField("q_grid")
    gen = registry.get_generator(job.model)
    index = gen.observable_index(job.observable)
    curve = rate_function(gen, grid_values(job.q_grid), index)
    frame = curve.to_frame("q", "I")
    frame["lambda_star"] = [float(tag.split("=", 1)[1]) for tag in curve.meta]
    out.table("rate_function", frame)
    out.record(observable=gen.observable_names[index], mean_rate=mean_rate(gen, index),
               convex=curve.is_convex())
