"""steady and correlations commands for lattice and hydrodynamic models"""
import itertools
import logging

import numpy as np
import pandas as pd

from cli.core.config import settings
from cli.core.model_registry import registry
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig
from src.exceptions import MissingField
from src.lattice_models import SsepParams, TransportModel, ssep_correlations_exact, ssep_steady_statistics
from src.markov_core import MarkovGenerator, stationary_distribution
from src.mft import covariance, number_variance, steady_profile

logger = logging.getLogger(__name__)


def _reservoirs(job: JobConfig):
    if job.rho is None:
        raise MissingField("rho")
    return float(job.rho[0]), float(job.rho[1])


def _is_open_chain(model) -> bool:
    return isinstance(model, SsepParams) and model.geometry == "open"


def run_steady(job: JobConfig, out: RunOutput):
    """Exact SSEP profile, stationary law of a generator, or the hydrodynamic steady profile"""
    model = registry.get_model(job.model)
    if _is_open_chain(model) and model.r == 1.0:
        profile, current = ssep_steady_statistics(model)
        out.table("profile", pd.DataFrame({"site": np.arange(1, model.L + 1), "rho": profile}))
        out.record(current=current, rho1=model.rho1, rho2=model.rho2)
    elif isinstance(model, TransportModel):
        rho1, rho2 = _reservoirs(job)
        profile, current = steady_profile(model, rho1, rho2, job.grid_n)
        out.table("profile", profile.to_frame("rho"))
        out.record(current=current, model=model.name)
    else:
        gen = model if isinstance(model, MarkovGenerator) else registry.get_generator(job.model)
        p = stationary_distribution(gen, dense_max=settings.DENSE_STATIONARY_MAX)
        out.table("stationary", pd.DataFrame({"state": np.arange(gen.n_states), "p": p}))
        out.record(n_states=gen.n_states)


def run_correlations(job: JobConfig, out: RunOutput):
    """Connected SSEP correlations (exact) or the hydrodynamic covariance kernel"""
    model = registry.get_model(job.model)
    if _is_open_chain(model):
        indices = job.indices
        if indices:
            value = ssep_correlations_exact(model, indices)
            out.table("correlations", pd.DataFrame({"indices": [" ".join(map(str, indices))],
                                                    "value": [value]}))
            out.record(indices=indices, value=value)
            return
        pairs = list(itertools.combinations(range(1, model.L + 1), 2))
        out.table("correlations", pd.DataFrame({
            "i": [i for i, _ in pairs],
            "j": [j for _, j in pairs],
            "value": [ssep_correlations_exact(model, pair) for pair in pairs],
        }))
        out.record(L=model.L)
        return
    transport = registry.get_transport(job.model)
    rho1, rho2 = _reservoirs(job)
    result = covariance(transport, rho1, rho2, job.grid_n)
    out.table("covariance", result.to_frame())
    out.table("local_weights", pd.DataFrame({"x": result.x, "value": result.local_weights}))
    out.record(model=transport.name, number_variance=number_variance(transport, rho1, rho2, n=job.grid_n),
               max_long_range=float(np.max(np.abs(result.long_range))))
