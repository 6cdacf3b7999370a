"""ldf-current, ldf-density and ring-instability commands"""
import logging

import numpy as np
import pandas as pd

from cli.core.config import settings
from cli.core.model_registry import registry
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig, grid_values
from src.exceptions import DomainViolation, GridMismatch, MissingField
from src.mft import (
    additivity_cumulants,
    additivity_curve,
    density_ldf_ssep,
    equilibrium_density_ldf,
    ring_instability_scan,
    ring_instability_threshold,
    saturation_current,
    steady_profile,
    zrp_density_ldf,
)

logger = logging.getLogger(__name__)


def _reservoirs(job: JobConfig):
    if job.rho is None:
        raise MissingField("rho")
    return float(job.rho[0]), float(job.rho[1])


def run_ldf_current(job: JobConfig, out: RunOutput):
    """Additivity-principle current rate function: table (q, I, branch)"""
    if job.q_grid is None:
        raise MissingField("q_grid")
    model = registry.get_transport(job.model)
    rho1, rho2 = _reservoirs(job)
    curve = additivity_curve(model, rho1, rho2, grid_values(job.q_grid),
                             convex_envelope=job.convex_envelope, n_jobs=settings.THREADS)
    out.table("ldf_current", curve.to_frame("q", "I", "branch"))
    summary = dict(model=model.name, rho=[rho1, rho2], saturation=saturation_current(model, rho1, rho2))
    if rho1 != rho2:
        mean, variance, third = additivity_cumulants(model, rho1, rho2, order=3)
        summary.update(mean_current=mean, variance_rate=variance, third_cumulant_rate=third)
    out.record(**summary)


def _density_profile(job: JobConfig, model, rho1, rho2):
    steady, _ = steady_profile(model, rho1, rho2, job.grid_n)
    if job.profile is not None:
        values = np.asarray(job.profile, dtype=float)
        if values.size != job.grid_n + 1:
            raise GridMismatch(f"profile has {values.size} values, grid_n+1 = {job.grid_n + 1}")
        return steady.x, values
    amplitude = job.amplitude or 0.0
    return steady.x, steady.values + amplitude * np.sin(np.pi * steady.x)


def run_ldf_density(job: JobConfig, out: RunOutput):
    """Density large deviation functional of a profile (explicit or a sine bump on the steady one)"""
    model = registry.get_transport(job.model)
    rho1, rho2 = _reservoirs(job)
    x, values = _density_profile(job, model, rho1, rho2)
    if rho1 == rho2:
        value, kind = equilibrium_density_ldf(model, rho1, values), "equilibrium"
    elif model.name == "ssep":
        value, F = density_ldf_ssep(rho1, rho2, values)
        out.table("F", F.to_frame("F"))
        kind = "ssep_nonlocal"
    elif model.name == "zrp":
        value, kind = zrp_density_ldf(model.params["u"], rho1, rho2, values), "zero_range_local"
    else:
        raise DomainViolation(f"no density functional for {model.name} out of equilibrium")
    out.table("profile", pd.DataFrame({"x": x, "rho": values}))
    out.record(model=model.name, functional=kind, value=value)


def run_ring_instability(job: JobConfig, out: RunOutput):
    """Critical current of the flat ring profile, closed form next to the single-mode scan"""
    if job.rho_bar is None:
        raise MissingField("rho_bar")
    model = registry.get_transport(job.model)
    rows = []
    for rho_bar in job.rho_bar:
        formula = ring_instability_threshold(model, float(rho_bar))
        scan = ring_instability_scan(model, float(rho_bar))
        rows.append({
            "rho_bar": float(rho_bar),
            "stable": formula.stable,
            "q_c": formula.q_c if formula.q_c is not None else np.nan,
            "v_c": formula.v_c if formula.v_c is not None else np.nan,
            "q_c_scan": scan.q_c if scan.q_c is not None else np.nan,
            "q_c_d_form": formula.boxed_q_c if formula.boxed_q_c is not None else np.nan,
        })
        if formula.stable != scan.stable:
            logger.warning("rho_bar=%g: closed form and scan disagree on stability", rho_bar)
    frame = pd.DataFrame(rows)
    out.table("ring_instability", frame)
    out.record(model=model.name, unstable=[r["rho_bar"] for r in rows if not r["stable"]])
