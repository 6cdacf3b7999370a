"""simulate command: Gillespie runs with current and occupation estimates"""
import logging

from cli.core.config import settings
from cli.core.model_registry import registry
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig
from src.exceptions import InsufficientData, MissingField
from src.kmc_simulator import SimulationPlan, current_statistics, occupation_statistics, simulate

logger = logging.getLogger(__name__)


def run_simulate(job: JobConfig, out: RunOutput):
    """Tables (replica, t, Q_left, Q_right) and (site, mean_n, stderr) plus current estimates"""
    if job.t_max is None:
        raise MissingField("t_max")
    model = registry.get_model(job.model)
    plan = SimulationPlan(model, t_max=job.t_max, n_replicas=job.replicas, seed=job.seed,
                          burn_in=job.burn_in, n_batches=job.n_batches)
    record = simulate(plan, n_jobs=settings.THREADS)
    currents, occupation = record.to_frames()
    out.table("currents", currents)
    out.table("occupation", occupation)

    estimates = {}
    for name in record.observable_names:
        try:
            stats = current_statistics(record, name)
        except InsufficientData as e:
            logger.warning("no estimate for %s: %s", name, e)
            continue
        estimates[name] = {"mean": stats.mean, "mean_stderr": stats.mean_stderr,
                           "variance": stats.variance, "variance_stderr": stats.variance_stderr,
                           "method": stats.method, "samples": stats.samples}
    try:
        occ = occupation_statistics(record)
        out.record(occupation_total=float(occ.mean.sum()))
    except InsufficientData as e:
        logger.warning("no occupation estimate: %s", e)
    out.record(kind=record.kind, replicas=record.n_replicas, burn_in=plan.burn_in,
               events=int(record.events.sum()), currents=estimates)
