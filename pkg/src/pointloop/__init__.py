"""Point-cloud instruction data engine, benchmark, and review service."""

__version__ = "0.1.0"

from . import backends, bench, dataset, engine, metrics, pointcloud, prompts, \
    scripted, zeroshot  # noqa: F401
