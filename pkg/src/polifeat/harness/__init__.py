"""Config-driven experiment runs, manifests, reports and the CLI."""
from .config import STAGES, ExperimentConfig
from .pipeline import StageFailure, run
from .report import IntegrityError, build_report, verify, write_report

__all__ = ["STAGES", "ExperimentConfig", "StageFailure", "run", "IntegrityError", "build_report", "verify",
           "write_report"]
