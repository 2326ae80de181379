from .app import create_app
from .jobs import BadRequest, JobManager, ProgressEvent, UnknownJob, best_effort

__all__ = ["create_app", "JobManager", "ProgressEvent", "BadRequest", "UnknownJob", "best_effort"]
