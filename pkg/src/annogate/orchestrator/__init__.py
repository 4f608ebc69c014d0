"""Job orchestration: the end-to-end pipeline, review API, and reports."""

from .config import JobConfig, load_job_config  # noqa: F401
from .job import JobState, load_job_state, run_job  # noqa: F401
from .report import export_report  # noqa: F401
