from .job_config import JobConfig, load_job
from .pipeline_job import PipelineJob, JobResult, run_job

__all__ = ['JobConfig', 'load_job', 'PipelineJob', 'JobResult', 'run_job']
