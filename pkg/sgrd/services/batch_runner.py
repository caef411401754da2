"""
Batch Job Runner

This service runs independent simulation jobs (realizations, pullback
horizons, sweep grid points) on a bounded thread pool and merges the
results by job index.
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed

logger = logging.getLogger(__name__)


@dataclass
class BatchJob:
    job_id: str
    func: Callable[..., Any]
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)


@dataclass
class JobResult:
    index: int
    job_id: str
    status: str
    value: Any = None
    error: Optional[str] = None
    exception: Optional[BaseException] = None


def default_workers() -> int:
    return min(4, os.cpu_count() or 1)


class BatchRunner:
    """Runs jobs concurrently; results come back in submission order"""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max(1, int(max_workers or default_workers()))

    def run(self, jobs: Sequence[BatchJob], raise_errors: bool = True,
            progress_callback: Optional[Callable[[float, List[JobResult]], None]] = None) -> List[JobResult]:
        """
        Execute all jobs and return one JobResult per job, ordered by index.

        Args:
            jobs: jobs to execute
            raise_errors: re-raise the first failed job's exception (by index)
                after every job has finished
            progress_callback: optional callback receiving percent done and the
                results collected so far

        Returns:
            List of JobResult, ``results[i]`` belonging to ``jobs[i]``
        """
        total = len(jobs)
        results: List[Optional[JobResult]] = [None] * total
        if total == 0:
            return []

        logger.debug(f"Starting batch of {total} jobs on {self.max_workers} workers")

        if self.max_workers == 1:
            for i, job in enumerate(jobs):
                results[i] = self._run_single(i, job)
                self._report(i, total, results, progress_callback)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_job = {executor.submit(self._run_single, i, job): i for i, job in enumerate(jobs)}
                for future in as_completed(future_to_job):
                    i = future_to_job[future]
                    results[i] = future.result()
                    self._report(i, total, results, progress_callback)

        failed = [r for r in results if r.status != 'success']
        if failed:
            logger.warning(f"Batch finished with {len(failed)} failed job(s) out of {total}")
            if raise_errors:
                raise failed[0].exception
        return results

    @staticmethod
    def _run_single(index: int, job: BatchJob) -> JobResult:
        try:
            value = job.func(*job.args, **job.kwargs)
            return JobResult(index=index, job_id=job.job_id, status='success', value=value)
        except Exception as e:
            logger.error(f"Failed to process job {job.job_id}: {e}")
            return JobResult(index=index, job_id=job.job_id, status='error', error=str(e), exception=e)

    @staticmethod
    def _report(index, total, results, progress_callback):
        done = sum(r is not None for r in results)
        logger.info(f"Completed job {index + 1}/{total}: {results[index].job_id}")
        if progress_callback:
            progress_callback(done / total * 100, [r for r in results if r is not None])


def run_jobs(jobs: Sequence[BatchJob], workers: Optional[int] = None) -> List[Any]:
    """Run jobs and return their values in order, raising on the first failure."""
    return [r.value for r in BatchRunner(workers).run(jobs, raise_errors=True)]
