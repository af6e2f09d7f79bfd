from PyQt6.QtCore import QRunnable, QThreadPool

from .logger import logger


# Worker pool for independent jobs (per-task meta gradients, Monte-Carlo trials, sweep points).
# Results are returned in job order, so the worker count never changes what a caller sees.


# JobRunnable: runs one callable on a pool thread and parks its result or exception by index.
class JobRunnable(QRunnable):
    def __init__(self, index, job, results, errors):
        super().__init__()
        # Python keeps ownership; Qt must not delete the wrapper behind our back
        self.setAutoDelete(False)
        self.index = index
        self.job = job
        self.results = results
        self.errors = errors

    def run(self):
        try:
            self.results[self.index] = self.job()
        except Exception as e:
            logger.error("Worker job %s failed", self.index, exc_info=True)
            self.errors[self.index] = e


def run_jobs(jobs, workers=1):
    """Run zero-argument callables and return their results in order.

    With ``workers <= 1`` jobs run inline on the calling thread. Otherwise they
    run on a private QThreadPool; after every job has finished, the exception
    of the lowest failing job index is re-raised.
    """
    jobs = list(jobs)
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]

    results = [None] * len(jobs)
    errors = {}
    pool = QThreadPool()
    pool.setMaxThreadCount(min(int(workers), len(jobs)))
    runnables = [JobRunnable(index, job, results, errors) for index, job in enumerate(jobs)]
    for runnable in runnables:
        pool.start(runnable)
    pool.waitForDone()

    if errors:
        raise errors[min(errors)]
    return results
