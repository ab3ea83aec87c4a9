import logging
import threading
import time

from sortedcontainers import SortedList

logger = logging.getLogger(__name__)


class SampleWorker(threading.Thread):
    def __init__(self, task, pending: SortedList, results: dict, errors: dict, lock: threading.Lock):
        super(SampleWorker, self).__init__(daemon=True)
        self.task = task  # callable taking an index
        self.pending = pending  # indices still to be processed
        self.results = results
        self.errors = errors
        self.lock = lock

        self.stop_request = threading.Event()
        self.work = threading.Event()  # to control whether the Worker is supposed to work

    def run(self):
        """
        Takes the lowest pending index and runs the task on it until the pool is empty.

        Results and raised errors are stored under their index, so the outcome does not depend
        on which worker processed which index.
        """
        while not self.stop_request.is_set():
            self.work.wait()
            if self.stop_request.is_set():
                break
            with self.lock:
                if not self.pending or self.errors:
                    self.work.clear()
                    break
                index = self.pending.pop(0)
            try:
                result = self.task(index)
                with self.lock:
                    self.results[index] = result
            except Exception as error:
                logger.debug("index %d failed: %s", index, error)
                with self.lock:
                    self.errors[index] = error

    def join(self, timeout=None):
        self.work.set()
        self.stop_request.set()
        super(SampleWorker, self).join(timeout)


def run_parallel(task, indices, jobs: int = 1) -> list:
    """
    Applies task to every index using `jobs` worker threads.

    :param task: callable index -> result
    :param indices: iterable of integer indices
    :param jobs: number of worker threads, 1 runs in the calling thread
    :return: results ordered by index
    """
    indices = SortedList(indices)
    if jobs <= 1:
        return [task(index) for index in indices]

    results, errors, lock = dict(), dict(), threading.Lock()
    pending = SortedList(indices)
    workers = [SampleWorker(task, pending, results, errors, lock) for _ in range(jobs)]
    for worker in workers:
        worker.start()
        worker.work.set()

    while any([worker.is_alive() for worker in workers]):
        time.sleep(0.01)

    for worker in workers:
        worker.join()

    if errors:
        raise errors[min(errors)]
    return [results[index] for index in indices]
