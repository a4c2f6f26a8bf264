"""
Request load on real OS threads.

Each executor repeatedly spawns a target thread for the next request and
steps it to completion. Steps go through the process lock, so executors
interleave freely with each other and with a weaver running on another
OS thread.
"""
import itertools
import logging
import threading
import time
from collections import Counter
from typing import Iterable, List, Optional, Sequence, Tuple

from .process import TargetProcess, READY

logger = logging.getLogger("hotmend.targetvm")

Request = Tuple[str, Sequence]


class RequestLoad:
    """
    Usage:
        load = RequestLoad(process, [('serve_request', [1, 2])], executors=4)
        load.start()
        ...
        load.stop()
        print(load.outcomes)
    """

    def __init__(self, process: TargetProcess, requests: Iterable[Request], executors=4,
                 max_requests: Optional[int] = None, max_steps_per_request=100_000):
        self.process = process
        self.requests: List[Request] = list(requests)
        if not self.requests:
            raise ValueError("request load needs at least one request")
        self.executors = executors
        self.max_requests = max_requests
        self.max_steps_per_request = max_steps_per_request
        self.outcomes = Counter()
        self.served = 0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: List[threading.Thread] = []
        self._cycle = itertools.cycle(enumerate(self.requests))

    def _next_request(self):
        with self._lock:
            if self.max_requests is not None and self.served >= self.max_requests:
                return None
            self.served += 1
            return self.served, next(self._cycle)

    def _serve(self, number, entry, args):
        tid = self.process.spawn_thread(entry, args, request=f"req-{number}")
        status = READY
        for step in range(self.max_steps_per_request):
            status = self.process.step(tid)
            if status != READY or self._stop.is_set():
                break
            if step % 64 == 63:
                time.sleep(0)
        self.process.reap(tid)
        return status

    def _executor(self):
        while not self._stop.is_set():
            request = self._next_request()
            if request is None:
                return
            number, (_, (entry, args)) = request
            status = self._serve(number, entry, args)
            with self._lock:
                self.outcomes[status] += 1

    def start(self):
        for index in range(self.executors):
            thread = threading.Thread(target=self._executor, name=f"executor-{index}", daemon=True)
            self._threads.append(thread)
            thread.start()
        logger.debug("started %d executor(s)", self.executors)
        return self

    def stop(self, timeout=10.0):
        self._stop.set()
        self.join(timeout)

    def join(self, timeout=None):
        for thread in self._threads:
            thread.join(timeout)
        self._threads = [t for t in self._threads if t.is_alive()]

    @property
    def running(self):
        return any(t.is_alive() for t in self._threads)

    def yield_to_executors(self, quanta=1):
        time.sleep(0.0005 * quanta)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
        return False
