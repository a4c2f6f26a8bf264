"""
Deterministic interleaving of target threads.

Threads run round robin with a random quantum drawn from a seeded
generator, so a seed reproduces the schedule exactly. Scripted hooks fire
at given clock values (park a thread, unpark it, spawn a request); when
no thread is ready the clock still advances, so timeouts measured in
simulated time expire.
"""
import logging
import random
from typing import Callable, Dict, List

from .process import TargetProcess, READY

logger = logging.getLogger("hotmend.targetvm")


class Scheduler:
    """
    Usage:
        scheduler = Scheduler(process, seed=7)
        scheduler.at_step(37, lambda p: p.unpark(tid))
        scheduler.run_until_idle(max_steps=10_000)
    """

    def __init__(self, process: TargetProcess, seed=0, max_quantum=8):
        if max_quantum < 1:
            raise ValueError("max_quantum must be at least 1")
        self.process = process
        self.random = random.Random(seed)
        self.max_quantum = max_quantum
        self.hooks: Dict[int, List[Callable]] = {}
        self.last_tid = 0

    def at_step(self, clock, callback: Callable):
        """Run callback(process) once the clock reaches `clock`."""
        self.hooks.setdefault(clock, []).append(callback)

    def _fire_hooks(self):
        for clock in sorted(c for c in self.hooks if c <= self.process.clock):
            for callback in self.hooks.pop(clock):
                callback(self.process)

    def _next_thread(self, runnable):
        later = [tid for tid in runnable if tid > self.last_tid]
        return later[0] if later else runnable[0]

    def tick(self):
        """Run one quantum of the next ready thread; returns instructions executed."""
        self._fire_hooks()
        runnable = self.process.runnable()
        if not runnable:
            self.process.advance_clock()
            self._fire_hooks()
            return 0
        tid = self._next_thread(runnable)
        self.last_tid = tid
        executed = 0
        for _ in range(self.random.randint(1, self.max_quantum)):
            status = self.process.step(tid)
            executed += 1
            self._fire_hooks()
            if status != READY:
                break
        return executed

    def yield_to_executors(self, quanta=1):
        """Hand control to target threads between weaver steps."""
        for _ in range(quanta):
            self.tick()

    def run(self, steps):
        start = self.process.clock
        while self.process.clock - start < steps:
            self.tick()

    def run_until(self, predicate: Callable, max_steps=1_000_000):
        start = self.process.clock
        while not predicate(self.process):
            if self.process.clock - start >= max_steps:
                return False
            self.tick()
        return True

    def run_until_idle(self, max_steps=1_000_000):
        """Run until no thread is ready and no hook is pending."""
        return self.run_until(lambda p: not p.runnable() and not self.hooks, max_steps)
