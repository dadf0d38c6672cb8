"""
Ordered thread-pool execution for path blocks and check suites.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

from .exit_monitor import ExitBreaker, ExitBudgetError

logger = logging.getLogger(__name__)


class BlockRunner:
    """
    Thread-pool runner that returns results in submission order.

    numpy releases the GIL inside its kernels, so path blocks overlap well on
    threads. Use as a context manager:

        with BlockRunner(max_workers=4) as runner:
            blocks = runner.run_path_blocks(work, n_blocks)
    """

    def __init__(self, max_workers=None, batch_blocks=8, failure_threshold=0.001,
                 min_sample_size=1000):
        """
        Args:
            max_workers: thread count (None lets the executor decide)
            batch_blocks: blocks per batch between breaker checks
            failure_threshold: non-exit rate that trips the breaker
            min_sample_size: paths observed before the breaker may trip
        """
        self.max_workers = max_workers
        self.batch_blocks = batch_blocks
        self.failure_threshold = failure_threshold
        self.min_sample_size = min_sample_size

        # Runtime state (initialized in __enter__)
        self.executor = None
        self.breaker = None

    def __enter__(self):
        self.executor = ThreadPoolExecutor(max_workers=self.max_workers)
        self.breaker = ExitBreaker(
            failure_threshold=self.failure_threshold,
            min_sample_size=self.min_sample_size,
        )
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.executor:
            self.executor.shutdown(wait=True)
            self.executor = None

    def _require_executor(self):
        if self.executor is None:
            raise RuntimeError("BlockRunner must be used as a context manager")

    def map(self, fn, items):
        """fn over items on the pool, results in input order."""
        self._require_executor()
        return list(self.executor.map(fn, items))

    def run_path_blocks(self, work, n_blocks, total_requested=None):
        """
        Run work(block) for block = 0..n_blocks-1 in batches with breaker checks.

        Each result must expose n_exited and n_stuck.

        Args:
            work: callable block -> result
            n_blocks: number of blocks
            total_requested: paths the blocks hold, for the breaker message

        Returns:
            list: results in block order

        Raises:
            ExitBudgetError: the breaker tripped
        """
        self._require_executor()
        results = []
        for start in range(0, n_blocks, self.batch_blocks):
            batch_end = min(start + self.batch_blocks, n_blocks)
            batch_results = list(self.executor.map(work, range(start, batch_end)))

            for block, result in zip(range(start, batch_end), batch_results):
                self.breaker.record_exits(result.n_exited)
                self.breaker.record_non_exits(result.n_stuck, block)
            results.extend(batch_results)

            if self.breaker.should_trip():
                stats = self.breaker.get_stats(total_requested)
                raise ExitBudgetError(f"MC budget exhausted: {stats['stuck_paths']} of "
                                      f"{stats['total_simulated']} paths did not exit. {stats['message']}")
        return results
