"""
Exit-rate breaker for Monte Carlo path budgets.

Tracks how many simulated paths left the unit disk within the step budget and
trips when the share of paths still inside exceeds the allowed rate.
"""

import logging

logger = logging.getLogger(__name__)


class ExitBudgetError(RuntimeError):
    """Raised when too many paths fail to exit within the step budget."""
    pass


class ExitBreaker:
    """
    Breaker over exited / non-exited path counts.

    The breaker is consulted between fixed-size batches of path blocks, so whether
    it trips depends only on the seed and the batch size, never on the number of
    worker threads.
    """

    def __init__(self, failure_threshold=0.001, min_sample_size=1000):
        """
        Args:
            failure_threshold (float): largest allowed non-exit rate (0.0-1.0)
            min_sample_size (int): paths to observe before checking the rate
        """
        self.failure_threshold = failure_threshold
        self.min_sample_size = min_sample_size
        self.exited_paths = 0
        self.stuck_paths = 0
        self.is_open = False

    def record_exits(self, count):
        self.exited_paths += count

    def record_non_exits(self, count, block=None):
        """
        Record paths still inside the disk when the budget ran out.

        Args:
            count (int): number of such paths
            block (int, optional): block index for the log message
        """
        self.stuck_paths += count
        if count and block is not None:
            logger.info(f"Block {block}: {count} paths excluded (no exit)")

    def should_trip(self):
        """
        Returns:
            bool: True once the non-exit rate exceeds the threshold on enough paths
        """
        if self.total_paths < self.min_sample_size:
            return False

        rate = self.non_exit_rate
        should_open = rate > self.failure_threshold
        if should_open and not self.is_open:
            self.is_open = True
            logger.warning(f"Exit breaker triggered: {rate:.3%} of paths did not exit, "
                           f"threshold {self.failure_threshold:.3%}")
        return should_open

    @property
    def total_paths(self):
        return self.exited_paths + self.stuck_paths

    @property
    def non_exit_rate(self):
        total = self.total_paths
        return self.stuck_paths / total if total > 0 else 0.0

    @property
    def exit_rate(self):
        total = self.total_paths
        return self.exited_paths / total if total > 0 else 0.0

    def get_stats(self, total_requested=None):
        """
        Args:
            total_requested (int, optional): paths originally requested

        Returns:
            dict: counts, rates and breaker state
        """
        stats = {
            "exited_paths": self.exited_paths,
            "stuck_paths": self.stuck_paths,
            "total_simulated": self.total_paths,
            "exit_rate": self.exit_rate,
            "non_exit_rate": self.non_exit_rate,
            "breaker_triggered": self.is_open,
            "message": self._generate_message(total_requested),
        }
        if total_requested is not None:
            stats["total_cancelled"] = max(total_requested - self.total_paths, 0)
        return stats

    def _generate_message(self, total_requested):
        if total_requested is None:
            return f"Simulated {self.total_paths} paths"
        if self.is_open:
            return (f"Simulated {self.total_paths} of {total_requested} "
                    f"requested paths (stopped by exit breaker)")
        return f"Simulated {total_requested} paths"

    def reset(self):
        """Clear counts before a retry with a larger budget."""
        self.exited_paths = 0
        self.stuck_paths = 0
        self.is_open = False
