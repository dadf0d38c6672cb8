"""
Input validation utilities shared by the laboratory modules and the CLI.

Every validator returns a tuple (is_valid, error_message) so callers decide
whether a failure is an exception, a usage error or a reported finding.
"""

import math
import numbers
import os


def validate_grid_size(n_points):
    """
    Validate a torus grid resolution.

    Args:
        n_points: number of grid points N per coordinate

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not isinstance(n_points, numbers.Integral) or isinstance(n_points, bool):
        return False, f"Grid size must be an integer, got {n_points!r}"
    if n_points < 2:
        return False, f"Grid size must be at least 2, got {n_points}"
    if n_points & (n_points - 1):
        return False, f"Grid size must be a power of two, got {n_points}"
    return True, None


def validate_product_size(n_steps, n_points, max_entries):
    """
    Validate the size of an N^n product grid against the memory guard.

    Args:
        n_steps: number of coordinates n
        n_points: grid resolution N
        max_entries: largest allowed N^n

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if n_steps < 1:
        return False, f"Number of steps must be positive, got {n_steps}"
    entries = n_points ** n_steps
    if entries > max_entries:
        return False, (f"Product grid {n_points}^{n_steps} = {entries} entries exceeds "
                       f"the memory guard of {max_entries}; lower --grid or --n")
    return True, None


def validate_level_index(k, n_steps, lower=0):
    """
    Validate a filtration index against a martingale's horizon.

    Args:
        k: requested level or difference index
        n_steps: martingale horizon n
        lower: smallest admissible index (0 for levels, 1 for differences)

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not lower <= k <= n_steps:
        return False, f"Index {k} outside {lower}..{n_steps}"
    return True, None


def validate_degree(degree, n_points):
    """
    Validate an analytic polynomial degree for a grid of n_points.

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if degree < 1:
        return False, f"Degree must be at least 1, got {degree}"
    if degree >= n_points // 2:
        return False, f"Degree must be below N/2 = {n_points // 2}, got {degree}"
    return True, None


def validate_nonnegative(value, name):
    """
    Validate a finite nonnegative real parameter.

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not math.isfinite(value) or value < 0:
        return False, f"{name} must be finite and nonnegative, got {value}"
    return True, None


def validate_seed(seed):
    """
    Validate a 64-bit seed.

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not 0 <= seed < 2 ** 64:
        return False, f"Seed must lie in [0, 2^64), got {seed}"
    return True, None


def validate_brownian_params(dt, max_steps, n_paths, block_size):
    """
    Validate Brownian simulation parameters.

    Args:
        dt: time step
        max_steps: step budget per path
        n_paths: number of paths
        block_size: paths per counter-based stream block

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not math.isfinite(dt) or dt <= 0:
        return False, f"Time step must be positive, got {dt}"
    if dt > 0.1:
        return False, f"Time step {dt} is too coarse for the unit disk (max 0.1)"
    if max_steps < 1:
        return False, f"Step budget must be positive, got {max_steps}"
    if n_paths < 1:
        return False, f"Path budget must be positive, got {n_paths}"
    if block_size < 1:
        return False, f"Block size must be positive, got {block_size}"
    return True, None


def validate_input_path(path):
    """
    Validate that a file exists and is readable.

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    if not os.path.isfile(path):
        return False, f"Input file not found: {path}"
    if not os.access(path, os.R_OK):
        return False, f"Input file not readable: {path}"
    return True, None


def validate_output_path(path):
    """
    Validate that a file can be written at path.

    Returns:
        tuple: (is_valid: bool, error_message: str|None)
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        return False, f"Output directory does not exist: {directory}"
    if not os.access(directory, os.W_OK):
        return False, f"Output directory not writable: {directory}"
    return True, None
