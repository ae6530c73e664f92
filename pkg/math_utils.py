"""Various numerical utilities shared by the series, model and statistics modules"""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from errors import NumericalError


def add_months(year: int, month: int, count: int) -> tuple[int, int]:
    """Move a calendar month forwards (or backwards) by a number of months.

    Args:
        year (int): Calendar year
        month (int): Calendar month, 1-12
        count (int): Number of months to move by

    Returns:
        tuple[int, int]: The resulting (year, month)
    """
    index = year * 12 + (month - 1) + count
    return index // 12, index % 12 + 1


def backshift_polynomial(coefficients: ArrayLike, step: int = 1) -> NDArray:
    """Generate the coefficients of 1 - c_1 B^step - c_2 B^(2 step) - ...

    Args:
        coefficients (ArrayLike): The lag coefficients c_1, c_2, ...
        step (int, optional): Spacing between lags, the seasonal period for seasonal polynomials. Defaults to 1.

    Returns:
        NDArray: Polynomial coefficients in increasing powers of B, starting at B^0 = 1
    """
    coefficients = np.asarray(coefficients, dtype=np.float64)
    poly = np.zeros(len(coefficients) * step + 1)
    poly[0] = 1.0
    poly[step::step] = -coefficients
    return poly


def difference_polynomial(d: int, D: int, s: int) -> NDArray:
    """Generate the coefficients of (1 - B)^d (1 - B^s)^D.

    Args:
        d (int): Ordinary differencing order
        D (int): Seasonal differencing order
        s (int): Seasonal period

    Returns:
        NDArray: Polynomial coefficients in increasing powers of B
    """
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, backshift_polynomial([1.0]))
    for _ in range(D):
        poly = np.convolve(poly, backshift_polynomial([1.0], step=s))
    return poly


def moving_block_indices(
    n: int, block_length: int, rng: np.random.Generator
) -> NDArray:
    """Draw one moving-block bootstrap resample of the indices 0..n-1.

    Args:
        n (int): Length of the original sequence
        block_length (int): Length of each block of consecutive indices
        rng (np.random.Generator): Random stream used for the block starts

    Returns:
        NDArray: n indices built from ceil(n / block_length) blocks, truncated to n
    """
    n_blocks = -(-n // block_length)
    starts = rng.integers(0, n - block_length + 1, size=n_blocks)
    indices = (starts[:, None] + np.arange(block_length)[None, :]).ravel()
    return indices[:n]


def weighted_least_squares(
    design: NDArray, target: NDArray, weights: NDArray, ridge: float = 1e-8
) -> NDArray:
    """Solve a weighted least squares problem through the normal equations.

    A fixed ridge jitter is added to the diagonal to keep the system well conditioned.

    Args:
        design (NDArray): n x k design matrix (include a column of ones for an intercept)
        target (NDArray): n responses
        weights (NDArray): n non-negative observation weights
        ridge (float, optional): Diagonal jitter. Defaults to 1e-8.

    Raises:
        NumericalError: If the system is singular even after the jitter.

    Returns:
        NDArray: k fitted coefficients
    """
    weighted = design * weights[:, None]
    gram = design.T @ weighted + ridge * np.identity(design.shape[1])
    moment = weighted.T @ target
    try:
        solution = np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"(E) weighted least squares is singular: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise NumericalError("(E) weighted least squares produced non-finite coefficients")
    return solution


def format_sig(value: float) -> str:
    """Format a number with 10 significant digits, the precision used in figures."""
    return f"{float(value):.10g}"
