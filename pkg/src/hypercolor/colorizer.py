"""Guide-driven spectral colorization.

Spectra propagate from sparse clues to every pixel through a sparse linear
system: each non-clue pixel is tied to the affinity-weighted average of its
8 neighbors, and clue pixels additionally anchor the measured spectrum with
a doubled diagonal. Affinities follow the guide image, so spectra stop at
the guide's edges. A noisy clue set can be pre-filtered toward its local
neighborhood everywhere the guide shows no edge, and the solved cube is
rescaled per pixel so its response-weighted brightness reproduces the
guide.
"""

from __future__ import annotations

import inspect
import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from ._filters import gaussian_kernel_1d, sobel_gradients, window_count, window_sum
from .core import ClueSet, GuideImage, HyperCube, SpectralResponse
from .errors import SolverError, ValidationError
from .subspace import SpectralBasis, project, unproject

__all__ = [
    "NEIGHBOR_OFFSETS",
    "AffinitySystem",
    "SolveReport",
    "ColorizeResult",
    "canny_edges",
    "edge_confidence",
    "edge_filter",
    "affinity_weights",
    "build_system",
    "solve",
    "luminance_rescale",
    "colorize",
]

# 8-neighbor stencil, center excluded.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)

_CLUE_DIAGONAL = 2.0
_PLAIN_DIAGONAL = 1.0
_VARIANCE_FLOOR_SCALE = 1e-8
_DEGENERATE_DENOMINATOR = 1e-12
_EDGE_BLUR_SIZE = 31
_EDGE_BLUR_SIGMA = np.sqrt(11.0)
_CLUE_WINDOW = 21
_DIRECT_SOLVE_LIMIT = 4096

_ITERATIVE_TOL_KW = (
    "rtol"
    if "rtol" in inspect.signature(sparse_linalg.bicgstab).parameters
    else "tol"
)


def _guide_values(guide) -> np.ndarray:
    if isinstance(guide, GuideImage):
        return guide.values
    values = np.asarray(guide, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError(f"guide must be a 2-d image, got shape {values.shape}")
    return values


# ---------------------------------------------------------------------------
# Edge detection and the edge-aware clue prefilter


def canny_edges(
    guide, low_percentile: float = 70.0, high_percentile: float = 90.0
) -> np.ndarray:
    """Boolean edge map via Canny with percentile hysteresis thresholds.

    The guide is presmoothed with a sigma 1.4 Gaussian, gradients come from
    3x3 Sobel kernels, ridges are thinned by non-maximum suppression along
    the gradient direction, and hysteresis keeps weak edges only when they
    8-connect to a strong one. Thresholds sit at the given percentiles of
    the gradient-magnitude distribution over the whole image.
    """
    if not 0.0 <= low_percentile <= high_percentile <= 100.0:
        raise ValidationError(
            f"percentiles must satisfy 0 <= low <= high <= 100, "
            f"got ({low_percentile}, {high_percentile})"
        )
    values = _guide_values(guide)
    smoothed = ndimage.gaussian_filter(values, sigma=1.4, mode="reflect")
    grad_x, grad_y = sobel_gradients(smoothed)
    magnitude = np.hypot(grad_x, grad_y)

    # rounding wiggle from the presmooth must never count as gradient, so
    # thresholds are floored relative to the guide's dynamic range
    floor = 1e-9 * float(values.max() - values.min())
    if floor <= 0.0:
        return np.zeros(values.shape, dtype=bool)

    thinned = _nonmax_suppress(magnitude, grad_x, grad_y)
    low, high = np.percentile(magnitude, [low_percentile, high_percentile])
    strong = thinned & (magnitude >= max(high, floor))
    weak = thinned & (magnitude >= max(low, floor))
    if not strong.any():
        return strong
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0])


def _nonmax_suppress(magnitude, grad_x, grad_y) -> np.ndarray:
    """Keep pixels whose magnitude tops both neighbors along the gradient."""
    height, width = magnitude.shape
    padded = np.pad(magnitude, 1, mode="constant")
    angle = np.mod(np.degrees(np.arctan2(grad_y, grad_x)), 180.0)

    # neighbor steps (drow, dcol) per quantized gradient direction
    sectors = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros_like(magnitude, dtype=bool)
    center = padded[1 : height + 1, 1 : width + 1]
    for mask, (dr, dc) in sectors:
        ahead = padded[1 + dr : height + 1 + dr, 1 + dc : width + 1 + dc]
        behind = padded[1 - dr : height + 1 - dr, 1 - dc : width + 1 - dc]
        keep |= mask & (center >= ahead) & (center >= behind)
    return keep & (magnitude > 0)


def edge_confidence(
    guide, low_percentile: float = 70.0, high_percentile: float = 90.0
) -> np.ndarray:
    """Soft edge map in [0, 1]: blurred Canny edges, peak renormalized to 1.

    The blur is a unit-sum 31x31 Gaussian window of variance 11. An image
    with no detected edges returns all zeros.
    """
    edges = canny_edges(guide, low_percentile, high_percentile).astype(np.float64)
    kernel = gaussian_kernel_1d(_EDGE_BLUR_SIGMA, _EDGE_BLUR_SIZE // 2)
    blurred = ndimage.correlate1d(edges, kernel, axis=0, mode="constant")
    blurred = ndimage.correlate1d(blurred, kernel, axis=1, mode="constant")
    peak = float(blurred.max())
    if peak > 0:
        blurred = blurred / peak
    return np.clip(blurred, 0.0, 1.0)


def edge_filter(
    clues: ClueSet,
    guide,
    low_percentile: float = 70.0,
    high_percentile: float = 90.0,
) -> ClueSet:
    """Shrink each clue toward its local clue neighborhood away from edges.

    A clue at an edge (confidence 1) passes through untouched; a clue in a
    flat region is replaced by the average of the other clues inside its
    21x21 window, which cancels independent noise. Clues with no neighbors
    in the window always pass through.
    """
    values = _guide_values(guide)
    if values.shape != (clues.height, clues.width):
        raise ValidationError(
            f"guide shape {values.shape} does not match clues "
            f"({clues.height}, {clues.width})"
        )
    confidence = edge_confidence(values, low_percentile, high_percentile)

    dense = np.zeros((clues.height, clues.width, clues.bands), dtype=np.float64)
    dense[clues.mask] = clues.spectra
    window_totals = (
        ndimage.uniform_filter(
            dense, size=(_CLUE_WINDOW, _CLUE_WINDOW, 1), mode="constant", cval=0.0
        )
        * float(_CLUE_WINDOW) ** 2
    )
    neighbor_counts = window_sum(clues.mask.astype(np.float64), _CLUE_WINDOW)

    own = clues.spectra
    others_sum = window_totals[clues.mask] - own
    others_count = np.rint(neighbor_counts[clues.mask]) - 1.0
    zeta = confidence[clues.mask][:, None]
    has_neighbors = others_count > 0
    local_mean = np.where(
        has_neighbors[:, None], others_sum / np.maximum(others_count, 1.0)[:, None], own
    )
    filtered = np.where(
        has_neighbors[:, None], zeta * own + (1.0 - zeta) * local_mean, own
    )
    return ClueSet(clues.height, clues.width, clues.wavelengths, clues.mask, filtered)


# ---------------------------------------------------------------------------
# Affinity system assembly


def affinity_weights(guide) -> np.ndarray:
    """Normalized neighbor affinities, shape (8, height, width).

    Plane k holds the weight toward NEIGHBOR_OFFSETS[k]; out-of-bounds
    neighbors weigh zero and each pixel's valid weights sum to one. The
    similarity scale is the pixel's own 3x3 patch variance, floored at
    1e-8 of the squared guide dynamic range, which makes the weights
    invariant under affine rescaling of the guide.
    """
    values = _guide_values(guide)
    height, width = values.shape
    patch_sum = window_sum(values, 3)
    patch_sq = window_sum(values * values, 3)
    counts = window_count(values.shape, 3)
    mean = patch_sum / counts
    variance = np.maximum(patch_sq / counts - mean * mean, 0.0)
    value_range = float(values.max() - values.min())
    if value_range > 0:
        variance = np.maximum(variance, _VARIANCE_FLOOR_SCALE * value_range**2)
    else:
        variance = np.ones_like(variance)

    weights = np.zeros((len(NEIGHBOR_OFFSETS), height, width), dtype=np.float64)
    for plane, (drow, dcol) in enumerate(NEIGHBOR_OFFSETS):
        center = _shift_slices(height, width, drow, dcol, invert=False)
        neighbor = _shift_slices(height, width, drow, dcol, invert=True)
        diff = values[center] - values[neighbor]
        weights[plane][center] = np.exp(-(diff * diff) / (2.0 * variance[center]))
    totals = weights.sum(axis=0)
    return weights / totals


def _shift_slices(height, width, drow, dcol, invert):
    """Slices selecting centers with a valid (drow, dcol) neighbor, or the
    neighbors themselves when ``invert``."""
    if invert:
        drow, dcol = -drow, -dcol
    rows = slice(max(0, -drow), height - max(0, drow))
    cols = slice(max(0, -dcol), width - max(0, dcol))
    if invert:
        return rows, cols
    return rows, cols


@dataclass
class AffinitySystem:
    """Sparse propagation system with its right-hand sides.

    ``matrix`` is pixel-count square: diagonal 2 at clue pixels and 1
    elsewhere, off-diagonals the negated normalized affinities (each row's
    off-diagonal entries sum to -1). ``rhs`` is (pixel count, channels),
    nonzero only on clue rows.
    """

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    clue_mask: np.ndarray
    shape: tuple[int, int]

    @property
    def channels(self) -> int:
        return self.rhs.shape[1]


def build_system(guide, clues: ClueSet) -> AffinitySystem:
    """Assemble the propagation system for a guide and a clue set.

    The clue set may hold raw spectra or basis coefficients; channels are
    solved against the same matrix either way.
    """
    values = _guide_values(guide)
    height, width = values.shape
    if (clues.height, clues.width) != (height, width):
        raise ValidationError(
            f"clues grid ({clues.height}, {clues.width}) does not match "
            f"guide {values.shape}"
        )
    if clues.count < 1:
        raise ValidationError("colorization needs at least one clue")

    weights = affinity_weights(values)
    total = height * width
    index = np.arange(total).reshape(height, width)

    row_chunks = []
    col_chunks = []
    val_chunks = []
    for plane, (drow, dcol) in enumerate(NEIGHBOR_OFFSETS):
        center_rows = slice(max(0, -drow), height - max(0, drow))
        center_cols = slice(max(0, -dcol), width - max(0, dcol))
        neighbor_rows = slice(max(0, drow), height - max(0, -drow))
        neighbor_cols = slice(max(0, dcol), width - max(0, -dcol))
        row_chunks.append(index[center_rows, center_cols].ravel())
        col_chunks.append(index[neighbor_rows, neighbor_cols].ravel())
        val_chunks.append(-weights[plane][center_rows, center_cols].ravel())

    diagonal = np.full(total, _PLAIN_DIAGONAL)
    diagonal[clues.mask.ravel()] = _CLUE_DIAGONAL
    row_chunks.append(np.arange(total))
    col_chunks.append(np.arange(total))
    val_chunks.append(diagonal)

    matrix = sparse.coo_matrix(
        (
            np.concatenate(val_chunks),
            (np.concatenate(row_chunks), np.concatenate(col_chunks)),
        ),
        shape=(total, total),
    ).tocsr()

    rhs = np.zeros((total, clues.bands), dtype=np.float64)
    rhs[np.flatnonzero(clues.mask.ravel())] = clues.spectra
    return AffinitySystem(matrix, rhs, clues.mask.copy(), (height, width))


# ---------------------------------------------------------------------------
# Solving


@dataclass
class SolveReport:
    """Per-channel convergence record."""

    method: str
    residuals: tuple[float, ...]
    iterations: tuple[int, ...]


def solve(
    system: AffinitySystem,
    method: str = "auto",
    tol: float = 1e-7,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, SolveReport]:
    """Solve every channel of the system against its shared matrix.

    Parameters
    ----------
    system : AffinitySystem
    method : str
        "iterative" (BiCGStab with a Jacobi preconditioner), "direct"
        (sparse LU), or "auto", which picks direct for instances up to
        4096 pixels.
    tol : float
        Relative residual each channel must reach.
    max_iter : int
        Iteration cap for the iterative path.

    Returns
    -------
    (solution, report)
        ``solution`` is (pixel count, channels); the report carries the
        verified relative residual and iteration count per channel.

    Raises
    ------
    SolverError
        When a channel cannot reach ``tol``; carries the achieved residual.
    """
    if method not in ("auto", "direct", "iterative"):
        raise ValidationError(f"unknown solver method {method!r}")
    matrix = system.matrix
    total = matrix.shape[0]
    if method == "auto":
        method = "direct" if total <= _DIRECT_SOLVE_LIMIT else "iterative"

    rhs = system.rhs
    solution = np.zeros_like(rhs)
    residuals = []
    iterations = []

    if method == "direct":
        factor = sparse_linalg.splu(matrix.tocsc())
        for channel in range(rhs.shape[1]):
            b = rhs[:, channel]
            norm_b = np.linalg.norm(b)
            if norm_b == 0:
                residuals.append(0.0)
                iterations.append(0)
                continue
            x = factor.solve(b)
            residual = float(np.linalg.norm(matrix @ x - b) / norm_b)
            if not np.isfinite(residual) or residual > tol:
                raise SolverError(
                    f"direct solve left relative residual {residual:.3e} "
                    f"above {tol:.1e} on channel {channel}",
                    residual=residual,
                )
            solution[:, channel] = x
            residuals.append(residual)
            iterations.append(0)
        return solution, SolveReport("direct", tuple(residuals), tuple(iterations))

    preconditioner = sparse.diags(1.0 / matrix.diagonal())
    for channel in range(rhs.shape[1]):
        b = rhs[:, channel]
        norm_b = np.linalg.norm(b)
        if norm_b == 0:
            residuals.append(0.0)
            iterations.append(0)
            continue
        count = {"n": 0}

        def _tick(_xk):
            count["n"] += 1

        x, info = sparse_linalg.bicgstab(
            matrix,
            b,
            M=preconditioner,
            maxiter=max_iter,
            callback=_tick,
            atol=0.0,
            **{_ITERATIVE_TOL_KW: tol},
        )
        residual = float(np.linalg.norm(matrix @ x - b) / norm_b)
        if info != 0 or not np.isfinite(residual) or residual > tol:
            raise SolverError(
                f"BiCGStab stopped at relative residual {residual:.3e} "
                f"(target {tol:.1e}) after {count['n']} iterations "
                f"on channel {channel}",
                residual=residual,
            )
        solution[:, channel] = x
        residuals.append(residual)
        iterations.append(count["n"])
    return solution, SolveReport("iterative", tuple(residuals), tuple(iterations))


# ---------------------------------------------------------------------------
# Luminance rescale


def _flat_response(bands: int) -> np.ndarray:
    return np.full(bands, 1.0 / bands)


def _response_weights(response, bands: int, what: str) -> np.ndarray:
    if response is None:
        return _flat_response(bands)
    if isinstance(response, SpectralResponse):
        weights = response.weights
    else:
        weights = np.asarray(response, dtype=np.float64)
        total = weights.sum()
        if weights.ndim != 1 or np.any(weights < 0) or total <= 0:
            raise ValidationError(f"{what} must be nonnegative with positive sum")
        weights = weights / total
    if weights.size != bands:
        raise ValidationError(
            f"{what} covers {weights.size} bands, reconstruction has {bands}"
        )
    return weights


def luminance_rescale(
    recon,
    guide,
    response_guide=None,
    response_recon=None,
    alpha="auto",
    per_image: bool = False,
):
    """Rescale reconstructed spectra so brightness follows the guide.

    Every pixel's spectrum is multiplied by alpha * guide / denominator,
    where the denominator is the absolute spectrum weighted by the ratio
    of the guide response to the reconstruction response. Responses
    default to flat. With ``alpha="auto"`` the scale is chosen so any cube
    already consistent with its guide is a fixed point (the reciprocal of
    the reconstruction response on the guide response's support when that
    is constant, otherwise a global least-squares calibration). Pixels
    whose denominator falls below 1e-12 are left unscaled and flagged.

    Returns ``(rescaled, degenerate_mask)``; the first mirrors the input
    type (HyperCube in, HyperCube out), the mask marks flagged pixels.
    ``per_image=True`` switches to a whole-image denominator per band
    instead of the per-pixel spectrum norm (comparison variant; degenerate
    bands are then left unscaled and no pixel is flagged).
    """
    is_cube = isinstance(recon, HyperCube)
    data = recon.data if is_cube else np.asarray(recon, dtype=np.float64)
    if data.ndim != 3:
        raise ValidationError(f"reconstruction must be 3-d, got shape {data.shape}")
    values = _guide_values(guide)
    if values.shape != data.shape[:2]:
        raise ValidationError(
            f"guide shape {values.shape} does not match reconstruction {data.shape[:2]}"
        )
    bands = data.shape[2]
    guide_weights = _response_weights(response_guide, bands, "guide response")
    recon_weights = _response_weights(response_recon, bands, "reconstruction response")

    support = guide_weights > 0
    if np.any(support & (recon_weights <= 0)):
        raise ValidationError(
            "reconstruction response vanishes inside the guide response support"
        )
    ratio = np.zeros(bands)
    ratio[support] = guide_weights[support] / recon_weights[support]

    magnitudes = np.abs(data)
    if per_image:
        # whole-image reading: one denominator per band
        denominator_band = (magnitudes * ratio).sum(axis=(0, 1))
        scale_alpha = _resolve_alpha(alpha, guide_weights, recon_weights, None, None)
        usable = denominator_band >= _DEGENERATE_DENOMINATOR
        scaled = data.copy()
        scaled[:, :, usable] = (
            scale_alpha
            * values[:, :, None]
            * data[:, :, usable]
            / denominator_band[usable]
        )
        degenerate = np.zeros(values.shape, dtype=bool)
    else:
        denominator = magnitudes @ ratio
        scale_alpha = _resolve_alpha(
            alpha, guide_weights, recon_weights, denominator, values
        )
        degenerate = denominator < _DEGENERATE_DENOMINATOR
        safe = np.where(degenerate, 1.0, denominator)
        scaled = np.where(
            degenerate[:, :, None],
            data,
            scale_alpha * values[:, :, None] * data / safe[:, :, None],
        )
    if is_cube:
        return HyperCube(scaled, recon.wavelengths), degenerate
    return scaled, degenerate


def _resolve_alpha(alpha, guide_weights, recon_weights, denominator, guide_values):
    if alpha != "auto":
        value = float(alpha)
        if not np.isfinite(value) or value <= 0:
            raise ValidationError(f"alpha must be positive, got {alpha}")
        return value
    support = guide_weights > 0
    on_support = recon_weights[support]
    spread = float(on_support.max() - on_support.min())
    if spread <= 1e-9 * float(on_support.max()):
        return 1.0 / float(on_support[0])
    # non-constant reconstruction response: no exact fixed point exists,
    # fall back to the least-squares scale tying denominator to guide
    if denominator is None or guide_values is None:
        raise ValidationError(
            'alpha="auto" with a non-constant reconstruction response is only '
            "defined for the per-pixel denominator"
        )
    weight = float(np.dot(guide_values.ravel(), guide_values.ravel()))
    if weight <= 0:
        return 1.0
    return float(np.dot(denominator.ravel(), guide_values.ravel()) / weight)


# ---------------------------------------------------------------------------
# Full pipeline


@dataclass
class ColorizeResult:
    """Reconstruction plus its solver and rescale diagnostics."""

    cube: HyperCube
    residuals: tuple[float, ...]
    iterations: tuple[int, ...]
    solver_method: str
    dimension: int | None
    degenerate_pixels: int
    wall_ms: float


def colorize(
    guide,
    clues: ClueSet,
    basis: SpectralBasis | None = None,
    dim: int | None = None,
    *,
    apply_edge_filter: bool = True,
    response_guide=None,
    response_recon=None,
    rescale_alpha="auto",
    method: str = "auto",
    tol: float = 1e-7,
    max_iter: int = 10_000,
    canny_low: float = 70.0,
    canny_high: float = 90.0,
) -> ColorizeResult:
    """Reconstruct a dense cube from a guide image and sparse clues.

    Parameters
    ----------
    guide : GuideImage or 2-d array
        Grayscale scene the affinities and the brightness rescale follow.
    clues : ClueSet
        Sparse (possibly noisy) spectra.
    basis : SpectralBasis, optional
        When given, clues are projected into its leading ``dim``
        directions, channels are solved there, and the result is mapped
        back to spectra.
    dim : int, optional
        Number of basis directions to keep; requires ``basis``.
    apply_edge_filter : bool
        Pre-filter clues toward their off-edge neighborhoods first.
    response_guide, response_recon : SpectralResponse or array, optional
        Responses used by the brightness rescale; default flat.
    rescale_alpha : float or "auto"
        Scale of the brightness rescale.
    method, tol, max_iter : solver controls, see :func:`solve`.
    canny_low, canny_high : float
        Percentile hysteresis thresholds for the edge detector.

    Returns
    -------
    ColorizeResult
        The clamped nonnegative cube plus solver diagnostics.
    """
    start = time.perf_counter()
    values = _guide_values(guide)
    if dim is not None and basis is None:
        raise ValidationError("dim was given without a basis")
    working = (
        edge_filter(clues, values, canny_low, canny_high)
        if apply_edge_filter
        else clues
    )
    if basis is not None:
        working = project(working, basis, dim)
    system = build_system(values, working)
    solution, report = solve(system, method=method, tol=tol, max_iter=max_iter)
    if basis is not None:
        spectra = unproject(solution, basis)
    else:
        spectra = solution
    recon = spectra.reshape(clues.height, clues.width, clues.bands)
    scaled, degenerate = luminance_rescale(
        recon,
        values,
        response_guide=response_guide,
        response_recon=response_recon,
        alpha=rescale_alpha,
    )
    cube = HyperCube(np.maximum(scaled, 0.0), clues.wavelengths)
    wall_ms = (time.perf_counter() - start) * 1e3
    return ColorizeResult(
        cube=cube,
        residuals=report.residuals,
        iterations=report.iterations,
        solver_method=report.method,
        dimension=dim if basis is not None else None,
        degenerate_pixels=int(degenerate.sum()),
        wall_ms=wall_ms,
    )
