"""Gradient-domain compositing of target patches into background regions.

The paste rectangle's interior is recomputed so that its 5-point Laplacian
matches the divergence of the patch's gradient field while the rectangle
border keeps the background's values (Dirichlet ring). The symmetric
positive-definite system is solved with plain conjugate gradients; forward
differences for gradients and backward differences for the divergence make
the discrete operators adjoint, so the normal equations are exactly the
5-point stencil.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import LabeledSample, as_gray_image
from .patch_match import MatchConfig, TargetPatch, resolve_min_separation, sliding_match, top_k

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITERS = 10_000


class PoissonConvergenceError(RuntimeError):
    """Conjugate gradients ran out of iterations; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class GuidanceField:
    """Forward-difference gradient components over a paste rectangle."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        if self.gx.shape != self.gy.shape:
            raise ValueError(f"guidance shapes differ: {self.gx.shape} vs {self.gy.shape}")


@dataclass(frozen=True)
class FusionResult:
    """A composited image/mask pair plus paste provenance."""

    image: np.ndarray
    mask: np.ndarray
    provenance: dict = field(compare=False)

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError("fusion result image/mask shape mismatch")


def guidance_field(patch_image: np.ndarray) -> GuidanceField:
    """Forward differences of a patch; the last column/row of gx/gy is zero."""
    img = as_gray_image(patch_image)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return GuidanceField(gx=gx, gy=gy)


def divergence(guidance: GuidanceField) -> np.ndarray:
    """Backward-difference divergence of a guidance field (adjoint pairing)."""
    gx, gy = guidance.gx, guidance.gy
    div_x = np.array(gx, copy=True)
    div_x[:, 1:] = gx[:, 1:] - gx[:, :-1]
    div_y = np.array(gy, copy=True)
    div_y[1:, :] = gy[1:, :] - gy[:-1, :]
    return div_x + div_y


def fusion_energy(values: np.ndarray, guidance: GuidanceField) -> float:
    """Sum of squared deviations between forward differences and guidance."""
    v = np.asarray(values, dtype=np.float64)
    ex = (v[:, 1:] - v[:, :-1]) - guidance.gx[:, :-1]
    ey = (v[1:, :] - v[:-1, :]) - guidance.gy[:-1, :]
    return float((ex * ex).sum() + (ey * ey).sum())


def _apply_dirichlet_operator(x: np.ndarray) -> np.ndarray:
    """Matvec of the SPD 5-point operator (zero outside the interior)."""
    out = 4.0 * x
    out[1:, :] -= x[:-1, :]
    out[:-1, :] -= x[1:, :]
    out[:, 1:] -= x[:, :-1]
    out[:, :-1] -= x[:, 1:]
    return out


def _cg_solve(
    rhs: np.ndarray, boundary: np.ndarray, tolerance: float, max_iters: int
) -> tuple[np.ndarray, int, float]:
    """Solve the interior system; returns (interior grid, iterations, residual)."""
    b = -np.asarray(rhs, dtype=np.float64)
    b = b.copy()
    b[0, :] += boundary[0, 1:-1]
    b[-1, :] += boundary[-1, 1:-1]
    b[:, 0] += boundary[1:-1, 0]
    b[:, -1] += boundary[1:-1, -1]

    rhs_norm = float(np.linalg.norm(rhs))
    target = tolerance * rhs_norm if rhs_norm > 0.0 else tolerance

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float((r * r).sum())
    iterations = 0
    while True:
        if math.sqrt(rs) <= target:
            true_r = b - _apply_dirichlet_operator(x)
            true_rs = float((true_r * true_r).sum())
            if math.sqrt(true_rs) <= target:
                return x, iterations, math.sqrt(true_rs)
            r, p, rs = true_r, true_r.copy(), true_rs
        if iterations >= max_iters:
            residual = math.sqrt(rs)
            raise PoissonConvergenceError(
                f"no convergence after {iterations} iterations "
                f"(residual {residual:.3e}, target {target:.3e})",
                residual=residual,
            )
        Ap = _apply_dirichlet_operator(p)
        alpha = rs / float((p * Ap).sum())
        x += alpha * p
        r -= alpha * Ap
        rs_new = float((r * r).sum())
        p = r + (rs_new / rs) * p
        rs = rs_new
        iterations += 1


def solve_poisson(
    rhs: np.ndarray,
    boundary: np.ndarray,
    tolerance: float,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Solve the 5-point Dirichlet problem on a rectangle.

    Parameters
    ----------
    rhs : ndarray, shape (h-2, w-2)
        Prescribed Laplacian over the interior.
    boundary : ndarray, shape (h, w)
        Rectangle whose border ring supplies the Dirichlet values (interior
        entries are ignored).
    tolerance : float
        Relative residual bound ||lap(u) - rhs|| / ||rhs|| (absolute when
        rhs is all zero).
    max_iters : int
        Iteration budget; exceeding it raises PoissonConvergenceError.

    Returns
    -------
    ndarray, shape (h, w)
        Full rectangle: boundary ring as given, interior solved.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    boundary = np.asarray(boundary, dtype=np.float64)
    if rhs.ndim != 2 or rhs.shape[0] < 1 or rhs.shape[1] < 1:
        raise ValueError(f"rhs must cover a non-empty interior, got shape {rhs.shape}")
    expected = (rhs.shape[0] + 2, rhs.shape[1] + 2)
    if boundary.shape != expected:
        raise ValueError(f"boundary shape {boundary.shape} != rhs interior + ring {expected}")
    if not tolerance > 0.0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    interior, _, _ = _cg_solve(rhs, boundary, tolerance, max_iters)
    full = boundary.copy()
    full[1:-1, 1:-1] = interior
    return full


def seamless_clone(
    background: np.ndarray,
    patch: TargetPatch,
    paste_at: tuple[int, int],
    tolerance: float = DEFAULT_TOLERANCE,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> FusionResult:
    """Composite ``patch`` into ``background`` at ``paste_at`` (x, y).

    The rectangle interior is solved so its Laplacian matches the patch's
    gradient divergence with the background's values on the rectangle
    border; the result is clamped to [0, 255]. Pixels outside the rectangle
    are untouched and the fused mask is the patch mask translated to the
    paste position.
    """
    bg = as_gray_image(background)
    x, y = paste_at
    ph, pw = patch.image.shape
    height, width = bg.shape
    if ph < 3 or pw < 3:
        raise ValueError(f"paste rectangle must be at least 3x3, got {pw}x{ph}")
    if x < 0 or y < 0 or x + pw > width or y + ph > height:
        raise ValueError(
            f"paste rectangle ({x},{y})+{pw}x{ph} out of bounds for {width}x{height}"
        )

    rhs = divergence(guidance_field(patch.image))[1:-1, 1:-1]
    region = bg[y : y + ph, x : x + pw]
    interior, iterations, residual = _cg_solve(rhs, region, tolerance, max_iters)

    fused = bg.copy()
    fused[y + 1 : y + ph - 1, x + 1 : x + pw - 1] = np.clip(interior, 0.0, 255.0)
    mask = np.zeros(bg.shape, dtype=bool)
    mask[y : y + ph, x : x + pw] = patch.mask
    provenance = {
        "patch_id": patch.patch_id,
        "paste_x": int(x),
        "paste_y": int(y),
        "solver_iterations": iterations,
        "final_residual": residual,
    }
    return FusionResult(image=fused, mask=mask, provenance=provenance)


def fuse_dataset(
    aligned: list[LabeledSample],
    patches: list[TargetPatch],
    match_config: MatchConfig,
    seed: int,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[FusionResult]:
    """Fuse patches into backgrounds: one patch per background, top-k sites.

    Patches are assigned round-robin over the backgrounds after a seeded
    shuffle, each background is scanned with sliding_match (its own targets
    and the patch's origin rectangle excluded), and one FusionResult is
    emitted per selected window. Fully deterministic for a fixed seed; a
    background with no admissible window contributes nothing.
    """
    if not aligned:
        raise ValueError("fuse_dataset: empty background set")
    if not patches:
        raise ValueError("fuse_dataset: empty patch set")
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(len(patches))

    results: list[FusionResult] = []
    for index, background in enumerate(aligned):
        patch = patches[int(order[index % len(patches)])]
        config = resolve_min_separation(match_config, patch)
        candidates = sliding_match(
            background.image, background.mask, patch, config, image_id=background.id
        )
        selected = top_k(candidates, config)
        if not selected:
            logger.info(
                "background '%s': no admissible window for patch '%s'",
                background.id,
                patch.patch_id,
            )
            continue
        for rank, cand in enumerate(selected, start=1):
            result = seamless_clone(background.image, patch, (cand.x, cand.y), tolerance)
            result.provenance.update(
                {
                    "background_sample": background.id,
                    "k_rank": rank,
                    "ssim_score": cand.score,
                }
            )
            results.append(result)
    return results
