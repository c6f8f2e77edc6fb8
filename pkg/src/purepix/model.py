"""Core data model: pixel/endmember/abundance matrices, synthetic scene
generation, affine subspace fitting, and matrix file I/O.

The linear mixing convention throughout is ``X = A @ S + V`` with pixels in
columns: ``X`` is bands x pixels, ``A`` is bands x endmembers, ``S`` is
endmembers x pixels with every column on the unit simplex, and ``V`` is
additive noise. All pixel and endmember indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Array = np.ndarray

SIMPLEX_TOL = 1e-12
MODEL_TOL = 1e-10


def _as_matrix(values, name: str) -> Array:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def pixel_data(pixels) -> Array:
    """Accept a PixelMatrix or a raw bands x pixels array; return the array."""
    if isinstance(pixels, PixelMatrix):
        return pixels.data
    return _as_matrix(pixels, "pixels")


@dataclass(frozen=True)
class PixelMatrix:
    """Measured data cube flattened to bands x pixels; the self-dictionary."""

    data: Array

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "PixelMatrix.data"))

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def pixel_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EndmemberMatrix:
    """Signature matrix, one spectral column per material."""

    data: Array

    def __post_init__(self):
        arr = _as_matrix(self.data, "EndmemberMatrix.data")
        m, n = arr.shape
        if n > m:
            raise ValueError(f"endmember count {n} exceeds band count {m}")
        svals = np.linalg.svd(arr, compute_uv=False)
        if svals[-1] <= 1e-13 * svals[0]:
            raise ValueError("endmember columns are linearly dependent")
        object.__setattr__(self, "data", arr)

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def endmember_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AbundanceMatrix:
    """Fractional abundances, endmembers x pixels, columns on the unit simplex."""

    data: Array

    def __post_init__(self):
        arr = _as_matrix(self.data, "AbundanceMatrix.data")
        if np.any(arr < -SIMPLEX_TOL):
            raise ValueError("abundances must be non-negative")
        sums = arr.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"abundance columns must sum to one (max deviation {worst:.3e})")
        object.__setattr__(self, "data", arr)

    @property
    def endmember_count(self) -> int:
        return self.data.shape[0]

    @property
    def pixel_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class IndexSet:
    """Ordered set of distinct pixel indices; order records selection sequence."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("indices must be non-negative")
        if len(set(idx)) != len(idx):
            raise ValueError("indices must be distinct")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i) -> bool:
        return int(i) in self.indices

    def as_array(self) -> Array:
        return np.asarray(self.indices, dtype=np.intp)


@dataclass(frozen=True)
class AffineFit:
    """Least-squares affine set fit: mean point plus an orthonormal basis."""

    mean: Array
    basis: Array
    dim: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        basis = _as_matrix(self.basis, "AffineFit.basis")
        if basis.shape[0] != mean.shape[0]:
            raise ValueError("mean length must match basis row count")
        if basis.shape[1] != self.dim:
            raise ValueError("basis column count must equal dim")
        gram = basis.T @ basis
        if np.abs(gram - np.eye(self.dim)).max() > MODEL_TOL:
            raise ValueError("basis columns must be orthonormal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)


@dataclass(frozen=True)
class MixingInstance:
    """Ground-truth bundle for synthetic experiments.

    ``pixels = endmembers @ abundances + noise`` holds entrywise to 1e-10,
    ``noise_bound_true`` is the exact maximum noise column norm, and when
    ``purity == 1`` each endmember has at least one index in
    ``pure_pixel_set`` whose abundance column is exactly a unit vector.
    """

    pixels: PixelMatrix
    endmembers: EndmemberMatrix
    abundances: AbundanceMatrix
    noise: Array
    pure_pixel_set: IndexSet
    noise_bound_true: float
    snr_db: float
    purity: float = 1.0

    def __post_init__(self):
        X = self.pixels.data
        A = self.endmembers.data
        S = self.abundances.data
        V = np.asarray(self.noise, dtype=np.float64)
        if V.shape != X.shape:
            raise ValueError("noise shape must match pixel shape")
        if A.shape[0] != X.shape[0] or S.shape[1] != X.shape[1] or A.shape[1] != S.shape[0]:
            raise ValueError("inconsistent pixel/endmember/abundance shapes")
        if np.abs(X - (A @ S + V)).max() > MODEL_TOL:
            raise ValueError("pixels != endmembers @ abundances + noise")
        bound = float(np.linalg.norm(V, axis=0).max())
        if not math.isclose(bound, self.noise_bound_true, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("noise_bound_true must equal the max noise column norm")
        if max(self.pure_pixel_set.indices, default=-1) >= X.shape[1]:
            raise ValueError("pure pixel index out of range")
        if self.purity >= 1.0:
            covered = set()
            for n in self.pure_pixel_set:
                col = S[:, n]
                k = int(np.argmax(col))
                if col[k] == 1.0 and np.count_nonzero(col) == 1:
                    covered.add(k)
            if covered != set(range(A.shape[1])):
                raise ValueError("pure_pixel_set does not cover every endmember")
        object.__setattr__(self, "noise", V)

    @property
    def band_count(self) -> int:
        return self.pixels.band_count

    @property
    def pixel_count(self) -> int:
        return self.pixels.pixel_count

    @property
    def endmember_count(self) -> int:
        return self.endmembers.endmember_count


def pure_pixel_labels(instance: MixingInstance) -> tuple[int, ...]:
    """Endmember index that each pure_pixel_set member represents."""
    S = instance.abundances.data
    return tuple(int(np.argmax(S[:, n])) for n in instance.pure_pixel_set)


# ---------------------------------------------------------------------------
# Synthetic scene generation
# ---------------------------------------------------------------------------


def _spectra_draw(n_bands: int, n_columns: int, rng: np.random.Generator) -> Array:
    grid = np.linspace(0.0, 1.0, n_bands)
    cols = np.empty((n_bands, n_columns))
    for j in range(n_columns):
        curve = np.full(n_bands, rng.uniform(0.2, 0.6))
        # One distinctive narrow feature per column, stratified across the
        # spectrum so different materials keep distinguishable signatures.
        center = (j + rng.uniform(0.2, 0.8)) / n_columns
        width = rng.uniform(0.015, 0.05)
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        curve = curve + sign * rng.uniform(0.25, 0.45) * np.exp(-0.5 * ((grid - center) / width) ** 2)
        for _ in range(int(rng.integers(3, 7))):
            c2 = rng.uniform(0.0, 1.0)
            w2 = rng.uniform(0.02, 0.15)
            a2 = rng.uniform(-0.3, 0.4)
            curve = curve + a2 * np.exp(-0.5 * ((grid - c2) / w2) ** 2)
        curve = curve + 0.01 * rng.standard_normal(n_bands)
        # Distinct albedo per material: a descending brightness ladder keeps
        # column norms separated, as real libraries mixing bright and dark
        # materials are.
        cols[:, j] = np.clip(0.87**j * curve, 0.01, 1.0)
    return cols


def random_spectra(
    n_bands: int,
    n_columns: int,
    rng: np.random.Generator,
    min_sigma: float | None = None,
    max_draws: int = 200,
) -> Array:
    """Reflectance-like random signatures: baseline, a stratified narrow
    feature per column, broader shared-range bumps, and light measurement
    texture, clipped to (0, 1].

    Draws are redone (seeded, deterministic) until the smallest singular
    value clears ``min_sigma``; the best draw is kept if the floor is not
    reached within ``max_draws``. The default floor keeps matrices well
    conditioned relative to the band count without starving large column
    counts.
    """
    if min_sigma is None:
        min_sigma = 0.05 * math.sqrt(n_bands) * min(1.0, 5.0 / n_columns)
    best = None
    best_sigma = -1.0
    for _ in range(max(1, max_draws)):
        cols = _spectra_draw(n_bands, n_columns, rng)
        sigma = float(np.linalg.svd(cols, compute_uv=False)[-1])
        if sigma > best_sigma:
            best, best_sigma = cols, sigma
        if best_sigma >= min_sigma:
            break
    return best


def synthetic_library(n_bands: int = 224, n_columns: int = 21, seed: int = 0) -> Array:
    """A seeded stand-in for a mineral spectral library (bands x signatures)."""
    return random_spectra(n_bands, n_columns, np.random.default_rng(seed), max_draws=20)


def snr_to_sigma(signal, snr_db: float) -> float:
    """Noise standard deviation that realizes the target SNR on a noiseless
    signal, with SNR = sum_n ||A s[n]||^2 / (M L sigma^2)."""
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite; pass no noise instead")
    Z = pixel_data(signal)
    energy = float(np.sum(Z * Z))
    if energy == 0.0:
        raise ValueError("signal is identically zero")
    m, l = Z.shape
    return math.sqrt(energy / (m * l * 10.0 ** (snr_db / 10.0)))


def _dirichlet_columns(rng: np.random.Generator, n: int, count: int) -> Array:
    # Uniform Dirichlet via normalized unit-exponential draws.
    draws = rng.exponential(size=(n, count))
    return draws / draws.sum(axis=0)


_CAP_MARGIN = 0.35


def _interior_cap(rho: float, n: int) -> float:
    # Non-planted pixels stay strictly inside the purity level so the
    # planted level-attaining pixels are the unambiguous extreme points
    # per endmember (exact ties would make the nearest-pure reference a
    # coin flip between planted and capped pixels).
    return rho - _CAP_MARGIN * (rho - 1.0 / n)


def _cap_max_component(S: Array, cap: float) -> None:
    # Shrink columns toward the barycenter so no component exceeds the cap.
    n = S.shape[0]
    mx = S.max(axis=0)
    over = mx > cap
    if np.any(over):
        t = (cap - 1.0 / n) / (mx[over] - 1.0 / n)
        S[:, over] = t * S[:, over] + (1.0 - t) / n


def _plant_level_column(A: Array, k: int, rho: float, cap: float, rng: np.random.Generator) -> Array:
    """Abundance column with component k exactly at the purity level, built
    so it is strictly the nearest pixel to endmember k.

    Every capped pixel sits at l2 distance at least (1 - cap) * D_k from
    endmember k, where D_k is the distance from a_k to the hull of the
    other endmembers; drawing the planted minor direction u until
    (1 - rho) ||A(u - e_k)|| clears that floor makes the planted pixel the
    argmin of the nearest-pure scan by construction. A deterministic blend
    toward the hull minimizer bails out if rejection runs long.
    """
    from .simplexls import solve_simplex_ls  # deferred: simplexls imports model

    n = A.shape[1]
    others = [j for j in range(n) if j != k]
    nearest = solve_simplex_ls(A[:, k], A[:, others])
    d_k = nearest.residual_norm
    target = 0.95 * (1.0 - cap) * d_k
    u = None
    for _ in range(200):
        cand = rng.exponential(size=n - 1)
        cand /= cand.sum()
        if (1.0 - rho) * cand.max() > rho:
            continue  # would overshoot the level on another component
        if (1.0 - rho) * np.linalg.norm(A[:, others] @ cand - A[:, k]) <= target:
            u = cand
            break
    if u is None:
        # Blend the last draw toward the hull minimizer until it qualifies.
        w = nearest.coefficients
        for beta in np.linspace(0.1, 1.0, 10):
            cand_b = (1.0 - beta) * cand + beta * w
            if (1.0 - rho) * np.linalg.norm(A[:, others] @ cand_b - A[:, k]) <= target:
                u = cand_b
                break
        if u is None:
            u = w
    if (1.0 - rho) * u.max() > rho:
        # Pull toward the uniform minor direction just enough to keep every
        # component at or below the level (always reachable for rho > 1/n).
        uniform = np.full(n - 1, 1.0 / (n - 1))
        t_blend = (rho / (1.0 - rho) - 1.0 / (n - 1)) / (u.max() - 1.0 / (n - 1))
        u = t_blend * u + (1.0 - t_blend) * uniform
    col = np.empty(n)
    col[k] = rho
    col[others] = (1.0 - rho) * u
    return col


def generate_synthetic(
    n_endmembers: int,
    n_pixels: int,
    *,
    endmember_source="random",
    n_bands: int | None = None,
    snr_db: float = math.inf,
    purity: float = 1.0,
    pure_repeats: int = 1,
    seed: int = 0,
) -> MixingInstance:
    """Generate a seeded synthetic mixing scene.

    Abundances are uniform-Dirichlet draws. With ``purity == 1``,
    ``pure_repeats`` exact pure pixels per endmember overwrite columns at
    seeded random positions. With ``purity < 1`` no pure pixel exists:
    columns are shrunk toward the barycenter so no component exceeds
    ``purity``, and one planted column per endmember attains the level with
    equality. Gaussian noise is calibrated through :func:`snr_to_sigma`;
    ``snr_db = inf`` means no noise. The same seed reproduces the instance
    bit for bit.

    Parameters
    ----------
    endmember_source : "random" or array
        "random" draws ``n_endmembers`` smooth spectra (requires
        ``n_bands``); an array is treated as a library whose columns are
        sampled without replacement.
    """
    rng = np.random.default_rng(seed)
    N = int(n_endmembers)
    L = int(n_pixels)
    if N < 1 or L < 1:
        raise ValueError("n_endmembers and n_pixels must be positive")
    if not (0.0 < purity <= 1.0):
        raise ValueError(f"purity must lie in (0, 1], got {purity}")
    if pure_repeats < 1:
        raise ValueError("pure_repeats must be at least 1")
    if purity < 1.0 and purity <= 1.0 / N:
        raise ValueError(f"purity {purity} is unreachable: simplex columns always have a component >= 1/N")

    if isinstance(endmember_source, str):
        if endmember_source != "random":
            raise ValueError(f"unknown endmember source {endmember_source!r}")
        if n_bands is None:
            raise ValueError("n_bands is required with endmember_source='random'")
        A = random_spectra(int(n_bands), N, rng)
    else:
        library = pixel_data(endmember_source)
        if library.shape[1] < N:
            raise ValueError(f"library has {library.shape[1]} columns, need {N}")
        picked = np.sort(rng.choice(library.shape[1], size=N, replace=False))
        A = library[:, picked]
    M = A.shape[0]

    n_planted = N * pure_repeats if purity >= 1.0 else N
    if N > min(M, L - n_planted):
        raise ValueError(f"need n_endmembers <= min(n_bands, n_pixels - planted); got N={N}, M={M}, L={L}")

    S = _dirichlet_columns(rng, N, L)
    positions = rng.choice(L, size=n_planted, replace=False)
    if purity >= 1.0:
        for k in range(N):
            for r in range(pure_repeats):
                col = np.zeros(N)
                col[k] = 1.0
                S[:, positions[k * pure_repeats + r]] = col
    else:
        cap = _interior_cap(purity, N)
        _cap_max_component(S, cap)
        for k in range(N):
            S[:, positions[k]] = _plant_level_column(A, k, purity, cap, rng)

    Z = A @ S
    if math.isinf(snr_db):
        V = np.zeros_like(Z)
    else:
        sigma = snr_to_sigma(Z, snr_db)
        V = sigma * rng.standard_normal(Z.shape)

    return MixingInstance(
        pixels=PixelMatrix(Z + V),
        endmembers=EndmemberMatrix(A),
        abundances=AbundanceMatrix(S),
        noise=V,
        pure_pixel_set=IndexSet(tuple(int(p) for p in positions)),
        noise_bound_true=float(np.linalg.norm(V, axis=0).max()),
        snr_db=float(snr_db),
        purity=float(purity),
    )


def nearest_pure_indices(instance: MixingInstance) -> IndexSet:
    """One index per endmember minimizing ||A s[n] - a_k||_2 over the
    noiseless pixels; ties break toward the lowest index."""
    A = instance.endmembers.data
    Z = A @ instance.abundances.data
    picks = []
    for k in range(A.shape[1]):
        d = np.linalg.norm(Z - A[:, k][:, None], axis=0)
        picks.append(int(np.argmin(d)))
    return IndexSet(tuple(picks))


# ---------------------------------------------------------------------------
# Affine set fitting (dimension reduction)
# ---------------------------------------------------------------------------


def fit_affine_set(pixels, dim: int) -> AffineFit:
    """Least-squares affine set of the requested dimension: the pixel mean
    plus the top eigenvectors of the mean-removed sample scatter."""
    X = pixel_data(pixels)
    m, l = X.shape
    r = int(dim)
    if not (1 <= r <= min(m, l - 1)):
        raise ValueError(f"dim must lie in [1, min(M, L-1)] = [1, {min(m, l - 1)}], got {r}")
    mean = X.mean(axis=1)
    centered = X - mean[:, None]
    u, _, _ = np.linalg.svd(centered, full_matrices=False)
    return AffineFit(mean=mean, basis=u[:, :r], dim=r)


def project_affine(fit: AffineFit, pixels) -> PixelMatrix:
    """Coordinates of the pixels in the fitted affine set (dim x pixels)."""
    X = pixel_data(pixels)
    if X.shape[0] != fit.mean.shape[0]:
        raise ValueError("pixel band count does not match the fit")
    return PixelMatrix(fit.basis.T @ (X - fit.mean[:, None]))


def embed_affine(fit: AffineFit, coords) -> PixelMatrix:
    """Map affine coordinates back to band space."""
    Y = pixel_data(coords)
    if Y.shape[0] != fit.dim:
        raise ValueError("coordinate row count does not match the fit dimension")
    return PixelMatrix(fit.mean[:, None] + fit.basis @ Y)


def denoise_affine(fit: AffineFit, pixels) -> PixelMatrix:
    """Orthogonal projection of each pixel onto the fitted affine set,
    expressed in the original band space."""
    return embed_affine(fit, project_affine(fit, pixels))


# ---------------------------------------------------------------------------
# Matrix file I/O
# ---------------------------------------------------------------------------

_BINARY_ALIASES = ("binary", "binary-f64-le", "bin")


def save_matrix(matrix, path, format: str = "csv") -> None:
    """Write a matrix to ``path``.

    csv: first line "M,L", then M comma-separated rows. binary: two
    little-endian uint64 (M, L) followed by column-major little-endian
    float64 values; round-trips bit-exactly.
    """
    X = pixel_data(matrix)
    m, l = X.shape
    path = Path(path)
    if format == "csv":
        with path.open("w", encoding="ascii", newline="\n") as fh:
            fh.write(f"{m},{l}\n")
            for row in X:
                fh.write(",".join(f"{v:.17g}" for v in row))
                fh.write("\n")
    elif format in _BINARY_ALIASES:
        with path.open("wb") as fh:
            np.asarray([m, l], dtype="<u8").tofile(fh)
            np.asfortranarray(X).astype("<f8").T.tofile(fh)  # column-major payload
    else:
        raise ValueError(f"unknown matrix format {format!r}")


def load_matrix(path, format: str = "csv") -> PixelMatrix:
    """Read a matrix written by :func:`save_matrix`."""
    path = Path(path)
    if format == "csv":
        with path.open("r", encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
            if len(header) != 2:
                raise ValueError(f"{path}: expected 'M,L' header")
            try:
                m, l = int(header[0]), int(header[1])
            except ValueError as exc:
                raise ValueError(f"{path}: malformed header {header!r}") from exc
            rows = []
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(np.fromstring(line, dtype=np.float64, sep=","))
        if len(rows) != m or any(r.shape[0] != l for r in rows):
            raise ValueError(f"{path}: body does not match header {m}x{l}")
        data = np.vstack(rows)
    elif format in _BINARY_ALIASES:
        raw = path.read_bytes()
        if len(raw) < 16:
            raise ValueError(f"{path}: truncated binary matrix")
        m, l = (int(v) for v in np.frombuffer(raw[:16], dtype="<u8"))
        expected = 16 + 8 * m * l
        if len(raw) != expected:
            raise ValueError(f"{path}: expected {expected} bytes for {m}x{l}, got {len(raw)}")
        data = np.frombuffer(raw[16:], dtype="<f8").reshape((l, m)).T.copy()
    else:
        raise ValueError(f"unknown matrix format {format!r}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: matrix contains non-finite entries")
    return PixelMatrix(data)
