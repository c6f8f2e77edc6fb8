"""End-to-end unmixing runs and seeded Monte-Carlo sweeps.

A run optionally denoises the pixels by affine-set projection, derives the
feasibility tolerance from an estimated (or supplied) noise bound, executes
the greedy pursuit, and can repeat the selection after an exact affine fit
at the detected model order. Sweeps fan a scene parameter across a grid
with per-trial seeds split from a master seed so any single trial is
reproducible in isolation.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .greedy import SelectionTrace, SompConfig, run_sd_somp
from .metrics import detection
from .model import Array, IndexSet, MixingInstance, denoise_affine, fit_affine_set, generate_synthetic, nearest_pure_indices, pixel_data
from .noise import delta_from_epsilon, estimate_noise

SWEEP_AXES = ("snr", "nmax", "purity", "n-endmembers")


@dataclass(frozen=True)
class UnmixSettings:
    """Pipeline knobs for a single unmixing run."""

    q: float = math.inf
    stopping: str = "rule2"
    delta: float | None = None
    delta_multiplier: float = 2.0
    epsilon: float | None = None
    asf_dr: int | None = None
    exact_second_pass: bool = False
    n_iterations: int | None = None
    max_endmembers: int | None = None
    residual_floor: float = 1e-9
    solver_tol: float = 1e-9
    solver_max_iter: int = 10_000


@dataclass(frozen=True)
class UnmixResult:
    selected: IndexSet
    n_hat: int
    trace: SelectionTrace
    spectra: Array  # bands x n_hat, original band space
    epsilon_hat: float | None
    delta: float | None
    asf_dr_dim: int | None
    second_pass_dim: int | None
    second_trace: SelectionTrace | None
    runtime_s: float


def _resolve_delta(X: Array, settings: UnmixSettings, fit) -> tuple[float, float | None]:
    if settings.delta is not None:
        return settings.delta, settings.epsilon
    if settings.epsilon is not None:
        eps = settings.epsilon
    else:
        noise_hat, eps_raw = estimate_noise(X)
        eps = eps_raw
        if fit is not None:
            # The pursuit sees denoised pixels, so bound the denoised noise.
            # The band regression absorbs the in-subspace noise component,
            # so the projected estimate is floored at the isotropic energy
            # scaling of the raw bound.
            eps_proj = float(np.linalg.norm(fit.basis.T @ noise_hat, axis=0).max())
            eps = max(eps_proj, math.sqrt(fit.dim / X.shape[0]) * eps_raw)
    return delta_from_epsilon(eps, settings.delta_multiplier), eps


def unmix(pixels, settings: UnmixSettings = UnmixSettings()) -> UnmixResult:
    """Run the full pipeline on a pixel matrix."""
    X = pixel_data(pixels)
    m, l = X.shape
    t0 = time.perf_counter()

    fit = None
    working = X
    asf_dim = None
    if settings.asf_dr is not None:
        asf_dim = max(1, min(int(settings.asf_dr), m, l - 1))
        fit = fit_affine_set(X, asf_dim)
        working = denoise_affine(fit, X).data

    delta = 0.0
    epsilon_hat = settings.epsilon
    if settings.stopping in ("rule1", "rule2"):
        delta, epsilon_hat = _resolve_delta(X, settings, fit)

    config = SompConfig(
        q=settings.q,
        stopping=settings.stopping,
        delta=delta,
        n_iterations=settings.n_iterations,
        max_endmembers=settings.max_endmembers,
        residual_floor=settings.residual_floor,
        solver_tol=settings.solver_tol,
        solver_max_iter=settings.solver_max_iter,
    )
    selected, trace = run_sd_somp(working, config)
    spectra_source = working
    second_dim = None
    second_trace = None

    if settings.exact_second_pass and len(selected) >= 2 and len(selected) - 1 <= min(m, l - 1):
        second_dim = len(selected) - 1  # affine dimension of the detected simplex
        refit = fit_affine_set(X, second_dim)
        refined = denoise_affine(refit, X).data
        config2 = replace(config, stopping="fixed", n_iterations=len(selected))
        selected, second_trace = run_sd_somp(refined, config2)
        spectra_source = refined

    spectra = spectra_source[:, list(selected)].copy()
    return UnmixResult(
        selected=selected,
        n_hat=len(selected),
        trace=trace,
        spectra=spectra,
        epsilon_hat=epsilon_hat,
        delta=delta if settings.stopping in ("rule1", "rule2") else settings.delta,
        asf_dr_dim=asf_dim,
        second_pass_dim=second_dim,
        second_trace=second_trace,
        runtime_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic scene parameters for one Monte-Carlo trial."""

    n_endmembers: int = 5
    n_pixels: int = 500
    n_bands: int = 50
    snr_db: float = 35.0
    purity: float = 1.0
    pure_repeats: int = 1


@dataclass(frozen=True)
class TrialOutcome:
    detected: bool
    n_hat: int
    runtime_s: float
    error: str | None = None


@dataclass(frozen=True)
class SweepRow:
    value: float
    trials: int
    failures: int
    detection_probability: float
    n_hat_mean: float
    n_hat_std: float
    runtime_s_mean: float


def trial_seed(master_seed: int, point_index: int, trial_index: int) -> int:
    """Counter-split child seed, stable given (master, point, trial)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(point_index), int(trial_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def reference_indices(instance: MixingInstance) -> IndexSet:
    """Detection reference: the planted pure set at full purity, otherwise
    the nearest-pure surrogate set."""
    if instance.purity >= 1.0:
        return instance.pure_pixel_set
    return nearest_pure_indices(instance)


def run_trial(scene: SceneSpec, settings: UnmixSettings, seed: int) -> TrialOutcome:
    instance = generate_synthetic(
        scene.n_endmembers,
        scene.n_pixels,
        n_bands=scene.n_bands,
        snr_db=scene.snr_db,
        purity=scene.purity,
        pure_repeats=scene.pure_repeats,
        seed=seed,
    )
    t0 = time.perf_counter()
    result = unmix(instance.pixels, settings)
    elapsed = time.perf_counter() - t0
    detected = detection(result.selected, reference_indices(instance), instance)
    return TrialOutcome(detected=detected, n_hat=result.n_hat, runtime_s=elapsed)


def apply_axis(scene: SceneSpec, settings: UnmixSettings, axis: str, value: float):
    if axis == "snr":
        return replace(scene, snr_db=float(value)), settings
    if axis == "purity":
        return replace(scene, purity=float(value)), settings
    if axis == "n-endmembers":
        return replace(scene, n_endmembers=int(value)), settings
    if axis == "nmax":
        dim = int(value)
        return scene, replace(settings, asf_dr=dim if dim > 0 else None)
    raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep(
    axis: str,
    values,
    scene: SceneSpec = SceneSpec(),
    settings: UnmixSettings = UnmixSettings(),
    trials: int = 50,
    seed: int = 0,
    threads: int = 1,
) -> list[SweepRow]:
    """Seeded Monte-Carlo grid run; failed trials are flagged per row and
    excluded from the statistics instead of aborting the sweep."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("no sweep values given")

    rows = []
    for point, value in enumerate(values):
        point_scene, point_settings = apply_axis(scene, settings, axis, value)

        def one(t: int, _sc=point_scene, _st=point_settings, _p=point) -> TrialOutcome:
            try:
                return run_trial(_sc, _st, trial_seed(seed, _p, t))
            except Exception as exc:  # flagged, sweep continues
                return TrialOutcome(detected=False, n_hat=0, runtime_s=0.0, error=f"{type(exc).__name__}: {exc}")

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(one, range(trials)))
        else:
            outcomes = [one(t) for t in range(trials)]

        good = [o for o in outcomes if o.error is None]
        failures = trials - len(good)
        if good:
            orders = np.array([o.n_hat for o in good], dtype=np.float64)
            det = sum(o.detected for o in good) / len(good)
            n_mean = float(orders.mean())
            n_std = 0.0 if orders.size == 1 else float(orders.std(ddof=1))
            rt = float(np.mean([o.runtime_s for o in good]))
        else:
            det, n_mean, n_std, rt = 0.0, float("nan"), float("nan"), float("nan")
        rows.append(
            SweepRow(
                value=value,
                trials=trials,
                failures=failures,
                detection_probability=det,
                n_hat_mean=n_mean,
                n_hat_std=n_std,
                runtime_s_mean=rt,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Plot emission (dependency-free SVG)
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_plot_svg(series, title: str = "", x_label: str = "", y_label: str = "") -> str:
    """Render (label, xs, ys) series as a self-contained SVG line chart."""
    series = [(str(label), [float(x) for x in xs], [float(y) for y in ys]) for label, xs, ys in series]
    if not series or any(len(xs) != len(ys) or not xs for _, xs, ys in series):
        raise ValueError("each series needs equally sized, non-empty xs and ys")

    width, height = 640.0, 420.0
    left, right, top, bottom = 70.0, 20.0, 40.0, 50.0
    plot_w, plot_h = width - left - right, height - top - bottom

    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>',
    ]
    ticks = 5
    for i in range(ticks):
        fx = x_lo + (x_hi - x_lo) * i / (ticks - 1)
        fy = y_lo + (y_hi - y_lo) * i / (ticks - 1)
        px, py = sx(fx), sy(fy)
        parts.append(f'<line x1="{px:.1f}" y1="{top + plot_h:.1f}" x2="{px:.1f}" y2="{top + plot_h + 5:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{px:.1f}" y="{top + plot_h + 18:.1f}" text-anchor="middle">{fx:g}</text>')
        parts.append(f'<line x1="{left - 5:.1f}" y1="{py:.1f}" x2="{left:.1f}" y2="{py:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{left - 8:.1f}" y="{py + 4:.1f}" text-anchor="end">{fy:g}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 10:.1f}" text-anchor="middle">{x_label}</text>')
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.1f}" text-anchor="middle" transform="rotate(-90 18 {top + plot_h / 2:.1f})">{y_label}</text>'
    )
    for s, (label, xs, ys) in enumerate(series):
        color = _PALETTE[s % len(_PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.6" fill="{color}"/>')
        ly = top + 14 + 16 * s
        parts.append(f'<line x1="{left + plot_w - 120:.1f}" y1="{ly - 4:.1f}" x2="{left + plot_w - 96:.1f}" y2="{ly - 4:.1f}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + plot_w - 90:.1f}" y="{ly:.1f}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
