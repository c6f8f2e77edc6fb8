"""FastAPI wrapper around the unmixing core.

Domain validation failures map to HTTP 400 (schema violations get
FastAPI's native 422); numerical failures map to HTTP 500.
"""

from __future__ import annotations

import math
import time

import numpy as np
from fastapi import FastAPI

from .. import __version__
from ..harness import SceneSpec, UnmixSettings, sweep, unmix
from ..metrics import detection, mrsa
from ..model import (
    AbundanceMatrix,
    EndmemberMatrix,
    IndexSet,
    MixingInstance,
    PixelMatrix,
    generate_synthetic,
    nearest_pure_indices,
    pure_pixel_labels,
)
from ..oracle import MATCHING_MAX_ENDMEMBERS, diagnostics, diagnostics_from_parts, recovery_error, solve_sdmmv_bruteforce
from . import schemas


def _matrix(arr) -> list[list[float]]:
    return np.asarray(arr, dtype=np.float64).tolist()


def _nan_to_none(v: float) -> float | None:
    return None if v is None or not math.isfinite(v) else float(v)


def _instance_from_truth(pixels: np.ndarray, truth: schemas.GroundTruth) -> MixingInstance:
    A = np.asarray(truth.endmembers, dtype=np.float64)
    S = np.asarray(truth.abundances, dtype=np.float64)
    noise = pixels - A @ S
    return MixingInstance(
        pixels=PixelMatrix(pixels),
        endmembers=EndmemberMatrix(A),
        abundances=AbundanceMatrix(S),
        noise=noise,
        pure_pixel_set=IndexSet(tuple(truth.pure_pixel_indices)),
        noise_bound_true=float(np.linalg.norm(noise, axis=0).max()),
        snr_db=math.inf,
        purity=truth.purity,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="purepix", version=__version__)

    from fastapi.responses import JSONResponse

    @app.exception_handler(np.linalg.LinAlgError)
    async def _linalg_error(request, exc):
        # LinAlgError subclasses ValueError; register it first so it maps to 500.
        return JSONResponse(status_code=500, content={"detail": f"numerical failure: {exc}"})

    @app.exception_handler(ArithmeticError)
    async def _numerical_error(request, exc):
        return JSONResponse(status_code=500, content={"detail": f"numerical failure: {exc}"})

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        scene = req.scene
        snr = math.inf if scene.snr_db is None else scene.snr_db
        if req.endmember_library is not None:
            source = np.asarray(req.endmember_library, dtype=np.float64)
            source_name = "library"
        else:
            source = "random"
            source_name = "random"
        instance = generate_synthetic(
            scene.n_endmembers,
            scene.n_pixels,
            endmember_source=source,
            n_bands=scene.n_bands,
            snr_db=snr,
            purity=scene.purity,
            pure_repeats=scene.pure_repeats,
            seed=req.seed,
        )
        manifest = schemas.SynthManifest(
            seed=req.seed,
            n_endmembers=instance.endmember_count,
            n_pixels=instance.pixel_count,
            n_bands=instance.band_count,
            snr_db=scene.snr_db,
            purity=scene.purity,
            pure_repeats=scene.pure_repeats,
            endmember_source=source_name,
            noise_bound=instance.noise_bound_true,
            package_version=__version__,
        )
        return schemas.SynthResponse(
            manifest=manifest,
            pixels=_matrix(instance.pixels.data),
            endmembers=_matrix(instance.endmembers.data),
            abundances=_matrix(instance.abundances.data),
            noise=_matrix(instance.noise),
            pure_pixel_indices=list(instance.pure_pixel_set),
            pure_pixel_endmembers=list(pure_pixel_labels(instance)),
        )

    @app.post("/unmix", response_model=schemas.UnmixResponse)
    def unmix_endpoint(req: schemas.UnmixRequest):
        X = np.asarray(req.pixels, dtype=np.float64)
        opts = req.options
        settings = UnmixSettings(
            q=float(opts.q),
            stopping=opts.stopping,
            delta=opts.delta,
            delta_multiplier=opts.delta_multiplier,
            epsilon=opts.epsilon,
            asf_dr=opts.asf_dr,
            exact_second_pass=opts.exact_second_pass,
            n_iterations=opts.n_iterations,
            max_endmembers=opts.max_endmembers,
            residual_floor=opts.residual_floor,
        )
        result = unmix(X, settings)

        detected = None
        reference = None
        matched = None
        errors = None
        angles = None
        diag_payload = None
        if req.ground_truth is not None:
            instance = _instance_from_truth(X, req.ground_truth)
            ref = instance.pure_pixel_set if instance.purity >= 1.0 else nearest_pure_indices(instance)
            reference = list(ref)
            detected = detection(result.selected, ref, instance)
            diag = diagnostics(instance, delta=result.delta)
            diag_payload = schemas.DiagnosticsPayload(
                sigma_min=diag.sigma_min,
                d_s=diag.d_s,
                eta_proxy=diag.eta_proxy,
                exhaustive_eps_bound=diag.exhaustive_eps_bound,
                greedy_eps_bound=diag.greedy_eps_bound,
                exhaustive_delta_window=diag.exhaustive_delta_window,
                greedy_delta_window=diag.greedy_delta_window,
                separation_radius=diag.separation_radius,
            )
            if max(instance.endmember_count, result.n_hat) <= MATCHING_MAX_ENDMEMBERS:
                err, perm = recovery_error(result.selected, instance)
                matched = list(perm)
                errors = [float(e) for e in err]
                if result.n_hat <= instance.endmember_count:
                    A = instance.endmembers.data
                    angles = [float(mrsa(result.spectra[:, i], A[:, perm[i]])) for i in range(result.n_hat)]

        steps = [
            schemas.TraceStep(
                iteration=i + 1,
                index=s.index,
                score=s.score,
                residual_frobenius=s.residual_frobenius,
                stopping_statistic=s.stopping_statistic,
            )
            for i, s in enumerate(result.trace.steps)
        ]
        return schemas.UnmixResponse(
            selected_indices=list(result.selected),
            n_hat=result.n_hat,
            stopped_by=result.trace.stopped_by,
            stop_statistic=result.trace.stop_statistic,
            trace=steps,
            spectra=_matrix(result.spectra),
            epsilon_hat=result.epsilon_hat,
            delta=result.delta,
            asf_dr_dim=result.asf_dr_dim,
            second_pass_dim=result.second_pass_dim,
            detection=detected,
            reference_indices=reference,
            matched_endmembers=matched,
            recovery_errors=errors,
            mrsa_degrees=angles,
            diagnostics=diag_payload,
            runtime_s=result.runtime_s,
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep_endpoint(req: schemas.SweepRequest):
        scene = SceneSpec(
            n_endmembers=req.scene.n_endmembers,
            n_pixels=req.scene.n_pixels,
            n_bands=req.scene.n_bands,
            snr_db=math.inf if req.scene.snr_db is None else req.scene.snr_db,
            purity=req.scene.purity,
            pure_repeats=req.scene.pure_repeats,
        )
        opts = req.options
        settings = UnmixSettings(
            q=float(opts.q),
            stopping=opts.stopping,
            delta=opts.delta,
            delta_multiplier=opts.delta_multiplier,
            epsilon=opts.epsilon,
            asf_dr=opts.asf_dr,
            exact_second_pass=opts.exact_second_pass,
            n_iterations=opts.n_iterations,
            max_endmembers=opts.max_endmembers,
            residual_floor=opts.residual_floor,
        )
        t0 = time.perf_counter()
        rows = sweep(
            req.axis,
            req.values,
            scene=scene,
            settings=settings,
            trials=req.trials,
            seed=req.seed,
            threads=req.threads,
        )
        payload = [
            schemas.SweepRowPayload(
                value=r.value,
                trials=r.trials,
                failures=r.failures,
                detection_probability=r.detection_probability,
                n_hat_mean=_nan_to_none(r.n_hat_mean),
                n_hat_std=_nan_to_none(r.n_hat_std),
                runtime_s_mean=_nan_to_none(r.runtime_s_mean),
            )
            for r in rows
        ]
        return schemas.SweepResponse(axis=req.axis, rows=payload, seed=req.seed, runtime_s=time.perf_counter() - t0)

    @app.post("/oracle", response_model=schemas.OracleResponse)
    def oracle_endpoint(req: schemas.OracleRequest):
        X = np.asarray(req.pixels, dtype=np.float64)
        t0 = time.perf_counter()
        support = solve_sdmmv_bruteforce(X, req.delta)
        return schemas.OracleResponse(
            indices=list(support),
            cardinality=len(support),
            runtime_s=time.perf_counter() - t0,
        )

    @app.post("/diag", response_model=schemas.DiagnosticsPayload)
    def diag_endpoint(req: schemas.DiagRequest):
        diag = diagnostics_from_parts(
            np.asarray(req.endmembers, dtype=np.float64),
            np.asarray(req.abundances, dtype=np.float64),
            req.noise_bound,
            req.delta,
        )
        return schemas.DiagnosticsPayload(
            sigma_min=diag.sigma_min,
            d_s=diag.d_s,
            eta_proxy=diag.eta_proxy,
            exhaustive_eps_bound=diag.exhaustive_eps_bound,
            greedy_eps_bound=diag.greedy_eps_bound,
            exhaustive_delta_window=diag.exhaustive_delta_window,
            greedy_delta_window=diag.greedy_delta_window,
            separation_radius=diag.separation_radius,
        )

    return app
