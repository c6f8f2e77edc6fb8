"""Command-line harness, implemented as a thin client of the HTTP service.

Without ``--server`` the commands talk to an in-process instance of the
app, so no running server is needed; with ``--server URL`` the same
requests go to a live deployment. All file I/O happens on the client side.

Exit codes: 0 success, 2 validation/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from . import __version__
from .model import load_matrix, save_matrix

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_EXT = {"csv": "csv", "binary": "bin"}


class ClientError(RuntimeError):
    def __init__(self, status_code: int, detail: str):
        super().__init__(f"HTTP {status_code}: {detail}")
        self.status_code = status_code


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise ClientError(resp.status_code, str(detail))
    return resp.json()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="ascii")


def _emit(args, obj, filename: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / filename, obj)
    else:
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _parse_q(text: str) -> float | str:
    if text.lower() in ("inf", "infinity"):
        return "inf"
    return float(text)


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"could not parse sweep values {text!r}") from exc


# ---------------------------------------------------------------------------
# Dataset directory layout
# ---------------------------------------------------------------------------


def _dataset_paths(directory: Path, fmt: str) -> dict:
    ext = _EXT[fmt]
    return {
        "manifest": directory / "manifest.json",
        "pixels": directory / f"pixels.{ext}",
        "endmembers": directory / f"endmembers.{ext}",
        "abundances": directory / f"abundances.{ext}",
        "pure_pixels": directory / "pure_pixels.csv",
    }


def write_dataset(directory: Path, response: dict, fmt: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    paths = _dataset_paths(directory, fmt)
    manifest = dict(response["manifest"])
    manifest["format"] = fmt
    _write_json(paths["manifest"], manifest)
    save_matrix(response["pixels"], paths["pixels"], fmt)
    save_matrix(response["endmembers"], paths["endmembers"], fmt)
    save_matrix(response["abundances"], paths["abundances"], fmt)
    with paths["pure_pixels"].open("w", encoding="ascii", newline="\n") as fh:
        fh.write("index,endmember\n")
        for idx, k in zip(response["pure_pixel_indices"], response["pure_pixel_endmembers"]):
            fh.write(f"{idx},{k}\n")


def read_dataset(directory: Path) -> tuple[dict, dict]:
    """Return (manifest, payload pieces) from a dataset directory."""
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise ValueError(f"{directory} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    fmt = manifest.get("format", "csv")
    if fmt not in _EXT:
        raise ValueError(f"unknown dataset format {fmt!r}")
    paths = _dataset_paths(directory, fmt)
    pieces: dict = {"pixels": load_matrix(paths["pixels"], fmt).data.tolist()}
    if paths["endmembers"].is_file() and paths["abundances"].is_file() and paths["pure_pixels"].is_file():
        indices = []
        with paths["pure_pixels"].open("r", encoding="ascii") as fh:
            header = fh.readline()
            if not header.startswith("index"):
                raise ValueError(f"{paths['pure_pixels']}: malformed header")
            for line in fh:
                line = line.strip()
                if line:
                    indices.append(int(line.split(",")[0]))
        pieces["ground_truth"] = {
            "endmembers": load_matrix(paths["endmembers"], fmt).data.tolist(),
            "abundances": load_matrix(paths["abundances"], fmt).data.tolist(),
            "pure_pixel_indices": indices,
            "purity": manifest.get("purity", 1.0),
            "noise_bound": manifest.get("noise_bound", 0.0),
        }
    return manifest, pieces


def _load_pixels(args) -> tuple[dict, dict]:
    if getattr(args, "data", None):
        return read_dataset(Path(args.data))
    if getattr(args, "pixels", None):
        matrix = load_matrix(Path(args.pixels), args.pixels_format)
        return {}, {"pixels": matrix.data.tolist()}
    raise ValueError("either --data DIR or --pixels FILE is required")


def _unmix_options(args) -> dict:
    opts = {
        "q": _parse_q(args.q),
        "stopping": args.stop,
        "delta_multiplier": args.delta_mult,
        "exact_second_pass": bool(getattr(args, "second_pass", False)),
    }
    if args.delta is not None:
        opts["delta"] = args.delta
    if args.epsilon is not None:
        opts["epsilon"] = args.epsilon
    if args.asf_dr is not None:
        opts["asf_dr"] = args.asf_dr
    if getattr(args, "iterations", None) is not None:
        opts["n_iterations"] = args.iterations
    if getattr(args, "max_endmembers", None) is not None:
        opts["max_endmembers"] = args.max_endmembers
    return opts


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, client: httpx.Client) -> int:
    payload = {
        "scene": {
            "n_endmembers": args.n,
            "n_pixels": args.l,
            "n_bands": args.m,
            "snr_db": args.snr,
            "purity": args.purity,
            "pure_repeats": args.repeats,
        },
        "seed": args.seed,
    }
    if args.library:
        payload["endmember_library"] = load_matrix(Path(args.library), args.library_format).data.tolist()
    response = _post(client, "/synth", payload)
    write_dataset(Path(args.out), response, args.format)
    print(f"wrote dataset to {args.out} (N={args.n}, L={args.l}, M={response['manifest']['n_bands']}, seed={args.seed})")
    return EXIT_OK


def cmd_unmix(args, client: httpx.Client) -> int:
    manifest, pieces = _load_pixels(args)
    options = _unmix_options(args)
    payload = {"pixels": pieces["pixels"], "options": options}
    if "ground_truth" in pieces and not args.no_truth:
        payload["ground_truth"] = pieces["ground_truth"]
    report = _post(client, "/unmix", payload)
    report["request"] = {  # reproducibility: the report carries its inputs
        "options": options,
        "data": args.data,
        "pixels": args.pixels,
        "dataset_seed": manifest.get("seed"),
    }

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        spectra = report.pop("spectra")
        save_matrix(spectra, out / f"spectra.{_EXT[args.format]}", args.format)
        with (out / "trace.csv").open("w", encoding="ascii", newline="\n") as fh:
            fh.write("iteration,index,score,residual_frobenius,stopping_statistic\n")
            for step in report["trace"]:
                stat = "" if step["stopping_statistic"] is None else f"{step['stopping_statistic']:.17g}"
                fh.write(
                    f"{step['iteration']},{step['index']},{step['score']:.17g},"
                    f"{step['residual_frobenius']:.17g},{stat}\n"
                )
        with (out / "selected_indices.csv").open("w", encoding="ascii", newline="\n") as fh:
            fh.write("order,index\n")
            for i, idx in enumerate(report["selected_indices"]):
                fh.write(f"{i},{idx}\n")
        _write_json(out / "report.json", report)
        print(f"wrote unmixing report to {args.out}")
    else:
        summary = {k: report[k] for k in ("selected_indices", "n_hat", "stopped_by", "delta", "epsilon_hat", "detection")}
        json.dump(summary, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    n_hat = report["n_hat"]
    det = report.get("detection")
    tail = "" if det is None else f", detection={'true' if det else 'false'}"
    print(f"n_hat={n_hat}, stopped_by={report['stopped_by']}{tail}")
    return EXIT_OK


def cmd_sweep(args, client: httpx.Client) -> int:
    payload = {
        "axis": args.axis,
        "values": _parse_values(args.values),
        "trials": args.trials,
        "scene": {
            "n_endmembers": args.n,
            "n_pixels": args.l,
            "n_bands": args.m,
            "snr_db": args.snr,
            "purity": args.purity,
            "pure_repeats": args.repeats,
        },
        "options": _unmix_options(args),
        "seed": args.seed,
        "threads": args.threads,
    }
    response = _post(client, "/sweep", payload)
    rows = response["rows"]

    def fmt(v):
        return "" if v is None else f"{v:.17g}"

    csv_lines = ["value,trials,failures,detection_probability,n_hat_mean,n_hat_std,runtime_s_mean"]
    for r in rows:
        csv_lines.append(
            f"{r['value']:.17g},{r['trials']},{r['failures']},{r['detection_probability']:.17g},"
            f"{fmt(r['n_hat_mean'])},{fmt(r['n_hat_std'])},{fmt(r['runtime_s_mean'])}"
        )
    csv_text = "\n".join(csv_lines) + "\n"

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(csv_text, encoding="ascii")
        manifest = {"request": payload, "package_version": __version__, "runtime_s": response["runtime_s"]}
        _write_json(out / "sweep.json", manifest)
        if args.plot:
            from .harness import line_plot_svg

            xs = [r["value"] for r in rows]
            series = [("detection", xs, [r["detection_probability"] for r in rows])]
            svg = line_plot_svg(series, title=f"{args.axis} sweep", x_label=args.axis, y_label="detection probability")
            (out / "sweep.svg").write_text(svg, encoding="utf-8")
        print(f"wrote sweep results to {args.out}")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_oracle(args, client: httpx.Client) -> int:
    _, pieces = _load_pixels(args)
    response = _post(client, "/oracle", {"pixels": pieces["pixels"], "delta": args.delta})
    _emit(args, response, "oracle.json")
    print(f"optimal support size {response['cardinality']}: {response['indices']}")
    return EXIT_OK


def cmd_diag(args, client: httpx.Client) -> int:
    _, pieces = _load_pixels(args)
    truth = pieces.get("ground_truth")
    if truth is None:
        raise ValueError("diag needs a dataset directory with ground truth files")
    payload = {
        "endmembers": truth["endmembers"],
        "abundances": truth["abundances"],
        "noise_bound": truth["noise_bound"],
    }
    if args.delta is not None:
        payload["delta"] = args.delta
    response = _post(client, "/diag", payload)
    _emit(args, response, "diag.json")
    return EXIT_OK


def cmd_serve(args, _client=None) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=5, help="number of endmembers")
    p.add_argument("--l", type=int, default=500, help="number of pixels")
    p.add_argument("--m", type=int, default=50, help="number of spectral bands")
    p.add_argument("--snr", type=float, default=None, help="SNR in dB (omit for noiseless)")
    p.add_argument("--purity", type=float, default=1.0, help="pure pixel level rho in (0, 1]")
    p.add_argument("--repeats", type=int, default=1, help="pure pixels per endmember at rho = 1")


def _add_unmix_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=str, default="inf", help="selection norm order in (1, inf]; 'inf' for the fast path")
    p.add_argument("--stop", choices=["residual", "rule1", "rule2", "fixed"], default="rule2")
    p.add_argument("--iterations", type=int, default=None, help="iteration count for --stop fixed")
    p.add_argument("--delta", type=float, default=None, help="explicit feasibility tolerance (overrides estimation)")
    p.add_argument("--delta-mult", type=float, default=2.0, help="delta = mult * estimated noise bound")
    p.add_argument("--epsilon", type=float, default=None, help="explicit noise bound (skips estimation)")
    p.add_argument("--asf-dr", type=int, default=None, metavar="NMAX", help="denoise by affine fit of this dimension first")
    p.add_argument("--second-pass", action="store_true", help="refit at the detected order and select again")
    p.add_argument("--max-endmembers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purepix", description="Pure-pixel search unmixing toolkit")
    parser.add_argument("--version", action="version", version=f"purepix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None, help="service URL; default runs the service in-process")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    _add_scene_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--library", default=None, help="spectral library file to draw endmembers from")
    p.add_argument("--library-format", choices=["csv", "binary"], default="csv")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("unmix", parents=[common], help="run the unmixing pipeline on a dataset")
    p.add_argument("--data", default=None, help="dataset directory written by synth")
    p.add_argument("--pixels", default=None, help="standalone pixel matrix file")
    p.add_argument("--pixels-format", choices=["csv", "binary"], default="csv")
    p.add_argument("--no-truth", action="store_true", help="ignore ground truth files even when present")
    _add_unmix_flags(p)
    p.add_argument("--out", default=None, help="report directory (prints a summary without it)")
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("sweep", parents=[common], help="seeded Monte-Carlo sweep over a scene parameter")
    p.add_argument("--axis", choices=["snr", "nmax", "purity", "n-endmembers"], required=True)
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--trials", type=int, default=50)
    _add_scene_flags(p)
    _add_unmix_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory (prints CSV without it)")
    p.add_argument("--plot", action="store_true", help="also emit an SVG line plot")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", parents=[common], help="exhaustive minimum-support solver (tiny scenes)")
    p.add_argument("--data", default=None)
    p.add_argument("--pixels", default=None)
    p.add_argument("--pixels-format", choices=["csv", "binary"], default="csv")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("diag", parents=[common], help="theory diagnostics for a ground-truth dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        with make_client(args.server) as client:
            return args.func(args, client)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if exc.status_code in (400, 422) else EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except httpx.HTTPError as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
