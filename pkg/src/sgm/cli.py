"""Command-line front end.

Every subcommand writes its artifacts plus a ``manifest.json`` into the
output directory. The manifest records the subcommand, the effective
configuration (config file first, then flags override), the seed, library
versions, and sha256 digests of every input file. Nothing time-dependent
goes into any artifact, so rerunning a command with the same inputs
reproduces every output byte for byte.

Exit codes: 0 success, 1 usage error (bad flags, malformed inputs),
2 numerical failure (divergence, degenerate model).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import (
    gen_generalized,
    gen_markov,
    gen_mog,
    load_samples,
    load_spec,
    save_samples,
    save_spec,
)
from .errors import DegenerateModelError, TrainingDivergedError, UsageError
from .metrics import ce_score, validation_rate
from .mixture import (
    load_mixture,
    quadratic_norm,
    renyi2_entropy,
    save_mixture,
)
from .network import save_checkpoint
from .quadrature import grid_integrate, oracle_conditional_norm
from .training import (
    TrainConfig,
    materialize_mixture,
    mi_pipeline,
    train_adversarial,
    train_conditional,
    train_density,
)
from .costs import write_telemetry


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; route that through UsageError so
    every usage problem maps to exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    path.write_text(text + "\n")


def _write_manifest(out_dir: Path, command: str, config: dict,
                    inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs)},
        "versions": {
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "sgm": __version__,
        },
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        loaded = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise UsageError("config file must hold a JSON object")
    return loaded


_CONFIG_FIELDS = (
    "n_components", "batch", "lr", "beta1", "beta2", "steps", "var_floor",
    "seed", "noise_dim", "weight_cap", "weight_scale", "x_dim", "disc_steps",
    "init_spread",
)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with config fields; flags override")
    p.add_argument("--n-components", type=int, dest="n_components")
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--var-floor", type=float, dest="var_floor")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-dim", type=int, dest="noise_dim")
    p.add_argument("--weight-cap", type=float, dest="weight_cap")
    p.add_argument("--weight-scale", type=float, dest="weight_scale")
    p.add_argument("--x-dim", type=int, dest="x_dim")
    p.add_argument("--disc-steps", type=int, dest="disc_steps")
    p.add_argument("--init-spread", type=float, dest="init_spread")


def _effective_config(args, mode: str) -> TrainConfig:
    merged = dict(_load_config_file(getattr(args, "config", None)))
    merged.pop("mode", None)
    unknown = set(merged) - set(_CONFIG_FIELDS)
    if unknown:
        raise UsageError(f"unknown config fields: {sorted(unknown)}")
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    try:
        return TrainConfig(mode=mode, **merged)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _config_dict(config: TrainConfig) -> dict:
    out = {"mode": config.mode}
    for name in _CONFIG_FIELDS:
        out[name] = getattr(config, name)
    out["hidden"] = list(config.hidden)
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_artifacts(out: Path, report, prefix: str = "") -> dict:
    """Telemetry CSV + checkpoint + summary numbers for one run."""
    write_telemetry(out / f"{prefix}telemetry.csv", report.telemetry)
    ckpt = out / f"{prefix}model.ckpt"
    save_checkpoint(ckpt, report.network)
    report.checkpoint_path = str(ckpt)
    summary = {
        "mode": report.mode,
        "J": report.j_final,
        "k_hat": report.k_hat,
        "v_hat": report.v_hat,
        "steps": len(report.telemetry),
    }
    if report.h2 is not None:
        summary["H2"] = report.h2
    if report.d2 is not None:
        summary["D2"] = report.d2
    return summary


def _write_density_grid(path: Path, mixture, data: np.ndarray) -> None:
    """Model density on a regular grid over the data box, as plottable CSV."""
    from .mixture import eval_density

    lo, hi = data.min(axis=0), data.max(axis=0)
    pad = 0.05 * (hi - lo + 1e-12)
    lo, hi = lo - pad, hi + pad
    if data.shape[1] == 1:
        xs = np.linspace(lo[0], hi[0], 512)[:, None]
        values = eval_density(mixture, xs)
        rows = [f"{x!r},{g!r}" for x, g in zip(xs[:, 0], values)]
        path.write_text("x,density\n" + "\n".join(rows) + "\n")
    else:
        n = 128
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        values = eval_density(mixture, grid)
        rows = [f"{p[0]!r},{p[1]!r},{g!r}" for p, g in zip(grid, values)]
        path.write_text("x,y,density\n" + "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    out = _out_dir(args)
    if args.recipe == "planar":
        spec, samples = gen_mog(args.seed, n_samples=args.n_samples)
    elif args.recipe == "generalized":
        spec, samples = gen_generalized(args.seed, n_samples=args.n_samples)
    elif args.recipe == "chain":
        spec, samples = gen_markov(args.seed)
    else:  # argparse choices guard this
        raise UsageError(f"unknown recipe {args.recipe!r}")
    save_samples(out / "samples.csv", samples)
    save_spec(out / "spec.json", spec)
    _write_manifest(out, "gen-data",
                    {"recipe": args.recipe, "seed": args.seed,
                     "n_samples": args.n_samples}, [])
    print(f"wrote {samples.shape[0]} samples of dim {samples.shape[1]} to {out}")
    return 0


def _cmd_train_density(args) -> int:
    data = load_samples(Path(args.data))
    config = _effective_config(args, "density")
    report = train_density(config, data)
    out = _out_dir(args)
    summary = _report_artifacts(out, report)
    frozen = materialize_mixture(
        report.network, args.material_draws, np.random.default_rng(config.seed + 101))
    save_mixture(frozen, out / "mixture.json")
    if data.shape[1] <= 2:
        _write_density_grid(out / "density_grid.csv", frozen, data)
    summary["material_draws"] = args.material_draws
    _write_json(out / "summary.json", summary)
    _write_manifest(out, "train-density", _config_dict(config), [Path(args.data)])
    print(f"J={report.j_final:.6f} H2={report.h2:.6f} -> {out}")
    return 0


def _cmd_train_conditional(args) -> int:
    pairs = load_samples(Path(args.data))
    config = _effective_config(args, "conditional")
    report = train_conditional(config, pairs)
    out = _out_dir(args)
    summary = _report_artifacts(out, report)
    _write_json(out / "summary.json", summary)
    _write_manifest(out, "train-conditional", _config_dict(config), [Path(args.data)])
    print(f"J={report.j_final:.6f} H2={report.h2:.6f} -> {out}")
    return 0


def _cmd_estimate_mi(args) -> int:
    pairs = load_samples(Path(args.data))
    config = _effective_config(args, "density")
    estimates = mi_pipeline(pairs, config, material_draws=args.material_draws)
    out = _out_dir(args)
    _write_json(out / "mi.json", estimates)
    _write_manifest(out, "estimate-mi", _config_dict(config), [Path(args.data)])
    print(json.dumps(estimates, sort_keys=True))
    return 0


def _cmd_train_gan2d(args) -> int:
    data = load_samples(Path(args.data))
    config = _effective_config(args, "adversarial")
    probe = load_samples(Path(args.ood)) if args.ood else None
    gen_report, disc_report = train_adversarial(config, data, ood_probe=probe)
    out = _out_dir(args)
    summary = _report_artifacts(out, disc_report, prefix="disc_")
    write_telemetry(out / "gen_telemetry.csv", gen_report.telemetry)
    save_checkpoint(out / "gen_model.ckpt", gen_report.network)
    summary["auroc"] = disc_report.extras["auroc"]
    _write_json(out / "summary.json", summary)
    inputs = [Path(args.data)] + ([Path(args.ood)] if args.ood else [])
    _write_manifest(out, "train-gan2d", _config_dict(config), inputs)
    print(f"J={disc_report.j_final:.6f} auroc={summary['auroc']:.4f} -> {out}")
    return 0


def _load_model_file(path: Path):
    """A model artifact is either a mixture JSON or a network checkpoint;
    sniff the first line, which is a JSON object in both formats."""
    if not path.exists():
        raise UsageError(f"model file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.readline()
    try:
        header = json.loads(head.decode("utf-8", errors="replace"))
    except json.JSONDecodeError:
        header = None
    if isinstance(header, dict) and header.get("magic") == "sgm-checkpoint-v1":
        from .network import load_checkpoint

        return load_checkpoint(path)
    return load_mixture(path)


def _cmd_eval(args) -> int:
    from .metrics import EvalReport
    from .network import ImogNetwork

    model = _load_model_file(Path(args.model))
    if isinstance(model, ImogNetwork):
        if model.cond_dim != 0:
            raise UsageError("eval scores unconditional density models only")
        model = materialize_mixture(
            model, args.material_draws, np.random.default_rng(args.seed))
    elif not hasattr(model, "weights"):
        raise UsageError("eval needs a density model (mixture JSON or scan checkpoint)")
    data = load_samples(Path(args.data))
    spec = load_spec(Path(args.centers))
    centers = np.asarray(spec.centers, dtype=float)
    report = EvalReport(
        ce=ce_score(model, data),
        vr_tight=validation_rate(model.means, model.weights, centers, 1e-4),
        vr_loose=validation_rate(model.means, model.weights, centers, 1e-2),
        h2=renyi2_entropy(model),
        notes={"n_components": model.n_components},
    )
    out = _out_dir(args)
    payload = {"ce": report.ce, "vr_tight": report.vr_tight,
               "vr_loose": report.vr_loose, "h2": report.h2, "notes": report.notes}
    _write_json(out / "eval.json", payload)
    _write_manifest(out, "eval",
                    {"material_draws": args.material_draws, "seed": args.seed},
                    [Path(args.model), Path(args.data), Path(args.centers)])
    print(json.dumps(payload, sort_keys=True, default=_json_default))
    return 0


def _spec_mixture(path: Path):
    """Load a dataset spec or plain mixture file; return (pdf, bounds,
    gaussian FiniteMixture or None, spec object or None)."""
    if not path.exists():
        raise UsageError(f"spec file not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"spec file is not valid JSON: {exc}") from exc
    from .mixture import eval_density, normalize

    if isinstance(obj, dict) and "components" in obj:
        m = normalize(load_mixture(path))
        stds = np.sqrt(m.vars)
        lo = (m.means - 8.0 * stds).min(axis=0)
        hi = (m.means + 8.0 * stds).max(axis=0)
        bounds = [(float(a), float(b)) for a, b in zip(lo, hi)]
        return (lambda pts: eval_density(m, pts)), bounds, m, None
    spec = load_spec(path)
    if hasattr(spec, "pdf"):  # planar mixture family
        gaussian = None
        if all(f == "gaussian" for f in spec.families):
            gaussian = normalize(spec.as_finite_mixture())
        return spec.pdf, spec.box(), gaussian, spec
    raise UsageError("chain specs support only --quantity cond-norm")


def _cmd_oracle(args) -> int:
    out = _out_dir(args)
    path = Path(args.spec)
    report: dict = {"quantity": args.quantity}
    if args.quantity == "cond-norm":
        spec = load_spec(path)
        if not hasattr(spec, "conditional_pdf"):
            raise UsageError("cond-norm needs a chain spec")
        joint = spec.joint_pdf
        lo, hi = spec.y_box()
        norm = oracle_conditional_norm(joint, [(lo, hi), (lo, hi)], args.resolution)
        report["cond_norm_quadrature"] = norm
        report["h2_cond_quadrature"] = float(-np.log(norm))
    else:
        pdf, bounds, gaussian, _ = _spec_mixture(path)
        if args.quantity in ("h2", "norm"):
            norm_quad = grid_integrate(lambda pts: pdf(pts) ** 2, bounds,
                                       resolution=args.resolution)
            report["norm_quadrature"] = norm_quad
            report["h2_quadrature"] = float(-np.log(norm_quad))
            if gaussian is not None:
                report["norm_closed"] = quadratic_norm(gaussian)
                report["h2_closed"] = renyi2_entropy(gaussian)
                report["h2_rel_err"] = abs(
                    report["h2_quadrature"] - report["h2_closed"]
                ) / abs(report["h2_closed"])
        elif args.quantity == "qmi":
            if len(bounds) != 2:
                raise UsageError("qmi oracle is defined for 2-D specs")
            if gaussian is None:
                raise UsageError("qmi oracle needs a Gaussian spec")
            from .mixture import cs_qmi as _cs_qmi

            report["qmi_closed_bits"] = _cs_qmi(gaussian, [0], [1])
            report["d2_half_bits"] = _oracle_qmi_d2(pdf, bounds, args.resolution)
        else:
            raise UsageError(f"unknown quantity {args.quantity!r}")
    _write_json(out / "oracle.json", report)
    _write_manifest(out, "oracle",
                    {"quantity": args.quantity, "resolution": args.resolution},
                    [path])
    print(json.dumps(report, sort_keys=True))
    return 0


def _oracle_qmi_d2(pdf, bounds, resolution: int) -> float:
    """Half the second-order divergence between the joint and the product of
    its marginals, in bits, by 2-D quadrature."""
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    n = resolution
    x = x_lo + (np.arange(n) + 0.5) * (x_hi - x_lo) / n
    y = y_lo + (np.arange(n) + 0.5) * (y_hi - y_lo) / n
    dx = (x_hi - x_lo) / n
    dy = (y_hi - y_lo) / n
    grid = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1).reshape(-1, 2)
    p = pdf(grid).reshape(n, n)
    px = p.sum(axis=1) * dy
    py = p.sum(axis=0) * dx
    prod = px[:, None] * py[None, :]
    live = p > p.max() * 1e-15
    if np.any(prod[live] <= 0.0):
        raise UsageError("product of marginals vanishes where the joint has mass")
    ratio = np.zeros_like(p)
    ratio[live] = p[live] ** 2 / prod[live]
    d2 = float(np.log(ratio.sum() * dx * dy))
    return 0.5 * d2 / _LN2


_LN2 = float(np.log(2.0))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgm", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a benchmark dataset and its spec")
    p.add_argument("--recipe", required=True, choices=("planar", "generalized", "chain"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=200_000, dest="n_samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-density", help="fit the generative density model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--material-draws", type=int, default=10, dest="material_draws")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_density)

    p = sub.add_parser("train-conditional", help="fit the conditional density model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_conditional)

    p = sub.add_parser("estimate-mi", help="three dependence estimates from pairs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--material-draws", type=int, default=10, dest="material_draws")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_estimate_mi)

    p = sub.add_parser("train-gan2d", help="planar adversarial toy")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ood", help="CSV of off-distribution probe points")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_gan2d)

    p = sub.add_parser("eval", help="score a density model against data and centers")
    p.add_argument("--model", required=True,
                   help="mixture JSON or scan-network checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--centers", required=True, help="dataset spec JSON")
    p.add_argument("--material-draws", type=int, default=100, dest="material_draws",
                   help="noise draws when freezing a checkpoint into components")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="quadrature ground truth for a spec")
    p.add_argument("--spec", required=True, help="dataset spec JSON or mixture JSON")
    p.add_argument("--quantity", required=True,
                   choices=("h2", "norm", "qmi", "cond-norm"))
    p.add_argument("--resolution", type=int, default=1001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDivergedError, DegenerateModelError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
