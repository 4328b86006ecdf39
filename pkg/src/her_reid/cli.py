"""Command-line front end.

    her [--seed N] [--config FILE.json] [--threads N] COMMAND ...

Commands: fit, eval, active-sim, bench, synth, serve, update. Every
command prints a small aligned text table and writes the same numbers to
a JSON report next to its primary output (or an explicit --report path).
A JSON config file supplies defaults for any long flag, either at the top
level or nested under the command name; explicit flags win. All
randomness flows from --seed. Errors exit nonzero with a one-line
diagnostic on stderr.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import HerError, InvalidInputError, InvalidParameterError

DEFAULT_LISTEN = "127.0.0.1:8330"
ENV_PREFIX = "HER_"


def _configure_threads(count):
    if count is None:
        return
    if count < 1:
        raise InvalidParameterError("--threads must be >= 1")
    os.environ["OMP_NUM_THREADS"] = str(count)
    os.environ["OPENBLAS_NUM_THREADS"] = str(count)
    os.environ["MKL_NUM_THREADS"] = str(count)
    try:
        import threadpoolctl

        # Keep a reference so the limit stays active for the process.
        global _THREAD_LIMIT
        _THREAD_LIMIT = threadpoolctl.threadpool_limits(limits=count)
    except ImportError:
        pass


def _load_config(path):
    if not path:
        return {}
    if not os.path.exists(path):
        raise InvalidInputError(f"config file not found: {path}")
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidInputError("config file must hold a JSON object")
    return cfg


class _Resolver:
    """Layered option lookup: explicit flag, then config, then default."""

    def __init__(self, args, config, command):
        self.args = args
        self.config = config
        self.section = config.get(command, {})
        if not isinstance(self.section, dict):
            self.section = {}

    def get(self, key, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.section:
            return self.section[key]
        if key in self.config and not isinstance(self.config[key], dict):
            return self.config[key]
        return default


def _write_report(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"report written to {path}")


def _report_path(resolver, default_name):
    return resolver.get("report", default_name)


def _parse_floats(text):
    return [float(p) for p in str(text).split(",") if p.strip()]


def _parse_ints(text):
    return [int(p) for p in str(text).split(",") if p.strip()]


def _load_feature_file(path):
    """Load one feature file, or several comma-separated ones concatenated."""
    from .core import merge_views
    from .data import import_text, load_features

    parts = [p.strip() for p in str(path).split(",") if p.strip()]
    if not parts:
        raise InvalidInputError("empty feature file path")
    loaded = []
    for part in parts:
        if not os.path.exists(part):
            raise InvalidInputError(f"feature file not found: {part}")
        loaded.append(import_text(part) if part.endswith(".txt") else load_features(part))
    merged = loaded[0]
    for extra in loaded[1:]:
        merged = merge_views(merged, extra)
    return merged


def _table(headers, rows):
    widths = [
        max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
        for i, h in enumerate(headers)
    ]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    print(line(headers))
    for r in rows:
        print(line(r))


def _cross_validate_lambda(features, grid, seed, kernel_spec):
    """Pick the ridge weight by identity-disjoint 3-fold top-1 rate."""
    from .core import PROBE, fit_her_dual, fit_her_primal
    from .evaluation import compute_cmc

    identities = np.unique(features.labels)
    if identities.size < 3:
        raise InvalidInputError("cross-validation needs at least three identities")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(identities)
    folds = [np.sort(perm[i::3]) for i in range(3)]

    best_lam, best_rate = None, -1.0
    rates = {}
    for lam in grid:
        fold_rates = []
        for fold_ids in folds:
            held = np.isin(features.labels, fold_ids)
            train = features.take(np.flatnonzero(~held))
            probe_idx = np.flatnonzero(held & (features.views == PROBE))
            gallery_idx = np.flatnonzero(held & (features.views != PROBE))
            if probe_idx.size == 0 or gallery_idx.size == 0:
                raise InvalidInputError(
                    "every cross-validation fold needs probe and gallery images"
                )
            if kernel_spec is None:
                model = fit_her_primal(train, lam)
            else:
                model = fit_her_dual(train, lam, kernel_spec)
            curve = compute_cmc(
                model, features.take(probe_idx), features.take(gallery_idx)
            )
            fold_rates.append(curve.rank(1))
        rates[lam] = float(np.mean(fold_rates))
        if rates[lam] > best_rate:
            best_lam, best_rate = lam, rates[lam]
    return best_lam, rates


def cmd_fit(args, config):
    import time

    from .core import KernelSpec, fit_her_dual, fit_her_primal, normal_equation_residual
    from .data import save_model

    r = _Resolver(args, config, "fit")
    features = _load_feature_file(r.get("features"))
    seed = r.get("seed", 0)
    kernel_kind = r.get("kernel")
    kernel_spec = None
    if kernel_kind and kernel_kind != "linear-primal":
        bandwidth = r.get("bandwidth")
        kernel_spec = KernelSpec(
            kernel_kind, sigma_sq=float(bandwidth) if bandwidth else None
        )

    lam = r.get("lam")
    cv_rates = None
    if r.get("cross_validate"):
        grid = _parse_floats(r.get("lambda_grid") or "") or list(
            np.logspace(-3, 3, 7)
        )
        lam, cv_rates = _cross_validate_lambda(features, grid, seed, kernel_spec)
        print(f"cross-validation selected ridge weight {lam:g}")
    if lam is None:
        raise InvalidInputError("provide --lambda or --cross-validate")
    lam = float(lam)

    t0 = time.perf_counter()
    if kernel_spec is None:
        model = fit_her_primal(features, lam, incremental=bool(r.get("incremental")))
        residual = normal_equation_residual(model, features)
    else:
        model = fit_her_dual(features, lam, kernel_spec)
        residual = None
    elapsed = time.perf_counter() - t0

    out = r.get("out")
    if out:
        if kernel_spec is not None:
            raise InvalidInputError(
                "kernel models cannot be written to the binary model format; "
                "omit --out or fit the primal form"
            )
        save_model(model, out)
        print(f"model written to {out}")

    rows = [
        ["samples", features.sample_count],
        ["dimension", features.feature_dim],
        ["classes", features.class_count],
        ["ridge weight", f"{lam:g}"],
        ["fit seconds", f"{elapsed:.4f}"],
    ]
    if residual is not None:
        rows.append(["relative residual", f"{residual:.3e}"])
    _table(["quantity", "value"], rows)

    payload = {
        "samples": int(features.sample_count),
        "dimension": int(features.feature_dim),
        "classes": int(features.class_count),
        "lambda": lam,
        "kernel": kernel_kind or "linear-primal",
        "elapsed_seconds": elapsed,
        "residual": residual,
        "model_path": out,
        "cross_validation": {str(k): v for k, v in (cv_rates or {}).items()} or None,
    }
    _write_report(
        _report_path(r, (out + ".report.json") if out else "fit.report.json"), payload
    )
    return 0


def cmd_eval(args, config):
    from .data import load_model
    from .evaluation import compute_cmc

    r = _Resolver(args, config, "eval")
    model = load_model(r.get("model"))
    probe = _load_feature_file(r.get("probe"))
    gallery = _load_feature_file(r.get("gallery"))
    ranks = _parse_ints(r.get("ranks") or "1,5,10,20")
    curve = compute_cmc(model, probe, gallery)

    _table(
        ["rank"] + [f"R{k}" for k in ranks],
        [["match%"] + [f"{100 * curve.rank(k):.1f}" for k in ranks]],
    )
    payload = {
        "ranks": ranks,
        "rates": [curve.rank(k) for k in ranks],
        "probe_count": curve.probe_count,
        "gallery_count": int(curve.rank_rates.size),
        "curve": [float(v) for v in curve.rank_rates],
    }
    _write_report(_report_path(r, "eval.report.json"), payload)
    return 0


def _load_sim_dataset(r):
    from .data import SyntheticSpec, generate_synthetic

    if r.get("features"):
        return _load_feature_file(r.get("features"))
    spec_json = r.get("synthetic")
    if spec_json:
        raw = json.loads(spec_json) if isinstance(spec_json, str) else spec_json
        raw.setdefault("seed", r.get("seed", 0))
        return generate_synthetic(SyntheticSpec(**raw))
    raise InvalidInputError("provide --features or --synthetic")


def cmd_active_sim(args, config):
    from .active import ActiveConfig, simulate_active_run

    r = _Resolver(args, config, "active-sim")
    dataset = _load_sim_dataset(r)
    budgets = _parse_ints(r.get("budgets") or "10,20,30,40,50,100")
    if any(b < 1 or b > 100 for b in budgets):
        raise InvalidParameterError("budgets are percentages in 1..100")
    policies = [p.strip() for p in (r.get("policies") or "joint-e2,random,density").split(",")]
    trials = int(r.get("trials", 5))
    seed = int(r.get("seed", 0))
    lam = float(r.get("lam") or 0.1)
    fractions = tuple(b / 100.0 for b in budgets)

    results = {}
    for policy in policies:
        cfg = ActiveConfig(
            policy=policy,
            lam=lam,
            budget_fraction=max(fractions),
            seed=seed,
            milestones=fractions,
            gallery_mode=r.get("gallery_mode", "full"),
        )
        results[policy] = simulate_active_run(dataset, cfg, trials=trials)

    headers = ["policy"] + [f"{b}%" for b in budgets]
    rows = []
    payload = {"budgets": budgets, "trials": trials, "policies": {}}
    for policy, result in results.items():
        mean_r1 = [result.mean_rank(1, f) for f in fractions]
        rows.append([policy] + [f"{100 * v:.1f}" for v in mean_r1])
        payload["policies"][policy] = {
            "mean_rank1": mean_r1,
            "per_trial_rank1": {
                str(b): [float(v) for v in result.rank_values(1, f)]
                for b, f in zip(budgets, fractions)
            },
        }
    print("mean top-1 match rate by labeling budget")
    _table(headers, rows)
    _write_report(_report_path(r, "active-sim.report.json"), payload)
    return 0


def cmd_bench(args, config):
    from .benchmarks import benchmark_update_vs_refit

    r = _Resolver(args, config, "bench")
    grid = []
    for part in str(r.get("grid") or "512x2000,1024x5000").split(","):
        d, _, n = part.strip().partition("x")
        grid.append((int(d), int(n)))
    rows = benchmark_update_vs_refit(
        grid=grid,
        lam=float(r.get("lam") or 1.0),
        seed=int(r.get("seed", 0)),
        update_reps=int(r.get("update_reps") or 9),
        refit_reps=int(r.get("refit_reps") or 5),
    )
    _table(
        ["dim", "samples", "update ms", "refit ms", "speedup"],
        [
            [
                row.feature_dim,
                row.sample_count,
                f"{1000 * row.update_median:.2f}",
                f"{1000 * row.refit_median:.2f}",
                f"{row.speedup:.1f}x",
            ]
            for row in rows
        ],
    )
    payload = [
        {
            "dim": row.feature_dim,
            "samples": row.sample_count,
            "update_median_seconds": row.update_median,
            "refit_median_seconds": row.refit_median,
            "speedup": row.speedup,
        }
        for row in rows
    ]
    _write_report(_report_path(r, "bench.report.json"), payload)
    return 0


def cmd_synth(args, config):
    from .data import SyntheticSpec, generate_synthetic, save_features

    r = _Resolver(args, config, "synth")
    spec = SyntheticSpec(
        identities=int(r.get("identities") or 100),
        dim=int(r.get("dim") or 64),
        images_per_view=int(r.get("images_per_view") or 1),
        center_spread=float(r.get("center_spread") if r.get("center_spread") is not None else 1.0),
        shift_magnitude=float(r.get("shift") if r.get("shift") is not None else 1.0),
        noise=float(r.get("noise") if r.get("noise") is not None else 0.1),
        appearance_clusters=int(r.get("clusters") or 0),
        cluster_spread=float(r.get("cluster_spread") if r.get("cluster_spread") is not None else 0.25),
        seed=int(r.get("seed", 0)),
    )
    data = generate_synthetic(spec)
    out_probe = r.get("out_probe") or "probe.herf"
    out_gallery = r.get("out_gallery") or "gallery.herf"
    dtype = r.get("dtype") or "f64"
    save_features(data.probe, out_probe, dtype=dtype)
    save_features(data.gallery, out_gallery, dtype=dtype)
    _table(
        ["file", "samples", "dim"],
        [
            [out_probe, data.probe.sample_count, data.probe.feature_dim],
            [out_gallery, data.gallery.sample_count, data.gallery.feature_dim],
        ],
    )
    payload = {
        "spec": {
            "identities": spec.identities,
            "dim": spec.dim,
            "images_per_view": spec.images_per_view,
            "center_spread": spec.center_spread,
            "shift_magnitude": spec.shift_magnitude,
            "noise": spec.noise,
            "appearance_clusters": spec.appearance_clusters,
            "cluster_spread": spec.cluster_spread,
            "seed": spec.seed,
        },
        "probe_path": out_probe,
        "gallery_path": out_gallery,
        "dtype": dtype,
    }
    _write_report(_report_path(r, out_probe + ".report.json"), payload)
    return 0


def cmd_serve(args, config):
    from .service import run_server

    r = _Resolver(args, config, "serve")
    listen = (
        getattr(args, "listen", None)
        or os.environ.get(ENV_PREFIX + "LISTEN")
        or r.get("listen")
        or DEFAULT_LISTEN
    )
    host, _, port = str(listen).partition(":")
    if not port or not port.isdigit():
        raise InvalidParameterError(f"--listen expects host:port, got {listen!r}")
    static_dir = (
        getattr(args, "static", None)
        or os.environ.get(ENV_PREFIX + "STATIC")
        or r.get("static")
    )
    print(f"serving on http://{host}:{port}")
    run_server(host=host, port=int(port), static_dir=static_dir)
    return 0


def _summarize_ids(ids, limit=8):
    if not ids:
        return "none"
    shown = ",".join(map(str, ids[:limit]))
    if len(ids) > limit:
        shown += f",... ({len(ids)} total)"
    return shown


def cmd_update(args, config):
    from .data import load_model, save_model
    from .incremental import UpdateBatch, apply_update_policy

    r = _Resolver(args, config, "update")
    model = load_model(r.get("model"))
    batch_data = _load_feature_file(r.get("batch"))
    batch = UpdateBatch(batch_data.values, batch_data.labels)
    threshold = r.get("scalar_threshold")
    model, report = apply_update_policy(
        model, batch, None if threshold is None else int(threshold)
    )
    out = r.get("out") or r.get("model")
    save_model(model, out)
    _table(
        ["quantity", "value"],
        [
            ["samples applied", report.samples_applied],
            ["classes added", report.classes_added],
            ["path", report.path],
            ["seconds", f"{report.elapsed:.4f}"],
            ["stale classes", _summarize_ids(report.stale_class_ids)],
        ],
    )
    payload = {
        "samples_applied": report.samples_applied,
        "classes_added": report.classes_added,
        "path": report.path,
        "elapsed_seconds": report.elapsed,
        "drift_estimate": report.drift_estimate,
        "stale_class_ids": report.stale_class_ids,
        "model_path": out,
    }
    _write_report(_report_path(r, out + ".report.json"), payload)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="her",
        description="closed-form cross-view identity matching: fit, update, "
        "evaluate, simulate annotation, serve",
    )
    parser.add_argument("--seed", type=int, default=None, help="master random seed")
    parser.add_argument("--config", default=None, help="JSON file with flag defaults")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread cap")

    # The same globals are accepted after the command name; SUPPRESS keeps a
    # pre-command value from being overwritten by the subparser default.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model from a feature file", parents=[common])
    p.add_argument("--features", required=True, help="HERF or .txt feature file")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--kernel", choices=["linear", "rbf"], default=None)
    p.add_argument("--bandwidth", type=float, default=None, help="rbf sigma^2")
    p.add_argument("--incremental", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--cross-validate", dest="cross_validate",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--lambda-grid", dest="lambda_grid", default=None,
                   help="comma-separated candidate ridge weights")
    p.add_argument("--out", default=None, help="model file to write")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("eval", help="rank probes against a gallery", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--ranks", default=None, help="comma-separated rank cutoffs")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("active-sim", help="simulate annotation policies", parents=[common])
    p.add_argument("--features", default=None, help="merged two-view feature file")
    p.add_argument("--synthetic", default=None, help="JSON generator spec")
    p.add_argument("--policies", default=None)
    p.add_argument("--budgets", default=None, help="percent budgets, e.g. 10,20,50,100")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--gallery-mode", dest="gallery_mode",
                   choices=["full", "unlabeled"], default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_active_sim)

    p = sub.add_parser("bench", help="time single-pair updates against refits", parents=[common])
    p.add_argument("--grid", default=None, help="dxn pairs, e.g. 512x2000,1024x5000")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--update-reps", dest="update_reps", type=int, default=None)
    p.add_argument("--refit-reps", dest="refit_reps", type=int, default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic two-view dataset", parents=[common])
    p.add_argument("--identities", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--images-per-view", dest="images_per_view", type=int, default=None)
    p.add_argument("--center-spread", dest="center_spread", type=float, default=None)
    p.add_argument("--shift", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--cluster-spread", dest="cluster_spread", type=float, default=None)
    p.add_argument("--out-probe", dest="out_probe", default=None)
    p.add_argument("--out-gallery", dest="out_gallery", default=None)
    p.add_argument("--dtype", choices=["f32", "f64"], default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("serve", help="run the annotation HTTP service", parents=[common])
    p.add_argument("--listen", default=None, help="host:port (env HER_LISTEN)")
    p.add_argument(
        "--static", default=None, help="directory of console assets to serve at /ui"
    )
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("update", help="apply a feature batch to a saved model", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--batch", required=True, help="HERF file of new samples")
    p.add_argument("--scalar-threshold", dest="scalar_threshold", type=int, default=None)
    p.add_argument("--out", default=None, help="output model file (default: in place)")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_update)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(
            args.config or os.environ.get(ENV_PREFIX + "CONFIG")
        )
        threads = args.threads
        if threads is None:
            threads = config.get("threads")
        env_threads = os.environ.get(ENV_PREFIX + "THREADS")
        if threads is None and env_threads:
            threads = int(env_threads)
        _configure_threads(threads)
        if getattr(args, "seed", None) is None and "seed" in config:
            args.seed = int(config["seed"])
        if args.seed is None:
            env_seed = os.environ.get(ENV_PREFIX + "SEED")
            args.seed = int(env_seed) if env_seed else 0
        return args.handler(args, config)
    except (HerError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
