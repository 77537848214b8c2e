"""Command-line entry point: simulate, select, refit, predict, stability.

Exit codes are a stable contract for scripting: 0 success, 2 usage
error, 1 runtime error.  Every command writes a manifest recording the
resolved configuration and input digests; numeric outputs embed the
manifest digest and contain no timestamps, so identical configurations
reproduce byte-identical files.
"""

from __future__ import annotations

import csv
import functools
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import __version__
from .data import load_csv_dataset, save_csv_dataset, standardize_columns
from .errors import ProbitselError
from .manifest import RunManifest, sha256_file
from .params import (
    MODE_FIXED,
    MODE_MIXED,
    BlockDiagonalCov,
    DiagonalCov,
    GeneralCov,
    HyperParams,
    hp_from_dict,
    hp_to_dict,
)
from .predictor import evaluate, load_model, predict_rows, refit_fixed_gamma, save_model
from .sampler import load_run_report, report_to_dict, run_chain
from .selection import cw_rel, rank_selections, select_top
from .simulate import U_PRESETS, SimConfig, generate, save_truth, split_half_by_group


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def runtime_errors(fn):
    """Map domain errors to exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProbitselError as exc:
            _fail(str(exc))
        except ValueError as exc:
            _fail(str(exc))

    return wrapper


def _parse_kv_file(path) -> dict[str, str]:
    """key=value lines; blank lines and #-comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _merge_config(ctx: click.Context, config_path) -> dict:
    """Resolve option values: explicit flags beat the config file, the
    config file beats defaults."""
    params = dict(ctx.params)
    if not config_path:
        return params
    cfg = _parse_kv_file(config_path)
    by_name = {p.name: p for p in ctx.command.params}
    consumed = set()
    for key, raw in cfg.items():
        name = key.replace("-", "_")
        if name not in by_name:
            raise click.UsageError(f"{config_path}: unknown option {key!r}")
        consumed.add(key)
        if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE:
            continue
        params[name] = by_name[name].type.convert(raw, by_name[name], ctx)
    return params


def _comma_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"{what} must be comma-separated numbers, got {text!r}")


def _comma_ints(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"{what} must be comma-separated integers, got {text!r}")


def _csv_header(path) -> list[str]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            return []


def _resolve_group_column(ctx, path, group_col: str):
    """Use the group column when present; a silently absent *default*
    name means a fixed-effects dataset, an absent explicit name is an
    error surfaced by the loader."""
    header = _csv_header(path)
    if group_col in header:
        return group_col
    if ctx.get_parameter_source("group_col") == ParameterSource.COMMANDLINE:
        return group_col  # loader raises with a precise message
    return None


def _load(ctx, path, y_col, group_col, standardize):
    data = load_csv_dataset(
        path, y_column=y_col, group_column=_resolve_group_column(ctx, path, group_col)
    )
    return standardize_columns(data) if standardize else data


def _build_cov(params):
    blocks = params.get("blocks")
    sizes = _comma_ints(blocks, "--blocks") if blocks else None
    kind = params["cov"]
    if kind == "diag":
        return DiagonalCov(shape=params["ig_a"], scale=params["ig_b"], block_sizes=sizes)
    if kind == "block":
        return BlockDiagonalCov(
            block_sizes=sizes, scale_matrices=params["iw_psi"], dof=params["iw_m"]
        )
    return GeneralCov(scale_matrix=params["iw_psi"], dof=params["iw_m"])


def _build_hp(params) -> HyperParams:
    try:
        return HyperParams(
            c=params["c"],
            include_prob=params["pi"],
            num_selected=params["num_selected"],
            swap_size=params["swap"],
            mh_iters=params["mh_iters"],
            total_iters=params["iters"],
            burn_in=params["burnin"],
            seed=params["seed"],
            mode=MODE_MIXED if params["mode"] == "mixed" else MODE_FIXED,
            cov=_build_cov(params),
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _write_atomic(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def _write_ranking_csv(ranking, path: Path, digest: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest_digest={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["feature", "count", "frequency"])
        for entry in ranking.entries:
            writer.writerow([entry.feature, entry.count, repr(entry.frequency)])


def _parse_rule(rule: str):
    """'top:K' or 'count:T' into select_top keyword arguments."""
    try:
        kind, value = rule.split(":", 1)
        value = int(value)
    except ValueError:
        raise click.UsageError(f"--rule must be top:K or count:T, got {rule!r}")
    if kind == "top":
        return {"top_k": value}
    if kind == "count":
        return {"min_count": value}
    raise click.UsageError(f"--rule must be top:K or count:T, got {rule!r}")


def data_options(fn):
    fn = click.option("--y-col", default="y", show_default=True, help="Outcome column name.")(fn)
    fn = click.option(
        "--group-col",
        default="group",
        show_default=True,
        help="Group column for the random effect (absent default name means no groups).",
    )(fn)
    fn = click.option("--standardize", is_flag=True, help="Z-score the feature columns.")(fn)
    return fn


def chain_options(fn):
    opts = [
        click.option("--c", "c", type=float, default=50.0, show_default=True,
                     help="Variable selection coefficient of the coefficient prior."),
        click.option("--num-selected", type=int, default=30, show_default=True,
                     help="Features kept selected at every iteration."),
        click.option("--swap", type=int, default=10, show_default=True,
                     help="Mask components exchanged per proposal (even)."),
        click.option("--mh-iters", type=int, default=500, show_default=True,
                     help="Inner MH iterations per Gibbs sweep."),
        click.option("--iters", type=int, default=60000, show_default=True,
                     help="Total Gibbs iterations."),
        click.option("--burnin", type=int, default=30000, show_default=True,
                     help="Burn-in iterations."),
        click.option("--pi", type=float, default=0.5, show_default=True,
                     help="Prior inclusion probability (cancels under the fixed-size proposal)."),
        click.option("--cov", type=click.Choice(["general", "block", "diag"]),
                     default="diag", show_default=True, help="Random-effect covariance structure."),
        click.option("--iw-psi", type=float, default=1.0, show_default=True,
                     help="Inverse-Wishart scale (that multiple of the identity)."),
        click.option("--iw-m", type=float, default=None,
                     help="Inverse-Wishart degrees of freedom (default q+2)."),
        click.option("--ig-a", type=float, default=2.0, show_default=True,
                     help="Inverse-gamma shape for diagonal blocks."),
        click.option("--ig-b", type=float, default=3.0, show_default=True,
                     help="Inverse-gamma scale for diagonal blocks."),
        click.option("--blocks", default=None,
                     help="Comma-separated random-effect block sizes (default one block)."),
        click.option("--mode", type=click.Choice(["mixed", "fixed"]), default="mixed",
                     show_default=True, help="Mixed model or fixed effects only."),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="probitsel")
def main():
    """Bayesian variable selection for probit mixed regression."""


@main.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@chain_options
@data_options
@click.option("--out-dir", type=click.Path(file_okay=False), default="select_out",
              show_default=True)
@click.option("--traces", is_flag=True, help="Record per-iteration diagnostics.")
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="key=value file merged under explicit flags.")
@click.pass_context
@runtime_errors
def select(ctx, **_kwargs):
    """Run the selection chain and write counts, ranking, and figures."""
    params = _merge_config(ctx, ctx.params["config_path"])
    hp = _build_hp(params)
    data = _load(ctx, params["data_path"], params["y_col"], params["group_col"],
                 params["standardize"])

    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="select",
        args={k: params[k] for k in (
            "c", "num_selected", "swap", "mh_iters", "iters", "burnin", "pi", "cov",
            "iw_psi", "iw_m", "ig_a", "ig_b", "blocks", "mode", "seed", "y_col",
            "group_col", "standardize")},
        seed=hp.seed,
        version=__version__,
    )
    manifest.add_input(params["data_path"])
    if params["config_path"]:
        manifest.add_input(params["config_path"])

    start = time.perf_counter()
    report = run_chain(data, hp, collect_traces=params["traces"])
    ranking = rank_selections(report)

    report_path = out_dir / "run_report.json"
    ranking_path = out_dir / "ranking.csv"
    from .sampler import save_run_report

    _write_atomic(report_path, lambda p: save_run_report(report, p, manifest.digest))
    _write_atomic(ranking_path, lambda p: _write_ranking_csv(ranking, p, manifest.digest))
    manifest.add_output(report_path)
    manifest.add_output(ranking_path)
    if params["traces"]:
        traces_path = out_dir / "traces.csv"
        _write_atomic(traces_path, lambda p: _write_traces_csv(report, p, manifest.digest))
        manifest.add_output(traces_path)
    if params["plots"]:
        from .report import plot_selection_counts

        fig_path = out_dir / "selection_counts.png"
        plot_selection_counts(ranking, fig_path)
        manifest.add_output(fig_path)
    manifest.finish(time.perf_counter() - start)
    manifest.write(out_dir / "manifest.json")
    click.echo(
        f"selected counts written to {out_dir} "
        f"(accept rate {report.mh_accept_rate:.3f}, {report.wall_time:.1f}s)"
    )


def _write_traces_csv(report, path, digest):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest_digest={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "d_diag_sum", "beta_norm", "log_marginal"])
        tr = report.traces
        for t in range(tr.beta_norm.size):
            writer.writerow(
                [t + 1, repr(float(tr.d_diag_sum[t])), repr(float(tr.beta_norm[t])),
                 repr(float(tr.log_marginal[t]))]
            )


@main.command()
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--p", type=int, default=200, show_default=True,
              help="Number of features (desk scale; raise for the full-size benchmark).")
@click.option("--preset", type=click.Choice(sorted(U_PRESETS)), default="U1",
              show_default=True, help="Named random-effect offset vector.")
@click.option("--u", "u_levels", default=None,
              help="Comma-separated offsets overriding the preset.")
@click.option("--beta", default="-1,-1,1,1,2", show_default=True,
              help="True nonzero coefficients.")
@click.option("--beta-indices", default=None,
              help="Column indices of the true coefficients (default 0,1,2,...).")
@click.option("--group-sizes", default=None,
              help="Comma-separated observations per group (default equal split).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="sim_data.csv",
              show_default=True)
@click.option("--split-half", is_flag=True,
              help="Also write group-balanced half splits (train/validation).")
@runtime_errors
def simulate(n, p, preset, u_levels, beta, beta_indices, group_sizes, seed, out_path,
             split_half):
    """Generate a synthetic benchmark dataset with known ground truth."""
    offsets = _comma_floats(u_levels, "--u") if u_levels else U_PRESETS[preset]
    beta_values = _comma_floats(beta, "--beta")
    support = (
        _comma_ints(beta_indices, "--beta-indices")
        if beta_indices
        else tuple(range(len(beta_values)))
    )
    if group_sizes:
        sizes = _comma_ints(group_sizes, "--group-sizes")
    else:
        k = len(offsets)
        if n % k != 0:
            raise click.UsageError(
                f"n = {n} does not divide evenly into {k} groups; give --group-sizes"
            )
        sizes = (n // k,) * k
    config = SimConfig(
        n=n, p=p, support=support, beta_values=beta_values, u_levels=offsets,
        group_sizes=sizes, seed=seed,
    )
    data, truth = generate(config)

    out_path = Path(out_path)
    manifest = RunManifest(
        command="simulate",
        args={"n": n, "p": p, "u_levels": list(offsets), "beta": list(beta_values),
              "support": list(support), "group_sizes": list(sizes)},
        seed=seed,
        version=__version__,
    )
    save_csv_dataset(data, out_path)
    truth_path = out_path.with_suffix(".truth.json")
    save_truth(truth, truth_path)
    manifest.add_output(out_path)
    manifest.add_output(truth_path)
    if split_half:
        train, val = split_half_by_group(data, seed)
        train_path = out_path.with_name(out_path.stem + "_train.csv")
        val_path = out_path.with_name(out_path.stem + "_val.csv")
        save_csv_dataset(train, train_path)
        save_csv_dataset(val, val_path)
        manifest.add_output(train_path)
        manifest.add_output(val_path)
    manifest.finish(0.0)
    manifest.write(out_path.with_suffix(".manifest.json"))
    click.echo(f"simulated dataset written to {out_path}")


@main.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--features", default=None, help="Comma-separated feature names.")
@click.option("--features-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="File with one feature name per line.")
@click.option("--ranking", "ranking_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="run_report.json to pick features from (with --rule).")
@click.option("--rule", default="top:5", show_default=True, help="top:K or count:T.")
@chain_options
@data_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="model.json",
              show_default=True)
@click.pass_context
@runtime_errors
def refit(ctx, **_kwargs):
    """Refit the probit (mixed) model on a fixed feature subset."""
    params = dict(ctx.params)
    sources = [s for s in (params["features"], params["features_file"],
                           params["ranking_path"]) if s]
    if len(sources) != 1:
        raise click.UsageError(
            "give exactly one of --features, --features-file, or --ranking"
        )
    if params["features"]:
        features = tuple(f.strip() for f in params["features"].split(",") if f.strip())
    elif params["features_file"]:
        with open(params["features_file"], "r", encoding="utf-8") as fh:
            features = tuple(line.strip() for line in fh if line.strip())
    else:
        report = load_run_report(params["ranking_path"])
        features = select_top(rank_selections(report), **_parse_rule(params["rule"]))

    hp = _build_hp(params)
    data = _load(ctx, params["data_path"], params["y_col"], params["group_col"],
                 params["standardize"])
    manifest = RunManifest(
        command="refit",
        args={"features": list(features), "c": params["c"], "iters": params["iters"],
              "burnin": params["burnin"], "cov": params["cov"], "mode": params["mode"],
              "ig_a": params["ig_a"], "ig_b": params["ig_b"], "iw_psi": params["iw_psi"],
              "iw_m": params["iw_m"], "blocks": params["blocks"], "seed": params["seed"],
              "standardize": params["standardize"]},
        seed=hp.seed,
        version=__version__,
    )
    manifest.add_input(params["data_path"])

    start = time.perf_counter()
    model = refit_fixed_gamma(data, features, hp)
    out_path = Path(params["out_path"])
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_path, lambda p: save_model(model, p, manifest.digest))
    manifest.add_output(out_path)
    manifest.finish(time.perf_counter() - start)
    manifest.write(out_path.with_suffix(".manifest.json"))
    terms = ", ".join(
        f"{f}={b:+.4f}" for f, b in zip(model.features, model.beta_hat)
    )
    click.echo(f"fitted model written to {out_path}")
    click.echo(f"intercept={model.intercept:+.4f}, {terms}")
    if model.u_hat:
        effects = ", ".join(f"{g}={v:+.4f}" for g, v in model.u_hat.items())
        click.echo(f"group effects: {effects}")


@main.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--zone", default=None,
              help="lo,hi probability band labelled undetermined (e.g. 0.1,0.9).")
@click.option("--ignore-groups", is_flag=True,
              help="Predict without the fitted group effects.")
@data_options
@click.option("--out-dir", type=click.Path(file_okay=False), default="predict_out",
              show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.pass_context
@runtime_errors
def predict(ctx, data_path, model_path, zone, ignore_groups, y_col, group_col,
            standardize, out_dir, plots):
    """Predict class probabilities and labels for a dataset."""
    zone_pair = None
    if zone:
        parts = _comma_floats(zone, "--zone")
        if len(parts) != 2 or not parts[0] < 0.5 < parts[1]:
            raise click.UsageError(f"--zone must be lo,hi straddling 0.5, got {zone!r}")
        zone_pair = (parts[0], parts[1])
    model = load_model(model_path)
    data = _load(ctx, data_path, y_col, group_col, standardize)
    use_groups = not ignore_groups

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="predict",
        args={"zone": zone, "ignore_groups": ignore_groups, "y_col": y_col,
              "group_col": group_col, "standardize": standardize},
        seed=None,
        version=__version__,
    )
    manifest.add_input(data_path)
    manifest.add_input(model_path)

    start = time.perf_counter()
    preds = predict_rows(model, data, zone=zone_pair, use_groups=use_groups)
    metrics = evaluate(model, data, zone=zone_pair, use_groups=use_groups)

    pred_path = out_dir / "predictions.csv"

    def _write_preds(path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# manifest_digest={manifest.digest}\n")
            writer = csv.writer(fh)
            writer.writerow(["row", "prob_positive", "label", "used_random_effect"])
            for i, pr in enumerate(preds):
                writer.writerow(
                    [i, repr(pr.prob_positive), pr.label, int(pr.used_random_effect)]
                )

    _write_atomic(pred_path, _write_preds)
    manifest.add_output(pred_path)

    metrics_path = out_dir / "metrics.json"

    def _write_metrics(path):
        payload = {
            "format": "probitsel.metrics",
            "version": 1,
            "manifest_digest": manifest.digest,
            "tp": metrics.tp, "tn": metrics.tn, "fp": metrics.fp, "fn": metrics.fn,
            "undetermined": metrics.undetermined, "n": metrics.n,
            "sensitivity": None if np.isnan(metrics.sensitivity) else metrics.sensitivity,
            "specificity": None if np.isnan(metrics.specificity) else metrics.specificity,
            "misclassified": metrics.misclassified,
            "undetermined_fraction": metrics.undetermined_fraction,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    _write_atomic(metrics_path, _write_metrics)
    manifest.add_output(metrics_path)

    if plots:
        from .report import plot_probability_histogram

        fig_path = out_dir / "probabilities.png"
        plot_probability_histogram(
            [pr.prob_positive for pr in preds], fig_path, zone=zone_pair
        )
        manifest.add_output(fig_path)
    manifest.finish(time.perf_counter() - start)
    manifest.write(out_dir / "manifest.json")
    click.echo(
        f"{metrics.misclassified} misclassified of {metrics.n} "
        f"({metrics.undetermined} undetermined); outputs in {out_dir}"
    )


def _sweep_worker(payload):
    """Run one sweep chain in a separate process."""
    import pickle

    data = pickle.loads(payload["data"])
    hp = hp_from_dict(payload["hp"])
    report = run_chain(data, hp, stream_id=payload["stream_id"])
    return payload["stream_id"], report_to_dict(report)


def _expand_sweep(cfg: dict[str, str]) -> list[dict[str, str]]:
    """Cartesian product over comma-separated values, file order."""
    keys = list(cfg)
    choices = [cfg[k].split(",") for k in keys]
    return [
        {k: v.strip() for k, v in zip(keys, combo)}
        for combo in itertools.product(*choices)
    ]


@main.command()
@click.argument("reports", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--rule", default="top:5", show_default=True,
              help="Per-run subset rule: top:K or count:T.")
@click.option("--sweep", "sweep_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="key=value sweep spec; comma lists fan out into runs.")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Dataset for --sweep runs.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent sweep chains.")
@chain_options
@data_options
@click.option("--out-dir", type=click.Path(file_okay=False), default="stability_out",
              show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@click.pass_context
@runtime_errors
def stability(ctx, **_kwargs):
    """Stability of selected subsets across runs (consistency measure).

    Analyze existing run reports, or run a sweep over hyperparameter
    combinations first (one independent random stream per run).
    """
    params = dict(ctx.params)
    reports = list(params["reports"])
    sweep_path = params["sweep_path"]
    if reports and sweep_path:
        raise click.UsageError("give report files or --sweep, not both")
    if not reports and not sweep_path:
        raise click.UsageError("give at least 2 report files or a --sweep spec")

    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rule_kwargs = _parse_rule(params["rule"])
    manifest = RunManifest(
        command="stability",
        args={"rule": params["rule"], "reports": [str(r) for r in reports],
              "sweep": sweep_path, "seed": params["seed"]},
        seed=params["seed"],
        version=__version__,
    )
    start = time.perf_counter()

    if sweep_path:
        if not params["data_path"]:
            raise click.UsageError("--sweep needs --data")
        manifest.add_input(params["data_path"])
        manifest.add_input(sweep_path)
        data = _load(ctx, params["data_path"], params["y_col"], params["group_col"],
                     params["standardize"])
        combos = _expand_sweep(_parse_kv_file(sweep_path))
        if len(combos) < 2:
            _fail(f"sweep spec expands to {len(combos)} run(s); need at least 2")
        run_reports = _run_sweep(ctx, params, data, combos, out_dir, manifest)
    else:
        if len(reports) < 2:
            _fail(f"need at least 2 run reports, got {len(reports)}")
        for r in reports:
            manifest.add_input(r)
        run_reports = [load_run_report(r) for r in reports]

    p_totals = {len(r.feature_names) for r in run_reports}
    if len(p_totals) != 1:
        _fail(f"runs disagree on the feature count: {sorted(p_totals)}")
    p_total = p_totals.pop()
    subsets = [select_top(rank_selections(r), **rule_kwargs) for r in run_reports]
    value = cw_rel(subsets, p_total)

    from collections import Counter

    overlap = Counter()
    for s in subsets:
        overlap.update(s)

    summary_path = out_dir / "stability.json"

    def _write_summary(path):
        payload = {
            "format": "probitsel.stability",
            "version": 1,
            "manifest_digest": manifest.digest,
            "cw_rel": value,
            "n_runs": len(subsets),
            "rule": params["rule"],
            "p_total": p_total,
            "subsets": [list(s) for s in subsets],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    _write_atomic(summary_path, _write_summary)
    manifest.add_output(summary_path)

    overlap_path = out_dir / "overlap.csv"

    def _write_overlap(path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# manifest_digest={manifest.digest}\n")
            writer = csv.writer(fh)
            writer.writerow(["feature", "runs_containing"])
            for feat, cnt in sorted(overlap.items(), key=lambda kv: (-kv[1], kv[0])):
                writer.writerow([feat, cnt])

    _write_atomic(overlap_path, _write_overlap)
    manifest.add_output(overlap_path)

    if params["plots"]:
        from .report import plot_run_overlap

        fig_path = out_dir / "overlap.png"
        plot_run_overlap(dict(overlap), len(subsets), fig_path)
        manifest.add_output(fig_path)
    manifest.finish(time.perf_counter() - start)
    manifest.write(out_dir / "manifest.json")
    click.echo(f"cw_rel = {value:.3f} over {len(subsets)} runs; outputs in {out_dir}")


def _run_sweep(ctx, params, data, combos, out_dir: Path, manifest: RunManifest):
    """Execute sweep chains, one independent stream per run."""
    import pickle

    from .sampler import save_run_report

    hp_dicts = []
    for combo in combos:
        run_params = dict(params)
        for key, raw in combo.items():
            name = key.replace("-", "_")
            by_name = {p.name: p for p in ctx.command.params}
            if name not in by_name:
                raise click.UsageError(f"sweep key {key!r} is not a chain option")
            run_params[name] = by_name[name].type.convert(raw, by_name[name], ctx)
        hp_dicts.append(hp_to_dict(_build_hp(run_params)))

    results: dict[int, dict] = {}
    if params["jobs"] > 1:
        blob = pickle.dumps(data)
        payloads = [
            {"data": blob, "hp": hp_d, "stream_id": i}
            for i, hp_d in enumerate(hp_dicts)
        ]
        with ProcessPoolExecutor(max_workers=params["jobs"]) as pool:
            for stream_id, rep_dict in pool.map(_sweep_worker, payloads):
                results[stream_id] = rep_dict
    else:
        for i, hp_d in enumerate(hp_dicts):
            report = run_chain(data, hp_from_dict(hp_d), stream_id=i)
            results[i] = report_to_dict(report)

    run_reports = []
    for i in sorted(results):
        run_dir = out_dir / f"run_{i:03d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / "run_report.json"

        def _write(p, payload=results[i]):
            payload = dict(payload)
            payload["manifest_digest"] = manifest.digest
            with open(p, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")

        _write_atomic(path, _write)
        manifest.add_output(path)
        run_reports.append(load_run_report(path))
    return run_reports


if __name__ == "__main__":
    main()
