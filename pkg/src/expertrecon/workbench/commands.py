"""The reconcile, score, sensitivity and delphi commands.

Each ``cmd_*`` function takes a :class:`RunConfig`, writes its artifacts
into ``config.out`` and returns a process exit code: 0 on success, 2 when a
run finished but a chain failed the convergence check.  Input problems
raise :class:`InputError` (mapped to exit code 1 by the CLI).
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import __version__
from .._io import atomic_write_text, fmt
from ..continuous import (
    proportion_event_probability,
    reconciled_quantiles,
    run_continuous,
    sample_theta,
)
from ..delphi import InputError, Study, anonymised_bundle, final_panel, read_round_csv, stopping_check
from ..diagnostics import PosteriorChain
from ..evaluate import (
    ScoredForecaster,
    avg_log_score,
    calibration_curve,
    equal_weights_cdf,
    fit_expert,
    reconciled_density,
)
from ..events import prior_correlation, prior_correlation_exact, reconcile_event, sensitivity_curve
from ..judgements import EventJudgement, PanelError, QuantileJudgement
from ..sll import OrderingError, QuantileTriplet
from ..standardize import DecisionMakerPrior, back_transform, dm_range_from_panel
from .config import RunConfig

__all__ = [
    "cmd_reconcile",
    "cmd_score",
    "cmd_sensitivity",
    "cmd_delphi",
    "load_panels",
    "EXIT_OK",
    "EXIT_INPUT",
    "EXIT_NONCONVERGED",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

DEFAULT_A_VALUES = [2.0, 25.0, 50.0, 100.0, 200.0]
DEFAULT_DM_MEANS = [0.05, 0.1625, 0.275, 0.3875, 0.5]


# -- output helpers ---------------------------------------------------------


def _header(cfg: RunConfig) -> dict:
    return {"tool": f"expertrecon {__version__}", "seed": cfg.seed, "config_hash": cfg.digest}


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(cfg: RunConfig, stem: str, columns: Sequence[str], rows: Sequence[Sequence]) -> Path:
    """CSV (with ``#`` header lines) or JSON, depending on ``cfg.format``."""
    head = _header(cfg)
    if cfg.format == "json":
        doc = {"header": head, "columns": list(columns),
               "rows": [[_json_value(v) for v in r] for r in rows]}
        return atomic_write_text(Path(cfg.out) / f"{stem}.json", json.dumps(doc, indent=1) + "\n")
    buf = io.StringIO(newline="")
    for k, v in head.items():
        buf.write(f"# {k}: {v}\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return atomic_write_text(Path(cfg.out) / f"{stem}.csv", buf.getvalue())


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def write_json(cfg: RunConfig, name: str, doc: dict) -> Path:
    doc = {"header": _header(cfg), **doc}
    text = json.dumps(_json_value(doc), indent=2, sort_keys=True) + "\n"
    return atomic_write_text(Path(cfg.out) / name, text)


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    """Read back a CSV written by :func:`write_table`, skipping ``#`` lines."""
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# -- inputs -----------------------------------------------------------------


def _read_groups(path: Path) -> dict[str, str]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"expert_id", "group"} <= set(reader.fieldnames):
            raise InputError("labels file needs columns expert_id, group", path, 1)
        for row in reader:
            expert = (row["expert_id"] or "").strip()
            group = (row["group"] or "").strip()
            if not expert or not group:
                raise InputError("empty expert_id or group", path, reader.line_num)
            out[expert] = group
    return out


def entries_to_panels(entries, groups: dict[str, str], p_low: float, source=None) -> dict[str, list]:
    panels: dict[str, list] = {}
    for e in sorted(entries, key=lambda e: (e.quantity, e.expert)):
        group = groups.get(e.expert) or e.group
        if not group:
            raise InputError(f"no group assigned for expert {e.expert!r}", source)
        if e.is_event:
            j = EventJudgement(e.expert, group, e.probability, e.quantity)
        else:
            pl = e.p_low if e.p_low is not None else p_low
            j = QuantileJudgement(e.expert, group, QuantileTriplet(e.low, e.median, e.high, pl),
                                  e.plausible_low, e.plausible_high, e.quantity)
        panels.setdefault(e.quantity, []).append(j)
    return panels


def load_panels(cfg: RunConfig, panel: Path | None = None, groups: Path | None = None) -> dict[str, list]:
    panel = panel or cfg.panel
    if panel is None:
        raise InputError("no panel file given (config key `panel`)")
    entries = read_round_csv(panel)
    labels = _read_groups(groups) if groups else (_read_groups(cfg.groups) if cfg.groups else {})
    panels = entries_to_panels(entries, labels, cfg.p_low, panel)
    if cfg.quantities:
        missing = set(cfg.quantities) - set(panels)
        if missing:
            raise InputError(f"quantities not in panel: {sorted(missing)}", panel)
        panels = {q: panels[q] for q in cfg.quantities}
    return panels


def build_prior(cfg: RunConfig, quantity: str, panel: Sequence[QuantileJudgement],
                kind: str = "continuous") -> DecisionMakerPrior:
    settings = cfg.dm_settings(quantity)
    if kind == "proportion" and not ({"low", "high", "table"} & set(settings)):
        settings = {"low": 0.0, "high": 1.0}
    if "table" in settings:
        path = Path(settings["table"])
        xs, cs = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"x", "cdf"} <= set(reader.fieldnames):
                raise InputError("CDF table needs columns x, cdf", path, 1)
            for row in reader:
                try:
                    xs.append(float(row["x"]))
                    cs.append(float(row["cdf"]))
                except ValueError:
                    raise InputError("cannot parse CDF table row", path, reader.line_num)
        try:
            return DecisionMakerPrior.from_table(xs, cs)
        except ValueError as exc:
            raise InputError(str(exc), path)
    if "low" in settings or "high" in settings:
        return DecisionMakerPrior.uniform(settings["low"], settings["high"])
    return dm_range_from_panel(panel, float(settings.get("padding", 0.1)))


def _quantity_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), index]).generate_state(1, np.uint64)[0])


# -- reconcile --------------------------------------------------------------


def _continuous_summary(chain: PosteriorChain, prior: DecisionMakerPrior, theta, level: float):
    zl, zm, zh = reconciled_quantiles(chain)
    low, med, high = back_transform(prior, zl, zm, zh)
    tail = (1.0 - level) / 2.0
    probs = [tail, 0.5, 1.0 - tail]

    def summ(x):
        q = np.quantile(x, probs)
        return {"lower": q[0], "median": q[1], "upper": q[2], "mean": float(np.mean(x))}

    return {
        "p_low": chain.meta["p_low"],
        "reconciled_quantiles": {"low": summ(low), "median": summ(med), "high": summ(high)},
        "predictive": {**summ(theta), "level": level},
        "dm_prior": asdict(prior),
    }


def _equal_weights_probability(panel: Sequence[EventJudgement]) -> float:
    return float(np.mean([j.probability for j in panel]))


def _reconcile_one(cfg: RunConfig, qid: str, panel: list, kind: str, index: int):
    seed = _quantity_seed(cfg.seed, index)
    if kind == "event":
        spec = replace(cfg.event_spec(), seed=seed)
        prob, chain = reconcile_event(panel, spec)
        groups = {}
        for j in panel:
            groups.setdefault(j.group, []).append(j.probability)
        summary = {
            "kind": "event",
            "probability": prob,
            "equal_weights": _equal_weights_probability(panel),
            "group_means": {g: float(np.mean(v)) for g, v in sorted(groups.items())},
            "acceptance": dict(zip(chain.names, chain.meta["acceptance"])),
            "dm_prior": {"alpha": spec.dm_alpha, "beta": spec.dm_beta},
        }
        return chain, summary, None
    spec = replace(cfg.continuous_spec(), seed=seed)
    prior = build_prior(cfg, qid, panel, kind)
    chain = run_continuous(panel, prior, spec)
    theta = sample_theta(chain, prior)
    summary = {"kind": kind, **_continuous_summary(chain, prior, theta, cfg.level)}
    if kind == "proportion":
        summary["probability"] = proportion_event_probability(theta)
    return chain, summary, theta


def _kind_for(cfg: RunConfig, panel: list) -> str:
    is_event = isinstance(panel[0], EventJudgement)
    if any(isinstance(j, EventJudgement) != is_event for j in panel):
        raise InputError("a quantity mixes probabilities and quantiles")
    if cfg.kind == "auto":
        return "event" if is_event else "continuous"
    if (cfg.kind == "event") != is_event:
        raise InputError(f"kind {cfg.kind!r} does not match the panel rows")
    return cfg.kind


def _write_posterior(cfg: RunConfig, chains: dict[tuple, PosteriorChain], keys: list[str]) -> Path:
    """All draws in long form; parameters absent from a chain are left empty."""
    names: list[str] = []
    for ch in chains.values():
        names += [n for n in ch.names if n not in names]
    rows = []
    for key, ch in chains.items():
        cols = [names.index(n) for n in ch.names]
        for c in range(ch.n_chains):
            for k in range(ch.n_kept):
                row = [None] * len(names)
                for i, v in zip(cols, ch.draws[c, k]):
                    row[i] = float(v)
                rows.append(list(key) + [c, k] + row)
    return write_table(cfg, "posterior", keys + ["chain", "iteration"] + names, rows)


def reconcile_panels(cfg: RunConfig, panels: dict[str, list]) -> int:
    if not panels:
        raise InputError("panel contains no judgements")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    results = {}
    chains = {}
    thetas = {}
    for index, qid in enumerate(sorted(panels)):
        kind = _kind_for(cfg, panels[qid])
        try:
            chain, summary, theta = _reconcile_one(cfg, qid, panels[qid], kind, index)
        except (PanelError, OrderingError) as exc:
            raise InputError(f"quantity {qid}: {exc}")
        summary.update(
            converged=chain.converged,
            diagnostics=chain.diagnostics,
            warnings=chain.warnings,
            seed=chain.seed,
            chains=chain.n_chains,
            warmup=chain.warmup,
            kept=chain.n_kept,
            groups=dict(zip(chain.meta["groups"], chain.meta["group_sizes"])),
        )
        results[qid] = summary
        chains[qid] = chain
        if theta is not None:
            thetas[qid] = theta

    _write_posterior(cfg, {(q,): ch for q, ch in chains.items()}, ["quantity_id"])
    if thetas:
        write_table(cfg, "theta_samples", ["quantity_id", "draw", "theta"],
                    [[q, i, float(t)] for q, th in thetas.items() for i, t in enumerate(th)])
    converged = all(r["converged"] for r in results.values())
    write_json(cfg, "reconciled.json", {"quantities": results, "converged": converged})
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_reconcile(cfg: RunConfig) -> int:
    """Reconcile every quantity of the configured panel."""
    cfg.validate()
    return reconcile_panels(cfg, load_panels(cfg))


# -- score ------------------------------------------------------------------


def _read_realizations(path: Path) -> dict[str, float]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"quantity_id", "value"} <= set(reader.fieldnames):
            raise InputError("realizations need columns quantity_id, value", path, 1)
        for row in reader:
            try:
                out[row["quantity_id"].strip()] = float(row["value"])
            except (ValueError, AttributeError):
                raise InputError("cannot parse realization", path, reader.line_num)
    return out


def cmd_score(cfg: RunConfig) -> int:
    """Score experts, the equal-weights pool and the reconciled distribution.

    Writes ``scores.csv``, ``calibration.csv``, ``intervals.csv``, the
    ``theta_samples.csv`` the intervals are computed from and the
    ``posterior.csv`` draws.  A realization outside the decision-maker range
    is clamped to it, with a warning, before scoring.
    """
    cfg.validate()
    studies = cfg.studies or [{"name": "study", "panel": cfg.panel, "groups": cfg.groups,
                               "realizations": cfg.realizations}]
    for s in studies:
        if s.get("realizations") is None:
            raise InputError(f"study {s.get('name')!r}: no realizations file")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    tail = (1.0 - cfg.level) / 2.0
    score_rows, calib_rows, interval_rows, theta_rows = [], [], [], []
    chains: dict[tuple, PosteriorChain] = {}
    converged = True
    for s_index, s in enumerate(studies):
        name = s.get("name") or f"study{s_index + 1}"
        panels = load_panels(cfg, s["panel"], s.get("groups"))
        truth = _read_realizations(s["realizations"])
        qids = [q for q in sorted(panels) if q in truth
                and isinstance(panels[q][0], QuantileJudgement)]
        if not qids:
            raise InputError(f"study {name!r}: no quantile quantities with realizations")
        experts: dict[str, dict] = {}
        pooled, recon, ew_cdf, rc_cdf, values = [], [], [], [], []
        for index, qid in enumerate(qids):
            panel = panels[qid]
            x = truth[qid]
            fits = {j.expert: fit_expert(j.triplet) for j in panel}
            for e, p in fits.items():
                experts.setdefault(e, {})[qid] = p
            prior = build_prior(cfg, qid, panel)
            if not prior.range_low <= x <= prior.range_high:
                clamped = min(max(x, prior.range_low), prior.range_high)
                log.warning("study %s, %s: realization %s outside the decision-maker range, "
                            "scored at %s", name, qid, x, clamped)
                x = clamped
            spec = replace(cfg.continuous_spec(), seed=_quantity_seed(cfg.seed, 1000 * s_index + index))
            try:
                chain = run_continuous(panel, prior, spec)
            except (PanelError, OrderingError) as exc:
                raise InputError(f"study {name}, quantity {qid}: {exc}")
            converged &= chain.converged
            chains[(name, qid)] = chain
            dens = reconciled_density(chain, prior)
            theta = sample_theta(chain, prior)
            q = np.quantile(theta, [tail, 0.5, 1.0 - tail])
            interval_rows.append([name, qid, x, q[1], q[0], q[2], cfg.level])
            theta_rows += [[name, qid, i, float(t)] for i, t in enumerate(theta)]
            pooled.append(list(fits.values()))
            recon.append(dens)
            values.append(x)
            ew_cdf.append(equal_weights_cdf(list(fits.values()), x))
            rc_cdf.append(dens.cdf(x))

        forecasters = [ScoredForecaster.from_sll(e, list(ps.values())) for e, ps in sorted(experts.items())]
        scored = dict(zip(qids, values))
        expert_values = {e: [scored[q] for q in ps] for e, ps in experts.items()}
        for f in forecasters:
            avg_log_score(f, expert_values[f.name])
            score_rows.append([name, f.name, "expert", f.score, len(f.densities), "; ".join(f.flags)])
        ew = ScoredForecaster.equal_weights("equal_weights", pooled)
        rc = ScoredForecaster("reconciled", recon)
        for f, kind in ((ew, "pool"), (rc, "reconciled")):
            avg_log_score(f, values)
            score_rows.append([name, f.name, kind, f.score, len(values), "; ".join(f.flags)])
        for label, cdfs in (("reconciled", rc_cdf), ("equal_weights", ew_cdf)):
            curve = calibration_curve(cdfs)
            for emp, uni in curve.points:
                calib_rows.append([name, label, emp, uni, curve.ks_statistic])

    write_table(cfg, "scores", ["study", "forecaster", "type", "score", "n_quantities", "flags"],
                score_rows)
    write_table(cfg, "calibration", ["study", "forecaster", "empirical", "uniform", "ks_statistic"],
                calib_rows)
    write_table(cfg, "intervals", ["study", "quantity_id", "realization", "median", "lower",
                                   "upper", "level"], interval_rows)
    write_table(cfg, "theta_samples", ["study", "quantity_id", "draw", "theta"], theta_rows)
    _write_posterior(cfg, chains, ["study", "quantity_id"])
    return EXIT_OK if converged else EXIT_NONCONVERGED


# -- sensitivity ------------------------------------------------------------


def cmd_sensitivity(cfg: RunConfig) -> int:
    """Reconciled probability over ``a_W = a_B`` and prior means, and the
    prior correlation grid over ``(a_W, a_B)``."""
    cfg.validate()
    panels = load_panels(cfg)
    events = [q for q in sorted(panels) if isinstance(panels[q][0], EventJudgement)]
    if not events:
        raise InputError("sensitivity needs an event panel")
    qid = events[0]
    opts = dict(cfg.sensitivity)
    a_values = [float(a) for a in opts.get("a_values", DEFAULT_A_VALUES)]
    means = [float(m) for m in opts.get("dm_means", DEFAULT_DM_MEANS)]
    b = float(opts.get("b", 2.0))
    strength = float(opts.get("strength", 2.0))
    corr_a = [float(a) for a in opts.get("correlation_a", a_values)]
    mc = int(opts.get("mc_draws", 200_000))
    template = cfg.event_spec()
    try:
        grid = sensitivity_curve(panels[qid], template, a_values, means, b=b, dm_strength=strength)
    except PanelError as exc:
        raise InputError(str(exc))
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    rows = [[qid, a, m, grid.values[i, k], strength]
            for i, a in enumerate(a_values) for k, m in enumerate(means)]
    write_table(cfg, "sensitivity", ["quantity_id", "a", "dm_mean", "reconciled", "dm_strength"], rows)
    corr_rows = []
    for i, aw in enumerate(corr_a):
        for k, ab in enumerate(corr_a):
            spec = replace(template, a_W=aw, a_B=ab, b_W=b, b_B=b)
            # one seed for every cell: common random numbers across the grid
            diff = prior_correlation(spec, False, mc, np.random.default_rng(cfg.seed))
            same = prior_correlation(spec, True, mc, np.random.default_rng(cfg.seed))
            corr_rows.append([aw, ab, b, diff, same, prior_correlation_exact(spec, False),
                              prior_correlation_exact(spec, True)])
    write_table(cfg, "prior_correlation",
                ["a_W", "a_B", "b", "different_group", "same_group", "different_group_exact",
                 "same_group_exact"], corr_rows)
    return EXIT_OK


# -- delphi -----------------------------------------------------------------


def cmd_delphi(cfg: RunConfig, action: str, study_dir=None, input_path=None,
               round_index=None, output=None, force: bool = False, echo=print) -> int:
    """Round management: add-round, groups, bundle, status, finalize."""
    study_dir = Path(study_dir or cfg.study or "")
    if not (study_dir / "study.json").exists():
        raise InputError("no study.json found", study_dir)
    study = Study.load(study_dir)
    if action == "add-round":
        if input_path is None:
            raise InputError("add-round needs --input")
        try:
            rec = study.add_round(read_round_csv(input_path))
        except (ValueError, FileExistsError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(str(exc), input_path)
        echo(f"recorded round {rec.index} ({len(rec.entries)} entries)")
        missing = study.missing(rec.index)
        if missing:
            echo("incomplete: " + ", ".join(f"{e}/{q}" for e, q in missing))
        return EXIT_OK
    if action == "groups":
        if input_path is None:
            raise InputError("groups needs --labels")
        try:
            study.assign_groups(_read_groups(Path(input_path)))
        except ValueError as exc:
            raise InputError(str(exc), input_path)
        echo(f"assigned groups for {len(study.groups)} experts")
        return EXIT_OK
    if action == "bundle":
        r = int(round_index) if round_index is not None else len(study.rounds)
        try:
            text = anonymised_bundle(study, r)
        except ValueError as exc:
            raise InputError(str(exc), study_dir)
        if output:
            atomic_write_text(output, text)
        else:
            echo(text, end="")
        return EXIT_OK
    if action == "status":
        try:
            echo(str(stopping_check(study)))
        except ValueError as exc:
            raise InputError(str(exc), study_dir)
        return EXIT_OK
    if action == "finalize":
        cfg.validate()
        try:
            panels = final_panel(study, force=force)
        except (ValueError, OrderingError) as exc:
            raise InputError(f"cannot finalize: {exc}", study_dir)
        return reconcile_panels(cfg, panels)
    raise InputError(f"unknown delphi action {action!r}")
