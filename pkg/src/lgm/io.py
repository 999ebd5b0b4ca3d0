"""Reading and writing configs, datasets, graphs and fit artifacts.

Every float is written with ``repr`` so files round-trip bit for bit, and
every writer emits rows in a fixed order; repeated runs produce identical
bytes.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domain import INTERCEPT, FitResult, GridSettings, ModelSpec, PriorSet, ScorePair
from .errors import BadConfig, DatasetError, GraphError, MissingFitArtifact
from .graph import RegionGraph, format_adjacency, parse_adjacency
from .predict import PredictiveComponents, Profile
from .simulate import DEFAULT_COVARIATES, TABLE2_LOGIT_SPATIAL, SimulationConfig

SUMMARY_HEADER = ("name", "mean", "sd", "q2.5", "q50", "q97.5")
SCORE_HEADER = ("DIC", "p_D", "WAIC", "p_waic", "draws", "seed")
FIT_FILES = ("summaries.csv", "marginals.csv", "hypergrid.csv", "scores.csv", "components.csv", "manifest.json")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        raise MissingFitArtifact(f"{path}: file not found") from None


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# -- configuration ---------------------------------------------------------------


@dataclass
class RunConfig:
    spec: ModelSpec
    simulation: SimulationConfig | None = None
    draws: int = 2000
    sections: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"sections": self.sections, "model": self.spec.describe(), "draws": self.draws}


def _num(section, key, cast, default):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise BadConfig(f"[{section.name}] {key}: cannot read {raw!r} as {cast.__name__}") from None


def _parse_covariate(name: str, text: str):
    parts = text.split()
    if not parts:
        raise BadConfig(f"[covariates] {name}: empty specification")
    kind = parts[0]
    try:
        if kind == "category":
            return (name, kind, (parts[1], float(parts[2])))
        return (name, kind, tuple(float(v) for v in parts[1:]))
    except (IndexError, ValueError):
        raise BadConfig(f"[covariates] {name}: cannot parse {text!r}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse the INI-style run configuration (grammar in the README)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise BadConfig(f"{source}: {exc}") from None
    known = {"model", "fixed", "priors", "grid", "criteria", "simulate", "covariates", "truth"}
    unknown = sorted(set(cp.sections()) - known)
    if unknown:
        raise BadConfig(f"{source}: unknown section(s) {', '.join(unknown)}")
    if not cp.has_section("model"):
        raise BadConfig(f"{source}: missing [model] section")
    present = set(cp.sections())
    for name in ("fixed", "priors", "grid", "criteria"):
        if name not in present:
            cp.add_section(name)
    m = cp["model"]
    family = m.get("family", "logit").strip()
    effect = m.get("effect", "none").strip()
    covs = tuple(m.get("covariates", "").split())
    fixed = {k: _num(cp["fixed"], k, float, None) for k in cp["fixed"]}
    if effect == "icar":
        if fixed.get("phi", 1.0) != 1.0:
            raise BadConfig(f"{source}: effect icar pins phi = 1")
        effect, fixed["phi"] = "leroux", 1.0

    pr = cp["priors"]
    priors = PriorSet(
        beta_precision=_num(pr, "beta_precision", float, 0.001),
        intercept_precision=_num(pr, "intercept_precision", float, 0.0),
        logit_phi_mean=_num(pr, "logit_phi_mean", float, 0.0),
        logit_phi_precision=_num(pr, "logit_phi_precision", float, 0.1),
        pc_alpha_rate=_num(pr, "pc_alpha_rate", float, 5.0),
    )
    gr = cp["grid"]
    grid = GridSettings(
        step=_num(gr, "step", float, 0.75),
        drop=_num(gr, "drop", float, 6.0),
        max_points=_num(gr, "max_points", int, 2000),
    )
    spec = ModelSpec(family, covs, effect, priors, grid, _num(m, "seed", int, 0), fixed)
    draws = _num(cp["criteria"], "draws", int, 2000)

    sim = None
    if cp.has_section("simulate"):
        s = cp["simulate"]
        if cp.has_section("covariates"):
            cov_spec = tuple(_parse_covariate(k, v) for k, v in cp["covariates"].items())
        elif covs:
            defaults = {c[0]: c for c in DEFAULT_COVARIATES}
            missing = [c for c in covs if c not in defaults]
            if missing:
                raise BadConfig(f"{source}: no [covariates] entry for {', '.join(missing)}")
            cov_spec = tuple(defaults[c] for c in covs)
        else:
            cov_spec = ()
        if cp.has_section("truth"):
            beta = {}
            for k, v in cp["truth"].items():
                beta[INTERCEPT if k == "intercept" else k] = _num(cp["truth"], k, float, 0.0)
        else:
            beta = {k: v for k, v in TABLE2_LOGIT_SPATIAL.items() if k == INTERCEPT or k in {c[0] for c in cov_spec}}
        sim_effect = s.get("effect", "icar" if spec.constrained else effect).strip()
        ef = s.get("event_fraction")
        sim = SimulationConfig(
            family=family,
            effect=sim_effect,
            regions=_num(s, "regions", int, 379),
            n=_num(s, "n", int, 300_000),
            graph=s.get("graph", "planar").strip(),
            covariates=cov_spec,
            beta=beta,
            tau=_num(s, "tau", float, 11.306),
            phi=_num(s, "phi", float, 0.866),
            alpha=_num(s, "alpha", float, 1.112),
            horizon=_num(s, "horizon", float, math.inf),
            event_fraction=None if ef is None else _num(s, "event_fraction", float, None),
        )
    sections = {name: dict(cp[name]) for name in cp.sections() if name in present}
    return RunConfig(spec, sim, draws, sections)


def read_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise BadConfig(f"{path}: file not found") from None
    return parse_config(text, str(path))


# -- graphs and data -------------------------------------------------------------


def read_graph(path) -> RegionGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise GraphError(f"{path}: file not found") from None
    try:
        return parse_adjacency(text)
    except GraphError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


def write_graph(path, graph: RegionGraph) -> None:
    Path(path).write_text(format_adjacency(graph), encoding="utf-8")


def read_data_rows(path) -> list[dict]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        raise DatasetError(f"{path}: file not found") from None


def with_line_context(exc: DatasetError, path) -> DatasetError:
    """Prefix a dataset error with the file and 1-based line (header is line 1)."""
    row = getattr(exc, "row", None)
    where = f"{path}:{row + 2}" if isinstance(row, int) else str(path)
    exc.args = (f"{where}: {exc}",)
    return exc


def write_data(path, columns: dict, family: str, covariate_names) -> None:
    outcome = ("y",) if family == "logit" else ("time", "event")
    header = ("region",) + tuple(covariate_names) + outcome
    n = len(columns["region"])
    rows = []
    for i in range(n):
        row = [columns["region"][i]]
        row += [fmt(columns[c][i]) for c in covariate_names]
        if family == "logit":
            row.append(str(int(columns["y"][i])))
        else:
            row += [fmt(columns["time"][i]), str(int(columns["event"][i]))]
        rows.append(row)
    _write_csv(Path(path), header, rows)


def write_truth(path, truth: dict, gamma: np.ndarray, graph: RegionGraph) -> None:
    rows = [(k, fmt(v)) for k, v in truth.items()]
    rows += [(f"gamma[{rid}]", fmt(g)) for rid, g in zip(graph.ids, gamma)]
    _write_csv(Path(path), ("name", "value"), rows)


def read_profiles(path) -> list[Profile]:
    rows = read_data_rows(path)
    if not rows:
        raise BadConfig(f"{path}: no profiles")
    if "profile" not in rows[0]:
        raise BadConfig(f"{path}: missing 'profile' column")
    out = []
    for line, r in enumerate(rows, start=2):
        region = (r.get("region") or "").strip() or None
        vals = {}
        for k, v in r.items():
            if k in ("profile", "region") or v is None or v.strip() == "":
                continue
            try:
                vals[k] = float(v)
            except ValueError:
                raise BadConfig(f"{path}:{line}: column {k!r}: cannot read {v!r}") from None
        out.append(Profile(r["profile"], vals, region))
    return out


def write_predictions(path, rows: list[dict]) -> None:
    header = ("profile", "region", "mean", "q2.5", "q50", "q97.5")
    _write_csv(Path(path), header, [
        [r["profile"], r["region"]] + [fmt(r[k]) for k in header[2:]] for r in rows
    ])


# -- fit artifacts -----------------------------------------------------------------


def _summary_row(name, mg):
    q = mg.quantiles
    return [name, fmt(mg.mean), fmt(mg.sd), fmt(q[0.025]), fmt(q[0.5]), fmt(q[0.975])]


def summary_rows(fit: FitResult) -> list[list[str]]:
    rows = [_summary_row(n, mg) for n, mg in fit.fixed_marginals.items()]
    rows += [_summary_row(f"aft:{n}", mg) for n, mg in fit.aft_marginals.items()]
    rows += [_summary_row(n, mg) for n, mg in fit.hyper_marginals.items()]
    rs = fit.random_summaries
    if rs:
        for j, rid in enumerate(fit.region_ids):
            rows.append([f"gamma[{rid}]"] + [fmt(rs[k][j]) for k in ("mean", "sd", "q0.025", "q0.5", "q0.975")])
    return rows


def write_fit(out_dir, fit: FitResult, config: RunConfig, seed: int, comp: PredictiveComponents) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "summaries.csv", SUMMARY_HEADER, summary_rows(fit))

    mrows = []
    groups = [("", fit.fixed_marginals), ("aft:", fit.aft_marginals), ("", fit.hyper_marginals)]
    for prefix, group in groups:
        for name, mg in group.items():
            mrows += [[prefix + name, fmt(x), fmt(d)] for x, d in zip(mg.support, mg.density)]
    _write_csv(out / "marginals.csv", ("parameter", "support", "density"), mrows)

    names = fit.spec.hyper_names
    grows = []
    for pt in fit.hyper_grid:
        grows.append([" ".join(str(i) for i in pt.index)] + [fmt(t) for t in pt.theta] + [fmt(pt.log_post), fmt(pt.weight)])
    _write_csv(out / "hypergrid.csv", ("index",) + tuple(f"theta[{n}]" for n in names) + ("log_post", "weight"), grows)

    _write_csv(out / "scores.csv", SCORE_HEADER, [[
        fmt(fit.dic.score), fmt(fit.dic.effective_params),
        fmt(fit.waic.score), fmt(fit.waic.effective_params),
        str(fit.dic.mc_draws), str(fit.dic.seed),
    ]])

    write_components(out / "components.csv", comp)
    manifest = {
        "version": __version__,
        "seed": seed,
        "config": config.echo(),
        "family": fit.spec.family,
        "covariates": list(fit.spec.covariate_names),
        "regions": list(fit.region_ids),
        "time_scale": fmt(fit.time_scale),
        "files": list(FIT_FILES),
    }
    _write_json(out / "manifest.json", manifest)


def write_components(path, comp: PredictiveComponents) -> None:
    rows = []
    K, p = comp.beta_mean.shape
    J = comp.J
    for k in range(K):
        rows.append([k, "weight", "", "", fmt(comp.weights[k])])
        rows.append([k, "alpha", "", "", fmt(comp.alpha[k])])
        rows += [[k, "beta", i, "", fmt(v)] for i, v in enumerate(comp.beta_mean[k])]
        rows += [[k, "gamma", j, "", fmt(v)] for j, v in enumerate(comp.gamma_mean[k])]
        rows += [[k, "cov_bb", i, j, fmt(comp.cov_bb[k, i, j])] for i in range(p) for j in range(p)]
        rows += [[k, "cov_bg", i, j, fmt(comp.cov_bg[k, i, j])] for i in range(p) for j in range(J)]
        rows += [[k, "var_g", j, "", fmt(v)] for j, v in enumerate(comp.var_g[k])]
    _write_csv(Path(path), ("component", "field", "i", "j", "value"), rows)


def read_fit_components(fit_dir) -> PredictiveComponents:
    d = Path(fit_dir)
    try:
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFitArtifact(f"{d / 'manifest.json'}: file not found") from None
    rows = _read_csv(d / "components.csv")
    if not rows:
        raise MissingFitArtifact(f"{d / 'components.csv'}: empty")
    covs = tuple(manifest["covariates"])
    regions = tuple(manifest["regions"])
    p = len(covs) + 1
    K = max(int(r["component"]) for r in rows) + 1
    J = sum(1 for r in rows if r["component"] == "0" and r["field"] == "gamma")
    comp = PredictiveComponents(
        family=manifest["family"],
        covariate_names=covs,
        region_ids=regions,
        time_scale=float(manifest["time_scale"]),
        weights=np.zeros(K),
        alpha=np.ones(K),
        beta_mean=np.zeros((K, p)),
        gamma_mean=np.zeros((K, J)),
        cov_bb=np.zeros((K, p, p)),
        cov_bg=np.zeros((K, p, J)),
        var_g=np.zeros((K, J)),
    )
    for r in rows:
        k = int(r["component"])
        f = r["field"]
        v = float(r["value"])
        if f == "weight":
            comp.weights[k] = v
        elif f == "alpha":
            comp.alpha[k] = v
        elif f == "beta":
            comp.beta_mean[k, int(r["i"])] = v
        elif f == "gamma":
            comp.gamma_mean[k, int(r["i"])] = v
        elif f == "cov_bb":
            comp.cov_bb[k, int(r["i"]), int(r["j"])] = v
        elif f == "cov_bg":
            comp.cov_bg[k, int(r["i"]), int(r["j"])] = v
        elif f == "var_g":
            comp.var_g[k, int(r["i"])] = v
        else:
            raise MissingFitArtifact(f"{d / 'components.csv'}: unknown field {f!r}")
    return comp


def read_scores(fit_dir) -> dict:
    d = Path(fit_dir)
    rows = _read_csv(d / "scores.csv")
    if len(rows) != 1:
        raise MissingFitArtifact(f"{d / 'scores.csv'}: expected one row")
    return rows[0]


def read_manifest(fit_dir) -> dict:
    d = Path(fit_dir)
    try:
        return json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFitArtifact(f"{d / 'manifest.json'}: file not found") from None


def read_summaries(fit_dir) -> dict[str, dict[str, float]]:
    rows = _read_csv(Path(fit_dir) / "summaries.csv")
    return {r["name"]: {k: float(r[k]) for k in SUMMARY_HEADER[1:]} for r in rows}


def score_pair_from_row(row, which: str) -> ScorePair:
    if which == "DIC":
        return ScorePair(float(row["DIC"]), float(row["p_D"]), int(row["draws"]), int(row["seed"]))
    return ScorePair(float(row["WAIC"]), float(row["p_waic"]), int(row["draws"]), int(row["seed"]))
