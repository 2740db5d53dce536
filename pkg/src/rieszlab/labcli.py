"""Experiment runner: parse a key-value config, dispatch to the lab modules,
persist plot-ready CSV series and JSON summaries.

Configs are INI files.  A ``[lab]`` section sets the experiment id, the
Fejer parameter s and the base random key; ``[tower:NAME]`` sections define
towers; ``[experiment:NAME]`` sections define runs with a ``kind`` of
tower | spectrum | criteria | clt | flatness | kk-verify.  Identical
configs produce byte-identical result trees: result files carry no wall
clock (pass --timestamps to opt in) and experiments write to private
directories merged in id order.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time
from configparser import ConfigParser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import criteria, expsum, fejerquad, riesz, stochastic, tower, trigpoly

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message carries the field path."""


@dataclass
class ExperimentConfig:
    lab_id: str
    s: float
    seed: str
    name: str
    kind: str
    options: dict
    towers: dict
    tol_scale: float = 1.0

    def digest(self) -> str:
        blob = json.dumps({"lab": self.lab_id, "s": self.s, "seed": self.seed,
                           "name": self.name, "kind": self.kind,
                           "options": self.options, "tol_scale": self.tol_scale},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    experiment: str
    timestamp: str
    module: str
    operation: str
    inputs_digest: str
    outputs: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    passed: bool | None = None
    error: str = ""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _floats(text):
    return [float(Fraction(tok)) for tok in text.split()]


def _ints(text):
    return [int(tok) for tok in text.split()]


def _build_tower_spec(name: str, section: dict) -> tuple:
    path = f"tower:{name}"
    try:
        family_name = section["family"]
        p = _ints(section["p"])
        depth = int(section.get("depth", len(p)))
    except KeyError as e:
        raise ConfigError(f"{path}.{e.args[0]}: missing") from None
    if family_name == "explicit":
        if "spacers" not in section:
            raise ConfigError(f"{path}.spacers: missing for explicit family")
        rows = []
        for i, row in enumerate(section["spacers"].split(";")):
            vals = _floats(row)
            if len(vals) != p[i] if i < len(p) else True:
                if i >= len(p) or len(vals) != p[i]:
                    raise ConfigError(
                        f"{path}.spacers: row {i} has {len(vals)} entries, need p_{i}={p[i] if i < len(p) else '?'}")
            rows.append(vals)
        if len(rows) < depth:
            raise ConfigError(f"{path}.spacers: {len(rows)} rows, need depth={depth}")
        fam = tower.Explicit(tuple(tuple(r) for r in rows))
    elif family_name == "ornstein":
        fam = tower.Ornstein(t=tuple(_floats(section["t"])),
                             key=(section.get("key", "lab"),),
                             last_factor=float(section.get("last_factor", 1.0)))
    elif family_name == "linear-staircase":
        fam = tower.LinearStaircase(alpha=float(Fraction(section.get("alpha", "1"))))
    elif family_name == "exp-staircase":
        fam = tower.ExponentialStaircase(
            m=tuple(_floats(section["m"])),
            eps=tuple(Fraction(tok) for tok in section["eps"].split()),
            minus_one=section.get("minus_one", "true").lower() != "false")
    else:
        raise ConfigError(f"{path}.family: unknown family {family_name!r}")
    try:
        spec = tower.CuttingSpec(p=tuple(p), family=fam)
        levels = tower.build_tower(spec, depth)
    except tower.TowerError as e:
        raise ConfigError(f"{path}: {e}") from None
    return spec, levels


def load_config(path, tol_scale: float = 1.0, seed_override: str | None = None):
    cp = ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found")
    lab = dict(cp["lab"]) if cp.has_section("lab") else {}
    lab_id = lab.get("id", "lab")
    s = float(Fraction(lab.get("s", "1/2")))
    seed = seed_override if seed_override is not None else lab.get("seed", "lab-seed")
    towers = {}
    for sec in cp.sections():
        if sec.startswith("tower:"):
            towers[sec.split(":", 1)[1]] = _build_tower_spec(sec.split(":", 1)[1], dict(cp[sec]))
    experiments = []
    for sec in sorted(cp.sections()):
        if not sec.startswith("experiment:"):
            continue
        name = sec.split(":", 1)[1]
        opts = dict(cp[sec])
        if "kind" not in opts:
            raise ConfigError(f"{sec}.kind: missing")
        experiments.append(ExperimentConfig(
            lab_id=lab_id, s=s, seed=seed, name=name, kind=opts.pop("kind"),
            options=opts, towers=towers, tol_scale=tol_scale))
    return experiments


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------

def _tower_for(cfg: ExperimentConfig, default=None):
    name = cfg.options.get("tower", default)
    if name is None or name not in cfg.towers:
        raise ConfigError(f"experiment:{cfg.name}.tower: unknown tower {name!r}")
    return cfg.towers[name]


def _run_tower(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    spec, levels = _tower_for(cfg)
    (outdir / "tower.csv").write_text(tower.tower_to_csv(levels))
    partial, flag = tower.finite_measure_partial_sums(spec, len(levels))
    lines = ["k,partial_sum\n"] + [f"{k},{float(v)!r}\n" for k, v in enumerate(partial)]
    (outdir / "finiteness.csv").write_text("".join(lines))
    rec.outputs = {"heights": [float(h) for h in tower.heights(levels)],
                   "finiteness_flag": flag}
    if isinstance(spec.family, tower.ExponentialStaircase):
        rec.outputs["stage_flags"] = tower.exp_staircase_stage_flags(spec, len(levels))
    rec.passed = True


def _run_spectrum(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    _, levels = _tower_for(cfg)
    n = int(cfg.options.get("n", len(levels) - 1))
    tol = float(cfg.options.get("tol", 1e-6)) * cfg.tol_scale
    count = int(cfg.options.get("t_count", 21))
    h_top = tower.heights(levels)[n + 1]
    t_lo = float(cfg.options.get("t_min", -h_top))
    t_hi = float(cfg.options.get("t_max", h_top))
    ts = np.linspace(t_lo, t_hi, count)
    chain = riesz.ProductChain(levels, tuple(range(n + 1)))
    quad, meta = fejerquad.weighted_ft_many(chain.integrand(), ts, cfg.s, tol=tol / 2)
    comb = riesz.ft_combinatorial(levels, n, ts, cfg.s)
    diff = np.abs(quad - comb)
    lines = ["t,re_quad,im_quad,comb,abs_diff\n"]
    for i, t in enumerate(ts):
        lines.append(f"{float(t)!r},{float(quad[i].real)!r},{float(quad[i].imag)!r},{float(comb[i])!r},{float(diff[i])!r}\n")
    (outdir / "spectrum.csv").write_text("".join(lines))
    rec.tolerances = {"tol": tol}
    rec.outputs = {"max_abs_diff": float(diff.max()), "panels": meta.panels,
                   "truncation_radius": meta.truncation_radius}
    rec.passed = bool(diff.max() <= tol)


def _run_criteria(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    _, levels = _tower_for(cfg)
    ops = cfg.options.get("ops", "bourgain klemes-reinhold klemes-ratio").split()
    indices = _ints(cfg.options.get("indices", " ".join(str(i) for i in range(len(levels)))))
    tol = float(cfg.options.get("tol", 1e-5)) * cfg.tol_scale
    outputs = {}
    ok = True
    for op in ops:
        if op == "bourgain":
            betas = criteria.bourgain_sequence(levels, indices, cfg.s, tol=tol)
            rep = criteria.CriterionReport("bourgain", cfg.name, {"s": cfg.s},
                                           {"beta": betas})
            (outdir / "bourgain.csv").write_text(rep.to_csv())
            outputs["beta_last"] = float(betas[-1])
            ok &= bool(np.all((betas > 0) & (betas <= 1 + tol)))
        elif op == "guenais":
            partial, flag = criteria.guenais_sum(levels, len(levels), cfg.s, tol=tol)
            rep = criteria.CriterionReport("guenais", cfg.name, {"s": cfg.s},
                                           {"partial": partial})
            (outdir / "guenais.csv").write_text(rep.to_csv())
            outputs["guenais_flag"] = flag
        elif op == "klemes-reinhold":
            partial, verdict = criteria.klemes_reinhold_check([lv.p for lv in levels], len(levels))
            rep = criteria.CriterionReport("klemes-reinhold", cfg.name, {},
                                           {"partial": partial}, verdict)
            (outdir / "klemes_reinhold.csv").write_text(rep.to_csv())
            outputs["klemes_reinhold"] = verdict
        elif op == "klemes-ratio":
            ratios, trend = criteria.klemes_ratio(levels)
            rep = criteria.CriterionReport("klemes-ratio", cfg.name, {},
                                           {"ratio": ratios}, trend)
            (outdir / "klemes_ratio.csv").write_text(rep.to_csv())
            outputs["klemes_ratio_trend"] = trend
        elif op == "peyriere":
            rep = criteria.peyriere_points(levels, indices, cfg.s, tol=tol)
            (outdir / "peyriere.csv").write_text(rep.to_csv())
            outputs["peyriere_max_dev"] = rep.params["max_abs_dev"]
            ok &= rep.params["max_abs_dev"] <= float(cfg.options.get("peyriere_tol", 1e-4))
        else:
            raise ConfigError(f"experiment:{cfg.name}.ops: unknown op {op!r}")
    rec.outputs = outputs
    rec.tolerances = {"tol": tol}
    rec.passed = ok


def _run_clt(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    variant = cfg.options.get("variant", "ornstein")
    key = (cfg.seed, cfg.name)
    if variant == "ornstein":
        p = int(cfg.options.get("p", 1000))
        t_k = float(cfg.options.get("t", 100.0))
        theta = float(cfg.options.get("theta", 1.0))
        draws = int(cfg.options.get("draws", 2000))
        dist, theo_var, degenerate = stochastic.clt_ornstein(theta, p, t_k, draws, key)
        outputs = {"ks": dist.ks(), "variance": dist.variance(),
                   "theory_variance": theo_var, "degenerate": degenerate,
                   "target": dist.target_name}
    elif variant == "exp-staircase":
        p = int(cfg.options.get("p", 1024))
        m = float(cfg.options.get("m", 64.0))
        eps = float(Fraction(cfg.options.get("eps", "1/2")))
        a, b = _floats(cfg.options.get("interval", "1 2"))
        n = int(cfg.options.get("samples", 10000))
        dist, m2, flags = stochastic.clt_expstaircase(p, m, eps, (a, b), cfg.s, n, key)
        outputs = {"ks": dist.ks(), "second_moment": m2, "flags": flags,
                   "target": dist.target_name}
    else:
        raise ConfigError(f"experiment:{cfg.name}.variant: unknown {variant!r}")
    edges = np.linspace(-4, 4, 81)
    hist, _ = np.histogram(dist.samples, bins=edges)
    lines = ["bin_left,bin_right,count\n"]
    for i in range(len(hist)):
        lines.append(f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(hist[i])}\n")
    (outdir / "histogram.csv").write_text("".join(lines))
    if cfg.options.get("save_samples", "false").lower() == "true":
        (outdir / "samples.csv").write_text(
            "sample\n" + "".join(f"{float(x)!r}\n" for x in dist.samples))
    (outdir / "ks.json").write_text(_json(outputs))
    rec.outputs = outputs
    ks_bound = cfg.options.get("ks_bound")
    rec.passed = True if ks_bound is None else bool(outputs["ks"] < float(ks_bound))


def _run_flatness(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    q = int(cfg.options.get("q", 1000))
    beta = float(Fraction(cfg.options.get("beta", "1/64")))
    tau1 = float(cfg.options.get("tau1", 0.6))
    tau2 = float(cfg.options.get("tau2", 0.9))
    grid = int(cfg.options.get("grid", 200))
    prof = expsum.flatness_profile(q, beta, tau1, tau2, grid)
    lines = ["t,abs_q,ratio\n"]
    for i in range(len(prof.ts)):
        lines.append(f"{float(prof.ts[i])!r},{float(prof.abs_q[i])!r},{float(prof.ratio[i])!r}\n")
    (outdir / "profile.csv").write_text("".join(lines))
    rec.outputs = {"max_ratio": prof.max_ratio, "l1_deficit": prof.l1_deficit,
                   "rolle_quantity": prof.rolle_quantity}
    (outdir / "flatness.json").write_text(_json(rec.outputs))
    deficit_min = float(cfg.options.get("deficit_min", 0.0))
    rec.passed = bool(prof.l1_deficit > deficit_min)


def _run_kk_verify(cfg: ExperimentConfig, outdir: Path, rec: ResultRecord):
    q = int(cfg.options.get("q", 1000))
    beta = float(Fraction(cfg.options.get("beta", "1/64")))
    tau1 = float(cfg.options.get("tau1", 0.6))
    tau2 = float(cfg.options.get("tau2", 0.9))
    grid = int(cfg.options.get("grid", 50))
    ts = np.linspace(tau1, tau2, grid)
    direct = expsum.direct_q_many(q, beta, ts)
    lines = ["t,abs_diff,error_budget,ok\n"]
    all_ok = True
    worst = 0.0
    for i, t in enumerate(ts):
        ps = expsum.appendix_phase_spec(q, beta, float(t), tau1, tau2)
        main, err, _ = expsum.kk_approx(ps)
        diff = abs(direct[i] * np.sqrt(q) - main)
        ok = diff <= err
        all_ok &= ok
        worst = max(worst, diff / err)
        lines.append(f"{float(t)!r},{float(diff)!r},{float(err)!r},{int(ok)}\n")
    (outdir / "kk_verify.csv").write_text("".join(lines))
    rec.outputs = {"worst_ratio": worst}
    rec.passed = bool(all_ok)


_KINDS = {
    "tower": _run_tower,
    "spectrum": _run_spectrum,
    "criteria": _run_criteria,
    "clt": _run_clt,
    "flatness": _run_flatness,
    "kk-verify": _run_kk_verify,
}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON-serializable: {type(o)}")


def run_experiment(cfg: ExperimentConfig, outroot: Path, timestamps: bool) -> ResultRecord:
    rec = ResultRecord(
        experiment=cfg.name,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()) if timestamps else "",
        module="rieszlab", operation=cfg.kind, inputs_digest=cfg.digest())
    outdir = outroot / cfg.name
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        _KINDS[cfg.kind](cfg, outdir, rec)
    except KeyError:
        rec.error = f"experiment:{cfg.name}.kind: unknown kind {cfg.kind!r}"
        rec.passed = False
    except (ConfigError, tower.TowerError, riesz.GuardError,
            fejerquad.QuadratureError, ValueError) as e:
        rec.error = str(e)
        rec.passed = False
    (outdir / "summary.json").write_text(_json(rec.__dict__))
    return rec


def run(config_path, outdir, threads: int = 1, tol_scale: float = 1.0,
        seed_override: str | None = None, timestamps: bool = False,
        kinds: set | None = None) -> int:
    """Run every experiment in the config (optionally filtered by kind);
    returns the process exit code."""
    try:
        experiments = load_config(config_path, tol_scale=tol_scale,
                                  seed_override=seed_override)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if kinds is not None:
        experiments = [e for e in experiments if e.kind in kinds]
    outroot = Path(outdir)
    outroot.mkdir(parents=True, exist_ok=True)
    records = {}
    if threads > 1 and len(experiments) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(run_experiment, cfg, outroot, timestamps): cfg.name
                    for cfg in experiments}
            for fut in concurrent.futures.as_completed(futs):
                rec = fut.result()
                records[rec.experiment] = rec
    else:
        for cfg in experiments:
            rec = run_experiment(cfg, outroot, timestamps)
            records[rec.experiment] = rec
    merged = [records[name].__dict__ for name in sorted(records)]
    (outroot / "summary.json").write_text(_json(
        {"schema": SCHEMA_VERSION, "experiments": merged}))
    failures = [r for r in merged if r["error"]]
    hard_fail = [r for r in merged if r["passed"] is False and not r["error"]]
    for r in merged:
        status = "ERROR" if r["error"] else ("PASS" if r["passed"] else "FAIL")
        print(f"{r['experiment']}: {status}" + (f" ({r['error']})" if r["error"] else ""))
    return 1 if (failures or hard_fail) else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rieszlab",
        description="rank-one flow and generalized Riesz product laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["tower", "spectrum", "criteria", "clt", "flatness", "kk-verify", "all"]:
        p = sub.add_parser(name, help=f"run {name} experiments from a config")
        p.add_argument("--config", required=True)
        p.add_argument("--outdir", default="results")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiply all experiment tolerances")
        p.add_argument("--seed-override", default=None)
        p.add_argument("--timestamps", action="store_true",
                       help="include wall-clock timestamps (breaks byte-reproducibility)")
    args = parser.parse_args(argv)
    kinds = None if args.command == "all" else {args.command}
    return run(args.config, args.outdir, threads=args.threads,
               tol_scale=args.tol_scale, seed_override=args.seed_override,
               timestamps=args.timestamps, kinds=kinds)


if __name__ == "__main__":
    sys.exit(main())
