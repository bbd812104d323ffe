"""Command-line runner: ``u1twist <command> --config run.toml``.

Exit codes: 0 all asserted margins nonnegative, 2 bad configuration,
3 no uniform gap, 4 a lemma or bound margin is negative.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .decay import (
    DecayError,
    fermion_correlations,
    fit_decay,
    theorem_bound,
    transverse_correlation,
    verify_bound_chain,
)
from .hilbert import SectorError, embed_spin_operator, enumerate_fermion_sector, enumerate_spin_sector
from .lattice import (
    Lattice,
    LatticeError,
    build_chain,
    build_sierpinski,
    build_square,
    certify_dimension,
    distance_matrix,
    distances_from,
    estimate_dimension,
    read_edge_list,
)
from .linalg import lowrank_norm, operator_norm
from .model import (
    HubbardParams,
    ModelError,
    assemble_hubbard,
    assemble_xxz,
    majumdar_ghosh_couplings,
    random_couplings,
    uniform_couplings,
)
from .resolvent import (
    NoAdmissibleTwistError,
    alpha0_search,
    check_matrix_element_lemma,
    check_resolvent_lemmas,
    choose_contour,
    contour_project,
    direct_twisted_factors,
    f_alpha,
    norm_P2alpha_bound,
    projector_norm_ceiling,
    sample_resolvent,
)
from .spectral import NoGapError, SpectralData, ground_projector, ground_sector
from .twist import (
    LemmaReport,
    TwistError,
    build_G,
    build_KL,
    check_lemma_double,
    check_lemma_K,
    check_lemma_L,
    default_kappa,
    double_commutator,
    double_commutator_constant,
    gauge_log_diagonal,
    null_profile,
    twist_profile,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NO_GAP, EXIT_VIOLATION = 0, 2, 3, 4
COMMANDS = ("lattice", "spectrum", "verify-lemmas", "bound-chain", "sweep", "fit")

log = logging.getLogger("u1twist")


# ----------------------------------------------------------------------------
# deterministic output
# ----------------------------------------------------------------------------

def fmt(x) -> str:
    """Scalar to text: floats with 17 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def brief(x) -> str:
    """Short form for console summaries; files always use :func:`fmt`."""
    return format(float(x), ".6g") if isinstance(x, (float, np.floating)) else fmt(x)


def _json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json(str(k))}: {_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (float, np.floating)):
        s = fmt(obj)
        return s if math.isfinite(float(obj)) else f'"{s}"'
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    s = str(obj).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


def dumps_json(obj) -> str:
    return _json(obj) + "\n"


def dumps_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


@dataclass
class Outputs:
    directory: Path
    formats: tuple[str, ...]

    def json(self, name: str, command: str, payload: dict):
        if "json" not in self.formats:
            return
        doc = {"schema_version": SCHEMA_VERSION, "command": command, **payload}
        self._write(name, dumps_json(doc))

    def csv(self, name: str, header: list[str], rows: list[list]):
        if "csv" in self.formats:
            self._write(name, dumps_csv(header, rows))

    def _write(self, name, text):
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / name).write_text(text)


# ----------------------------------------------------------------------------
# pipeline pieces
# ----------------------------------------------------------------------------

def build_lattice(cfg: RunConfig) -> Lattice:
    s = cfg.lattice
    if s.kind in ("chain", "ring"):
        return build_chain(s.size, periodic=s.periodic or s.kind == "ring", next_nearest=s.next_nearest)
    if s.kind == "square":
        return build_square(s.lx, s.ly, periodic=s.periodic)
    if s.kind == "sierpinski":
        return build_sierpinski(s.generation)
    return read_edge_list(s.path)


def dimension(cfg: RunConfig, lat: Lattice):
    if cfg.lattice.D is None:
        return estimate_dimension(lat)
    return certify_dimension(lat, cfg.lattice.D)


def build_xxz(cfg: RunConfig, lat: Lattice):
    m = cfg.model
    if m.couplings == "uniform":
        c = uniform_couplings(lat, m.jxy, m.jz)
    elif m.couplings == "random":
        c = random_couplings(lat, m.jxy, m.jz, cfg.seed)
    else:
        c = majumdar_ghosh_couplings(lat, m.jz)
    basis = enumerate_spin_sector(m.spin, lat.n_sites, m.M)
    return assemble_xxz(lat, c, basis), basis, c


def build_hubbard(cfg: RunConfig, lat: Lattice):
    m = cfg.model
    B = None if m.field is None else np.asarray(m.field, dtype=float)
    if B is not None and B.shape == (3,):
        B = np.tile(B, (lat.n_sites, 1))
    p = HubbardParams.uniform(lat, m.t, m.U, m.V_nn, B, m.max_range)
    basis = enumerate_fermion_sector(lat.n_sites, m.N, m.sz)
    return assemble_hubbard(lat, p, basis), basis, p


def build_model(cfg: RunConfig, lat: Lattice):
    return build_xxz(cfg, lat) if cfg.model.kind == "xxz" else build_hubbard(cfg, lat)


def spectrum(cfg: RunConfig, H) -> SpectralData:
    return ground_sector(H, eps_deg=cfg.tolerance.eps_deg, gap_min=cfg.tolerance.gap_min)


def sector_label(cfg: RunConfig) -> str:
    if cfg.model.kind == "xxz":
        return f"M={fmt(cfg.model.M)}"
    sz = "" if cfg.model.sz is None else f",sz={cfg.model.sz}"
    return f"N={cfg.model.N}{sz}"


def require_xxz(cfg: RunConfig, what: str):
    if cfg.model.kind != "xxz":
        raise ConfigError(f"{what} is implemented for the XXZ family only")


def require_scope(est):
    if not est.in_scope:
        raise ConfigError(f"lattice dimension D={fmt(est.D)} is outside the twist scope 1 <= D < 2")


def pair_for(cfg: RunConfig, lat: Lattice, dmat: np.ndarray) -> tuple[int, int]:
    m = 0 if cfg.twist.m is None else cfg.twist.m
    if not 0 <= m < lat.n_sites:
        raise ConfigError(f"[twist] m={m} is not a site")
    n = cfg.twist.n
    if n is None:
        n = int(np.argmax(dmat[m]))
    if not 0 <= n < lat.n_sites:
        raise ConfigError(f"[twist] n={n} is not a site")
    if dmat[m, n] < 2 and (cfg.twist.n is not None or dmat.max() >= 2):
        raise ConfigError(f"[twist] pair ({m}, {n}) has distance {dmat[m, n]} < 2")
    return m, n


def profile_for(lat: Lattice, m: int, n: int, D: float, kappa: float):
    """Twist profile, or the null profile when the lattice diameter is below 2."""
    df = distances_from(lat, m)
    if df.dist[n] < 2:
        return null_profile(df, int(df.dist[n]), kappa, D, n)
    return twist_profile(lat, m, n, D, kappa)


def kappa_for(cfg: RunConfig, D: float) -> float:
    return default_kappa(D) if cfg.twist.kappa is None else cfg.twist.kappa


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_lattice(cfg: RunConfig, out: Outputs, args) -> int:
    lat = build_lattice(cfg)
    est = dimension(cfg, lat)
    r = np.arange(1, est.max_radius + 1)
    out.csv("lattice.csv", ["r", "sup_sphere", "bound", "residual"],
            [[int(k), int(s), est.C0 * k ** (est.D - 1.0), float(res)]
             for k, s, res in zip(r, est.sup_counts, est.residuals)])
    out.json("lattice.json", "lattice", {"lattice": lat.name, "n_sites": lat.n_sites,
                                         "n_bonds": lat.n_bonds, "dimension": est.to_dict()})
    print(f"{lat.name}: D={brief(est.D)} C0={brief(est.C0)} in_scope={est.in_scope}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Outputs, args) -> int:
    lat = build_lattice(cfg)
    H, basis, _ = build_model(cfg, lat)
    sd = spectrum(cfg, H)
    out.csv("spectrum.csv", ["index", "energy", "ground"],
            [[k, float(e), k < sd.q] for k, e in enumerate(sd.eigenvalues)])
    out.json("spectrum.json", "spectrum", {"lattice": lat.name, "sector": sector_label(cfg),
                                           "dim": basis.dim, "spectral": sd.to_dict()})
    print(f"{lat.name} {sector_label(cfg)}: q={sd.q} gap={brief(sd.gap)} spread={brief(sd.spread)}")
    return EXIT_OK


LEMMA_HEADER = ["name", "lattice", "N", "M", "alpha", "kappa", "lhs", "rhs", "margin"]


def cmd_verify_lemmas(cfg: RunConfig, out: Outputs, args) -> int:
    require_xxz(cfg, "verify-lemmas")
    lat = build_lattice(cfg)
    est = dimension(cfg, lat)
    require_scope(est)
    H, basis, coup = build_xxz(cfg, lat)
    sd = spectrum(cfg, H)
    dmat = distance_matrix(lat)
    m, n = pair_for(cfg, lat, dmat)
    kappa = kappa_for(cfg, est.D)
    prof = profile_for(lat, m, n, est.D, kappa)
    S = float(basis.spin)
    C1 = cfg.twist.C1
    if C1 is None:
        C1 = double_commutator_constant(max(lat.degree(i) for i in lat.sites), est.C0, kappa,
                                        coup.jxy_max, coup.jz_max, S)
    V = sd.ground_vectors
    reports, margins, per_alpha = [], [], {}
    for a in cfg.twist.alpha:
        ops = build_KL(lat, coup, prof, a, basis)
        Kn = operator_norm(ops.K, hermitian=True)
        Ln = operator_norm(ops.L, hermitian=True)
        dcn = operator_norm(double_commutator(H, ops.L), hermitian=True)
        gm = f_alpha(H, ops, sd, cfg.tolerance.c4_fraction, K_norm=Kn, L_norm=Ln, dc_norm=dcn)
        margins.append(gm)
        per_alpha[a] = (ops, Ln, gm)
        reports += [(a, check_lemma_K(ops, prof, coup, est.C0, S, Kn)),
                    (a, check_lemma_L(ops, prof, coup, est.C0, S, Ln)),
                    (a, check_lemma_double(H, ops, prof, est.C0, C1, dcn)),
                    (a, check_matrix_element_lemma(ops.L, V, gm.f, cfg.twist.trials,
                                                   seed=cfg.seed or 0))]
    try:
        alpha0 = alpha0_search(margins)
    except NoAdmissibleTwistError as exc:
        alpha0 = None
        log.warning("%s; resolvent lemmas skipped", exc)
    contour_runs = []
    theorem = None
    if alpha0 is not None:
        for a in [a for a in cfg.twist.alpha if a <= alpha0]:
            ops, Ln, gm = per_alpha[a]
            Hp = ops.hprime(H)
            ct = choose_contour(sd, Ln)
            G2 = build_G(basis, prof.theta, 2 * a)
            oracle = direct_twisted_factors(G2, V)
            tp = contour_project(Hp, ct, sd.q, tol=cfg.tolerance.quadrature_defect,
                                 seed=cfg.seed or 0, oracle=oracle, workers=args.threads)
            vals = sample_resolvent(Hp, ct, cfg.tolerance.resolvent_samples)
            res = check_resolvent_lemmas(Hp, ct, gm, values=vals)
            sups = {k: float(v.max()) for k, v in vals.items()}
            pn = norm_P2alpha_bound(tp.norm, ct, sups, gm.C4_required)
            reports += [(a, r) for r in res.values()] + [(a, pn)]
            contour_runs.append({"alpha": a, "contour": ct.to_dict(), "projector": tp.to_dict()})
            if a == alpha0 and prof.R >= 2:
                ceiling = projector_norm_ceiling(prof.R, est.D, ct.y0 / prof.R ** (est.D / 2.0),
                                                 ct.C3, gm.C4_required, ct.width)
                rec = transverse_correlation(ground_projector(V), sd.q, m, n, basis, dmat)
                theorem = theorem_bound(rec, alpha0, ceiling, prof)
                reports.append((a, _as_lemma("theorem_bound", theorem)))
    N = lat.n_sites
    rows = [[r.name, lat.name, N, float(cfg.model.M), a, kappa, r.lhs, r.rhs, r.margin]
            for a, r in reports]
    out.csv("lemmas.csv", LEMMA_HEADER, rows)
    out.json("lemmas.json", "verify-lemmas", {
        "lattice": lat.name, "sector": sector_label(cfg), "pair": [m, n], "R": prof.R,
        "kappa": kappa, "dimension": est.to_dict(), "spectral": sd.to_dict(), "C1": C1,
        "C1_min": c1_summary(reports), "alpha0": alpha0, "gap_margins": [g.to_dict() for g in margins],
        "contour_runs": contour_runs,
        "reports": [{"alpha": a, **r.to_dict()} for a, r in reports],
        "theorem": None if theorem is None else theorem.to_dict(),
    })
    bad = [r for _, r in reports if not r.passed]
    print(f"{len(reports)} reports, {len(bad)} negative margins, alpha0={brief(alpha0)}")
    return EXIT_VIOLATION if bad else EXIT_OK


def c1_summary(reports) -> dict:
    """Minimal double-commutator constant per alpha and its relative spread.

    The lemma isolates the alpha dependence in ``sinh^2(2 alpha)``, so the
    minimal constant should be nearly alpha independent; the spread is
    reported against a 5% band, not asserted.
    """
    per = [(a, r.constants["C1_min"]) for a, r in reports if r.name == "double_commutator"]
    vals = [v for _, v in per if v > 0]
    spread = (max(vals) - min(vals)) / max(vals) if vals else 0.0
    return {"per_alpha": [{"alpha": a, "C1_min": v} for a, v in per],
            "max": max(vals, default=0.0), "relative_spread": spread,
            "within_5_percent": spread <= 0.05}


def _as_lemma(name, rep):
    return LemmaReport(name, rep.lhs, rep.rhs, {"alpha": rep.alpha, "P_ceiling": rep.P_norm})


def _pairs(cfg: RunConfig, lat: Lattice, dmat: np.ndarray, min_r: int = 2):
    if cfg.twist.m is not None or cfg.twist.n is not None:
        return [p for p in [pair_for(cfg, lat, dmat)] if dmat[p] >= min_r]
    return [(m, n) for m in lat.sites for n in lat.sites if m != n and dmat[m, n] >= min_r]


BOUND_HEADER = ["lattice", "N", "M", "m", "n", "R", "alpha", "kappa", "lhs", "P_norm",
                "decay_factor", "rhs", "margin", "gauge_defect"]


def cmd_bound_chain(cfg: RunConfig, out: Outputs, args) -> int:
    require_xxz(cfg, "bound-chain")
    lat = build_lattice(cfg)
    est = dimension(cfg, lat)
    require_scope(est)
    H, basis, _ = build_xxz(cfg, lat)
    sd = spectrum(cfg, H)
    dmat = distance_matrix(lat)
    kappa = kappa_for(cfg, est.D)
    V = sd.ground_vectors
    P = ground_projector(V)
    rows, reps = [], []
    for m, n in _pairs(cfg, lat, dmat):
        prof = twist_profile(lat, m, n, est.D, kappa)
        rec = transverse_correlation(P, sd.q, m, n, basis, dmat)
        A = embed_spin_operator(basis, "S+S-", m, n)
        for a in cfg.twist.alpha:
            g = np.exp(gauge_log_diagonal(basis, prof.theta, a))
            Pn = lowrank_norm(V / (g * g)[:, None], (V * (g * g)[:, None]).conj().T)
            rep = verify_bound_chain(rec, Pn, prof, a, A=A, vectors=V, g_alpha=g)
            reps.append(rep)
            rows.append([lat.name, lat.n_sites, float(cfg.model.M), m, n, prof.R, a, kappa,
                         rep.lhs, rep.P_norm, rep.decay_factor, rep.rhs, rep.margin,
                         rep.gauge_defect])
    out.csv("bound_chain.csv", BOUND_HEADER, rows)
    worst = min(reps, key=lambda r: r.margin) if reps else None
    out.json("bound_chain.json", "bound-chain", {
        "lattice": lat.name, "sector": sector_label(cfg), "kappa": kappa, "D": est.D,
        "spectral": sd.to_dict(), "n_reports": len(reps),
        "worst": None if worst is None else worst.to_dict(),
        "max_gauge_defect": max((r.gauge_defect for r in reps), default=None)})
    bad = sum(not r.passed for r in reps)
    tail = "" if worst is None else f", worst margin {brief(worst.margin)}"
    print(f"{len(reps)} bound-chain reports, {bad} negative margins{tail}")
    return EXIT_VIOLATION if bad else EXIT_OK


CORR_HEADER = ["lattice", "N", "sector", "kind", "m", "n", "R", "re", "im", "abs", "norm"]


def _correlations(cfg: RunConfig, lat: Lattice):
    H, basis, params = build_model(cfg, lat)
    sd = spectrum(cfg, H)
    dmat = distance_matrix(lat)
    P = ground_projector(sd.ground_vectors)
    recs = []
    for m in lat.sites:
        for n in lat.sites:
            if n < m:
                continue
            if cfg.model.kind == "xxz":
                recs.append(transverse_correlation(P, sd.q, m, n, basis, dmat))
            elif m != n:
                recs += fermion_correlations(P, sd.q, m, n, basis, dist=dmat,
                                             longitudinal=params.longitudinal_field,
                                             spin=params.longitudinal_field)
    return recs, sd


def cmd_sweep(cfg: RunConfig, out: Outputs, args) -> int:
    lat = build_lattice(cfg)
    recs, sd = _correlations(cfg, lat)
    sec = sector_label(cfg)
    out.csv("correlations.csv", CORR_HEADER,
            [[lat.name, lat.n_sites, sec, r.kind, r.m, r.n, r.R, r.value.real, r.value.imag,
              r.abs, r.norm] for r in recs])
    out.json("sweep.json", "sweep", {"lattice": lat.name, "sector": sec,
                                     "spectral": sd.to_dict(), "n_records": len(recs)})
    over = [r for r in recs if r.abs > r.norm * (1 + 1e-12)]
    print(f"{len(recs)} correlation records")
    return EXIT_VIOLATION if over else EXIT_OK


def cmd_fit(cfg: RunConfig, out: Outputs, args) -> int:
    lat = build_lattice(cfg)
    est = dimension(cfg, lat)
    recs, sd = _correlations(cfg, lat)
    fits = {}
    for kind in sorted({r.kind for r in recs}):
        try:
            fits[kind] = fit_decay([r for r in recs if r.kind == kind], est.D).to_dict()
        except DecayError as exc:
            fits[kind] = {"error": str(exc)}
    out.json("fit.json", "fit", {"lattice": lat.name, "sector": sector_label(cfg), "D": est.D,
                                 "spectral": sd.to_dict(), "fits": fits})
    for kind, f in fits.items():
        if "error" in f:
            print(f"{kind}: {f['error']}")
        else:
            print(f"{kind}: gamma={brief(f['gamma'])} p_free={brief(f['p_free'])} "
                  f"at_least_as_fast={f['at_least_as_fast']}")
    if all("error" in f for f in fits.values()):
        raise DecayError("insufficient data for every correlation kind")
    return EXIT_OK


HANDLERS = {"lattice": cmd_lattice, "spectrum": cmd_spectrum, "verify-lemmas": cmd_verify_lemmas,
            "bound-chain": cmd_bound_chain, "sweep": cmd_sweep, "fit": cmd_fit}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker threads for quadrature solves")
    common.add_argument("--seed", type=int, metavar="U64", help="seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="u1twist", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common], help=HANDLERS[c].__name__.replace("cmd_", ""))
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        if cfg.needs_seed and cfg.seed is None:
            raise ConfigError("random couplings need a seed (config 'seed' or --seed)")
        out = Outputs(Path(args.out) if args.out else cfg.output.dir, cfg.output.formats)
        return HANDLERS[args.command](cfg, out, args)
    except (ConfigError, LatticeError, ModelError, SectorError, TwistError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoGapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_GAP
    except DecayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
