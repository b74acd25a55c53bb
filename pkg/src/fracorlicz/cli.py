"""Batch front-end: ``fracorlicz {nfun,norm,verify,solve,lambda1}``.

Problems are described by an INI file (see ``DEFAULT_CONFIG``); reports are
plain text, one inequality per line as ``name lhs rhs slack verdict``.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 data error,
4 non-convergence, 5 regime violation.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from . import nfunction as nfn
from .domain import (
    Ball,
    Box,
    ConfigurationError,
    GridDataError,
    GridFunction,
    build_grid,
    build_kernel,
    delta_integral_bound,
    delta_integral_check,
    read_csv,
    write_csv,
)
from .energy import (
    Form,
    Nonlinearity,
    Problem,
    RegimeError,
    SolverConfig,
    lambda1_estimate,
    minimize,
)
from .nfunction import InvalidNFunctionError, NFunction
from .operator import OperatorContext, pairing
from .orlicz import (
    gagliardo_modular,
    gagliardo_seminorm,
    holder_check,
    norm_report,
    poincare_check,
    sandwich_check,
)

log = logging.getLogger("fracorlicz")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED, EXIT_REGIME = range(6)

DEFAULT_CONFIG = """\
[nfunction]
kind = power_normalized
p = 2

[domain]
dim = 1
box = 0, 2
h = 2/199
omega = 0.5, 1.5
omega0 = 0.75, 1.25
ball_center = 1.75
ball_radius = 0.2

[operator]
s = 0.5

[nonlinearity]
form = pure_power
theta2 = 1
q = 1.5

[solver]
grad_tol = 1e-6
max_iters = 100000
armijo_c = 1e-4
armijo_shrink = 0.5

[lambda1]
starts = 20
max_iters = 400

[run]
out = out
seed = 0
deterministic = true
samples = 20
"""


def _floats(text: str) -> list[float]:
    return [float(Fraction(tok.strip())) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _region(text: str | None):
    if text is None or not text.strip() or text.strip().lower() == "none":
        return None
    body = text.strip()
    head, sep, rest = body.partition(":")
    if sep and head.strip().lower() == "ball":
        vals = _floats(rest)
        if len(vals) < 2:
            raise ConfigurationError(f"ball spec needs center and radius: {text!r}")
        return Ball(tuple(vals[:-1]), vals[-1])
    if sep and head.strip().lower() == "box":
        body = rest
    return Box.from_flat(_floats(body))


@dataclass
class RunConfig:
    nf: NFunction
    p_lower: float | None
    dim: int
    box: Box
    h: float
    omega: Box | Ball
    omega0: Box | Ball | None
    ball: Ball | None
    s: float
    nl: Nonlinearity
    solver: SolverConfig
    lambda1_starts: int = 20
    lambda1_iters: int = 400
    lambda1: float | None = None
    out: Path = Path("out")
    seed: int = 0
    samples: int = 20
    echo: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, **overrides) -> RunConfig:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read_string(text)
        return cls.from_parser(cp, **overrides)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser, *, seed: int | None = None,
                    out: str | None = None, deterministic: bool | None = None) -> RunConfig:
        try:
            return cls._parse(cp, seed, out, deterministic)
        except (KeyError, configparser.Error) as exc:
            raise ConfigurationError(f"bad config: {exc}") from None

    @classmethod
    def _parse(cls, cp, seed, out, deterministic) -> RunConfig:
        sec = cp["nfunction"]
        kind = nfn.Kind.from_name(sec.get("kind", "power"))
        if kind is nfn.Kind.TABULATED:
            nf = NFunction.tabulated(_floats(sec["t"]), _floats(sec["a"]))
        else:
            nf = NFunction.from_name(kind.value, float(Fraction(sec["p"])))
        p_lower = sec.getfloat("p_lower", fallback=None)

        dom = cp["domain"]
        dim = dom.getint("dim")
        ball = None
        if dom.get("ball_center"):
            ball = Ball(tuple(_floats(dom["ball_center"])), float(Fraction(dom["ball_radius"])))
        s = float(Fraction(cp.get("operator", "s", fallback="0.5")))
        if not 0.0 < s < 1.0:
            raise ConfigurationError(f"s must lie in (0, 1), got {s}")

        nls = cp["nonlinearity"] if cp.has_section("nonlinearity") else {}
        form = Form.from_name(nls.get("form", "pure_power"))
        q = float(Fraction(nls.get("q", "1.5")))
        theta2 = float(Fraction(nls.get("theta2", "1")))
        theta1 = float(Fraction(nls.get("theta1", str(theta2 if theta2 > 0 else 1))))
        if form is Form.CUSTOM:
            nl = Nonlinearity.custom(_floats(nls["t"]), _floats(nls["f"]), theta1, theta2, q)
        else:
            eps = float(Fraction(nls.get("eps", "0.5"))) if form is Form.SHIFTED_POWER else 0.0
            nl = Nonlinearity(form, theta1, theta2, q, eps)

        sol = cp["solver"] if cp.has_section("solver") else {}
        run = cp["run"] if cp.has_section("run") else {}
        det = deterministic if deterministic else str(run.get("deterministic", "true")).lower() in (
            "1", "true", "yes", "on")
        solver = SolverConfig(
            grad_tol=float(sol.get("grad_tol", 1e-6)),
            max_iters=int(sol.get("max_iters", 100_000)),
            armijo_c=float(sol.get("armijo_c", 1e-4)),
            armijo_shrink=float(sol.get("armijo_shrink", 0.5)),
            deterministic_reduction=det,
        )
        lam = cp["lambda1"] if cp.has_section("lambda1") else {}
        echo = {f"{name}.{k}": v for name in cp.sections() for k, v in cp[name].items()
                if f"{name}.{k}" != "run.out"}
        echo["run.deterministic"] = str(det).lower()
        seed_val = int(run.get("seed", 0)) if seed is None else seed
        echo["run.seed"] = str(seed_val)
        return cls(
            nf=nf, p_lower=p_lower, dim=dim, box=Box.from_flat(_floats(dom["box"])),
            h=float(Fraction(dom["h"])), omega=_region(dom["omega"]),
            omega0=_region(dom.get("omega0")), ball=ball, s=s, nl=nl, solver=solver,
            lambda1_starts=int(lam.get("starts", 20)), lambda1_iters=int(lam.get("max_iters", 400)),
            lambda1=float(sol["lambda1"]) if "lambda1" in sol else None,
            out=Path(out if out is not None else run.get("out", "out")),
            seed=seed_val, samples=int(run.get("samples", 20)), echo=echo,
        )

    @property
    def deterministic(self) -> bool:
        return self.solver.deterministic_reduction

    @cached_property
    def grid(self):
        return build_grid(self.dim, self.box, self.h, self.omega, self.omega0)

    @cached_property
    def kernel(self):
        return build_kernel(self.grid, self.s)

    @cached_property
    def context(self) -> OperatorContext:
        return OperatorContext(self.nf, self.kernel, self.deterministic)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def load_config(path: str | Path | None, **overrides) -> RunConfig:
    if path is None:
        return RunConfig.from_text(DEFAULT_CONFIG, **overrides)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_text(text, **overrides)


# -- report lines -------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """``lhs <= rhs`` style inequality with its measured slack (negative on failure)."""

    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name} {self.lhs:.10e} {self.rhs:.10e} {self.slack:.3e} {verdict}"


def _le(name: str, lhs: float, rhs: float, rtol: float = 0.0) -> Check:
    slack = (rhs - lhs) / abs(rhs) if rhs else rhs - lhs
    return Check(name, lhs, rhs, slack, lhs <= rhs + rtol * abs(rhs))


def _random_functions(cfg: RunConfig, rng: np.random.Generator, n: int) -> list[GridFunction]:
    gd = cfg.grid
    m = int(gd.omega_mask.sum())
    return [GridFunction.from_omega(gd, rng.standard_normal(m) * rng.uniform(0.1, 3.0))
            for _ in range(n)]


def verification_checks(cfg: RunConfig) -> list[Check]:
    nf, kt, gd, ctx = cfg.nf, cfg.kernel, cfg.grid, cfg.context
    det = cfg.deterministic
    rng = cfg.rng()
    p_lo, p_hi = nf.indices()
    if cfg.p_lower is not None:
        p_lo = cfg.p_lower
    checks: list[Check] = []

    # Young: A(t) + Abar(s) - s t >= 0, with equality at s = a(t)
    t = np.logspace(-3, 2, 100)
    sv = np.logspace(-3, 2, 100)
    res = nfn.young_residual(nf, sv[:, None], t[None, :])
    checks.append(_le("young_violation", max(0.0, -float(res.min())), 1e-9))
    eq = np.abs(nfn.young_residual(nf, nf.a(t), t)) / (nf.A(t) + 1.0)
    checks.append(_le("young_equality", float(eq.max()), 1e-8))

    # Abar(a(t)) <= c A(t) with the Legendre bound c <= p^0 - 1
    checks.append(_le("conjugate_growth", nfn.conjugate_growth_ratio(nf), p_hi - 1.0, 1e-8))
    checks.append(_le("delta2", nfn.delta2_constant(nf), 2.0**p_hi, 1e-12))
    checks.append(_le("delta_integral", delta_integral_check(nf, cfg.s, gd.dim),
                      delta_integral_bound(nf, cfg.s, gd.dim), 1e-10))

    funcs = _random_functions(cfg, rng, cfg.samples)
    others = _random_functions(cfg, rng, cfg.samples)

    worst = max((holder_check(nf, u, v, deterministic=det) for u, v in zip(funcs, others)),
                key=lambda lr: lr[0] / lr[1])
    checks.append(_le("holder", *worst))

    sw = []
    for u in funcs:
        sem = gagliardo_seminorm(nf, kt, u, deterministic=det)
        for sig in (0.25, 0.5, 2.0, 4.0):
            sw.append(sandwich_check(nf, kt, u * (sig / sem), indices=(p_lo, p_hi),
                                     deterministic=det))
    bad = min(sw, key=lambda r: r.slack)
    checks.append(Check("sandwich", bad.phi, bad.upper if bad.phi > bad.lower else bad.lower,
                        bad.slack, all(r.holds for r in sw)))

    if cfg.ball is not None:
        worst = max((poincare_check(nf, gd, kt, u, cfg.ball, deterministic=det)
                     for u in funcs), key=lambda r: r[0] / r[2])
        checks.append(_le("poincare", worst[0], worst[2], 1e-6))

    lo_slack, hi_slack = math.inf, math.inf
    for u in funcs:
        phi = gagliardo_modular(nf, kt, u, deterministic=det)
        pr = pairing(ctx, u, u)
        lo_slack = min(lo_slack, (pr - p_lo * phi) / phi)
        hi_slack = min(hi_slack, (p_hi * phi - pr) / phi)
    checks.append(Check("pairing_bracket", lo_slack, hi_slack, min(lo_slack, hi_slack),
                        min(lo_slack, hi_slack) >= -1e-9))

    prob = Problem(ctx, cfg.nl)
    err = 0.0
    for u, v in zip(funcs, others):
        x, d = u.omega_values, v.omega_values
        eps = 1e-6 * (1.0 + float(np.max(np.abs(x))))
        fd = (prob.energy(x + eps * d) - prob.energy(x - eps * d)) / (2 * eps)
        an = float(np.dot(prob.gradient(x), d))
        err = max(err, abs(fd - an) / max(abs(an), 1e-300))
    checks.append(_le("gradient", err, 1e-5))
    return checks


# -- subcommands ----------------------------------------------------------------


def cmd_nfun(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    nf = cfg.nf
    out.write(f"kind={nf.kind.value} p={nf.p}\n")
    for t in (0.25, 0.5, 1.0, 2.0, 4.0):
        out.write(f"t={t:g} A={float(nf.A(t)):.17g} a={float(nf.a(t)):.17g} "
                  f"Abar={nfn.conjugate_eval(nf, t):.17g}\n")
    p_lo, p_hi = nf.indices()
    flag = " (estimate)" if nf.indices_are_estimates else ""
    out.write(f"p_lower={p_lo:.17g} p_upper={p_hi:.17g}{flag}\n")
    out.write(f"delta2={nfn.delta2_constant(nf):.17g}\n")
    out.write(f"conjugate_growth={nfn.conjugate_growth_ratio(nf):.17g}\n")
    return EXIT_OK


def cmd_norm(cfg: RunConfig, source, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        u = read_csv(cfg.grid, source)
    except OSError as exc:
        raise GridDataError(f"cannot read {source}: {exc}", row=0) from None
    rep = norm_report(cfg.nf, cfg.kernel, u, deterministic=cfg.deterministic)
    out.write(rep.to_text())
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    checks = verification_checks(cfg)
    text = "".join(c.line() + "\n" for c in checks)
    out.write(text)
    _write(cfg.out / "verify_report.txt", text)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_solve(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    lam = cfg.lambda1
    if lam is None and math.isclose(cfg.nl.q, cfg.nf.indices()[0], rel_tol=1e-12):
        lam = lambda1_estimate(cfg.context, cfg.solver, starts=cfg.lambda1_starts,
                               max_iters=cfg.lambda1_iters, rng=cfg.rng()).value
        log.info("lambda1 upper estimate %.10g", lam)
    sol = minimize(cfg.context, cfg.nl, cfg.solver, lambda1=lam, rng=cfg.rng())
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(sol.u, cfg.out / "solution.csv")
    meta = sol.metadata(cfg.echo)
    _write(cfg.out / "solution_meta.txt", meta)
    out.write(meta)
    if not sol.converged:
        log.error("descent stopped at iteration %d with grad_norm %.3e", sol.iters, sol.grad_norm)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_lambda1(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    est = lambda1_estimate(cfg.context, cfg.solver, starts=cfg.lambda1_starts,
                           max_iters=cfg.lambda1_iters, rng=cfg.rng())
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(est.u, cfg.out / "lambda1.csv")
    out.write(f"lambda1_upper_bound={est.value:.17g}\n")
    write_csv(est.u, out)
    return EXIT_OK


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI problem description (default: built-in 1-d problem)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="PRNG seed for random samples and starts")
    common.add_argument("--deterministic", action="store_true",
                        help="order-fixed reductions (byte-reproducible output)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="fracorlicz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("nfun", parents=[common], help="N-function report")
    norm = sub.add_parser("norm", parents=[common], help="norms of a grid function CSV")
    norm.add_argument("--input", required=True, help="grid function CSV")
    sub.add_parser("verify", parents=[common], help="inequality certification report")
    sub.add_parser("solve", parents=[common], help="minimize the energy")
    sub.add_parser("lambda1", parents=[common], help="upper estimate of lambda_1")
    sub.add_parser("default-config", help="print the built-in config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(DEFAULT_CONFIG)
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out,
                          deterministic=True if args.deterministic else None)
        if args.command == "nfun":
            return cmd_nfun(cfg)
        if args.command == "norm":
            return cmd_norm(cfg, args.input)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        return cmd_lambda1(cfg)
    except RegimeError as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except GridDataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, InvalidNFunctionError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
