"""Command-line front end: ``fblab <subcommand> ...``.

Every subcommand writes a JSON envelope (version, config, input digests,
timestamp, payload) to stdout or ``--out``.  Exit codes: 0 computed or
passed, 2 some bound failed, 3 inconclusive or formula-only, 1 usage or
I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._enum import DEFAULT_GUARD
from ._parallel import default_threads
from .channels import (AwgnSpec, DmcSpec, bec, bsc, caod_audit, channel_from_dict, load_channel,
                       solve)
from .codes import (aep_variance, all_codebooks, awgn_mc_report, code_metrics, exact_error,
                    induced_output, load_code, random_code)
from .concentration import (LipschitzFn, cramer_transfer, expectation_transfer, make_cert,
                            tail_transfer)
from .converses import (augustin_bound, kl_lower_bound, output_kl_constants, output_kl_upper,
                        tilted_bound)
from .divergences import ProductDist, TransportProblem, as_masses, kl, tv, wasserstein
from .gaussian_norms import (GaussianGenSpec, certified_eps, generate, lq_profile,
                             quadratic_form_report)
from .reports import BoundReport
from .testing import NpCurve, metaconverse, metaconverse_sweep

EXIT_OK, EXIT_IO, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3
GEN_KINDS = {"iid": "iid-gaussian", "sphere": "spherical", "peaky": "peaky",
             "iid-gaussian": "iid-gaussian", "spherical": "spherical"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    log_base: float = 2
    enumeration_guard: int = DEFAULT_GUARD
    master_seed: int = 0
    thread_count: int = 1
    output_path: str | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.enumeration_guard < 2 ** 10:
            raise UsageError("guard must be at least 2^10")
        if any(v <= 0 for v in self.tolerances.values()):
            raise UsageError("tolerances must be positive")

    def to_dict(self):
        return {"log_base": "e" if self.log_base == math.e else self.log_base,
                "enumeration_guard": self.enumeration_guard, "master_seed": self.master_seed,
                "thread_count": self.thread_count, "output_path": self.output_path,
                "tolerances": self.tolerances}


# ----------------------------------------------------------------------
# serialization


def fmt(x):
    """12 significant digits; infinities and NaN as strings."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def clean(obj):
    """Recursively convert a payload to JSON-ready values."""
    if hasattr(obj, "to_dict"):
        return clean(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return clean(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    return obj


def dumps_payload(payload):
    return json.dumps(clean(payload), sort_keys=True, separators=(",", ":"))


def envelope(payload, config, inputs):
    return {
        "tool": "fblab",
        "version": __version__,
        "config": config.to_dict(),
        "inputs": inputs,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "payload": clean(payload),
    }


def digest(path):
    with open(path, "rb") as fh:
        return "sha256:" + hashlib.sha256(fh.read()).hexdigest()


def collect_verdicts(obj, out=None):
    out = [] if out is None else out
    if isinstance(obj, BoundReport):
        out.append(obj.verdict)
    elif isinstance(obj, dict):
        v = obj.get("verdict")
        if isinstance(v, str):
            out.append(v)
        for val in obj.values():
            collect_verdicts(val, out)
    elif isinstance(obj, (list, tuple)):
        for val in obj:
            collect_verdicts(val, out)
    return out


def exit_code(payload):
    v = collect_verdicts(clean(payload))
    if "fail" in v:
        return EXIT_FAIL
    if "inconclusive" in v or "formula-only" in v:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# ----------------------------------------------------------------------
# input helpers


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _masses(path):
    obj = _read_json(path)
    if isinstance(obj, dict):
        obj = obj.get("masses", obj.get("p"))
    return as_masses(obj)


def _matrix_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _caod(sol, n):
    return ProductDist(sol.caod, n)


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _eps_arg(value):
    if value is None or value == "auto":
        return None
    return float(value)


def _load_F(path, q, n):
    """F file: {"table": [...]}, {"letters": [...], "scale": s} or {"kind": "weight"}."""
    obj = _read_json(path)
    if "table" in obj:
        return LipschitzFn(obj["table"], q, n, obj.get("declared_lip"))
    if "letters" in obj:
        return LipschitzFn.from_letters(obj["letters"], n, obj.get("scale", 1.0))
    if obj.get("kind") == "weight":
        return LipschitzFn.hamming_weight(n, q)
    raise ValueError("F file needs 'table', 'letters' or kind 'weight'")


# ----------------------------------------------------------------------
# subcommands


def cmd_capacity(args, cfg):
    _need(args, "channel")
    ch = load_channel(args.channel)
    sol = solve(ch, tol=cfg.tolerances.get("tol", 1e-9), base=cfg.log_base)
    out = {"solution": sol}
    if isinstance(ch, DmcSpec):
        out["kkt"] = caod_audit(ch, sol)
    return out


def cmd_div(args, cfg):
    _need(args, "p", "q")
    p, q = _masses(args.p), _masses(args.q)
    if args.op == "kl":
        return {"op": "kl", "value": kl(p, q, cfg.log_base)}
    if args.op == "tv":
        return {"op": "tv", "value": tv(p, q)}
    if args.cost is not None:
        cost = _matrix_csv(args.cost)
    else:
        cost = 1.0 - np.eye(p.size, q.size)
    res = wasserstein(TransportProblem(p, q, cost, 1 if args.op == "w1" else 2))
    return {"op": args.op, "value": res.value, "primal": res.primal, "dual": res.dual,
            "gap": res.gap, "marginal_error": res.marginal_error, "coupling": res.coupling}


def cmd_beta(args, cfg):
    _need(args, "p", "q", "alpha")
    curve = NpCurve(_masses(args.p), _masses(args.q))
    return {"alpha": args.alpha, "test": curve.test(args.alpha, cfg.log_base)}


def _dmc_and_code(args):
    _need(args, "channel", "code")
    ch = load_channel(args.channel)
    code = load_code(args.code).validate(ch)
    return ch, code


def cmd_metaconverse(args, cfg):
    ch, code = _dmc_and_code(args)
    if not isinstance(ch, DmcSpec):
        raise UsageError("metaconverse needs a DMC")
    _need(args, "alpha")
    sol = solve(ch, base=cfg.log_base)
    return {"report": metaconverse(ch, code, _caod(sol, code.n), args.alpha, args.variant,
                                   args.delta, guard=cfg.enumeration_guard)}


def cmd_bound(args, cfg):
    ch, code = _dmc_and_code(args)
    sol = solve(ch, base=cfg.log_base)
    eps = _eps_arg(args.eps)
    g = cfg.enumeration_guard
    name = args.name
    if isinstance(ch, AwgnSpec):
        if name == "sfvar":
            if eps is None:
                eps = certified_eps(code, ch.power, args.mc, cfg.master_seed, cfg.thread_count)[0]
            return {"report": kl_lower_bound(ch, code, mode="sfvar", eps=eps, sol=sol)}
        if name == "outkl":
            mc = awgn_mc_report(ch, code, args.mc, cfg.master_seed, cfg.thread_count, cfg.log_base)
            eps = mc["eps_max"].hi if eps is None else eps
            d = mc["D_out"]
            return {"report": output_kl_upper(ch, code.n, code.M, eps, sol, d.value, (d.lo, d.hi)),
                    "mc": mc}
        raise UsageError(f"bound {name!r} needs a DMC")
    Q = _caod(sol, code.n)
    if name == "augustin":
        rep = augustin_bound(ch, code, Q, eps=eps, sol=sol, guard=g)
    elif name in ("sf", "sfvar"):
        rep = kl_lower_bound(ch, code, Q, mode=name, eps=eps, sol=sol, guard=g)
    elif name == "outkl":
        if eps is None:
            eps = exact_error(ch, code, guard=g)[1]
        D = code_metrics(ch, code, sol, guard=g, threads=cfg.thread_count, verify=False).D_out
        if eps >= 1.0:
            return {"report": BoundReport("outkl", D, math.inf, "<=", constants={"eps": eps},
                                          verdict="inconclusive")}
        finite = math.isfinite(output_kl_constants(ch, sol, code.n, eps)["excess"])
        rep = output_kl_upper(ch, code.n, code.M, eps, sol, D, formula_only=not finite)
    elif name == "tilt":
        _need(args, "F")
        F = _load_F(args.F, ch.output_size, code.n)
        rep = tilted_bound(ch, code, Q, F.table, args.t, eps=eps, sol=sol, guard=g)
    else:
        raise UsageError(f"unknown bound {name!r}")
    return {"report": rep}


def cmd_analyze(args, cfg):
    ch, code = _dmc_and_code(args)
    if isinstance(ch, AwgnSpec):
        return {"mc": awgn_mc_report(ch, code, args.mc, cfg.master_seed, cfg.thread_count,
                                     cfg.log_base)}
    sol = solve(ch, base=cfg.log_base)
    return {"metrics": code_metrics(ch, code, sol, guard=cfg.enumeration_guard,
                                    threads=cfg.thread_count)}


def cmd_conc(args, cfg):
    ch, code = _dmc_and_code(args)
    if not isinstance(ch, DmcSpec):
        raise UsageError("conc needs a DMC")
    _need(args, "F")
    sol = solve(ch, base=cfg.log_base)
    g = cfg.enumeration_guard
    if args.prop == 3:
        obj = _read_json(args.F)
        f = obj["letters"] if isinstance(obj, dict) else obj
        return {"report": cramer_transfer(f, args.theta, ch, code, sol, guard=g)}
    F = _load_F(args.F, ch.output_size, code.n)
    Q = _caod(sol, code.n).masses(g)
    cert = make_cert(F, base=cfg.log_base, measure=Q)
    if args.prop == 1:
        return {"cert": cert, "report": expectation_transfer(F, induced_output(ch, code, g), Q, cert)}
    t_grid = np.arange(0, code.n + 1, dtype=float)
    return {"cert": cert, "report": tail_transfer(F, ch, code, cert, t_grid, sol, guard=g)}


def _q_list(text):
    return [math.inf if s.strip().lower() == "inf" else float(s) for s in text.split(",") if s.strip()]


def _profile_summary(prof):
    out = {"n": prof["n"], "M": prof["M"], "q": {}}
    for k, row in prof["q"].items():
        out["q"][k] = {kk: vv for kk, vv in row.items() if kk != "values"}
    return out


def cmd_norms(args, cfg):
    kind = GEN_KINDS[args.gen]
    spec = GaussianGenSpec(kind, args.n, args.M, args.P, cfg.master_seed, args.delta)
    code = generate(spec)
    if args.save_code:
        with open(args.save_code, "w") as fh:
            json.dump(clean(code.to_dict()), fh)
    return {"generator": code.meta, "profile": _profile_summary(lq_profile(code, _q_list(args.qs)))}


def cmd_qform(args, cfg):
    _need(args, "code", "A")
    code = load_code(args.code)
    P = args.P if args.P is not None else code.meta.get("P")
    if P is None:
        raise UsageError("--P is required")
    eps = _eps_arg(args.eps)
    mc = None
    if eps is None:
        eps, mc = certified_eps(code, P, args.mc, cfg.master_seed, cfg.thread_count)
    rep = quadratic_form_report(code, _matrix_csv(args.A), eps, P, cfg.log_base)
    out = {"qform": rep}
    if mc is not None:
        out["mc"] = mc
    return out


# ----------------------------------------------------------------------
# sweep


def _sweep_row(spec, n, metrics, cfg):
    fam = spec.get("family", "dmc-random")
    row = {}
    if fam == "dmc-random":
        ch_obj = spec.get("channel", {"type": "bsc", "p": 0.11})
        ch = bsc(ch_obj["p"]) if ch_obj.get("type") == "bsc" else channel_from_dict(ch_obj)
        sol = solve(ch, base=cfg.log_base)
        rate = float(spec.get("rate", 0.8))
        M = max(2, int(round(2 ** (rate * sol.C * n if cfg.log_base == 2 else rate * sol.C * n / math.log(2)))))
        M = min(M, ch.input_size ** n)
        code = random_code(ch.input_size, n, M, np.random.default_rng([cfg.master_seed, n]))
        cm = code_metrics(ch, code, sol, guard=cfg.enumeration_guard, threads=cfg.thread_count,
                          verify=False)
        vals = {"M": M, "eps_max": cm.eps_max, "eps_avg": cm.eps_avg, "D_out": cm.D_out,
                "I_code": cm.I_code, "aep_var": cm.aep_var, "aep_var_per_n": cm.aep_var / n}
    elif fam == "gaussian":
        kind = GEN_KINDS[spec.get("kind", "iid")]
        delta = spec.get("delta")
        if isinstance(delta, str) and delta.startswith("n^"):
            delta = n ** float(delta[2:])
        code = generate(GaussianGenSpec(kind, n, int(spec.get("M", 256)), float(spec.get("P", 1.0)),
                                        cfg.master_seed, delta))
        prof = lq_profile(code, [1, 2, 4, math.inf])["q"]
        vals = {"M": code.M}
        for k, r in prof.items():
            vals[f"median_q{k}"] = r["median"]
        vals["mean_pow4"] = prof["4"]["mean_pow4"]
    else:
        raise ValueError(f"unknown sweep family {fam!r}")
    for m in metrics:
        if m not in vals:
            raise ValueError(f"unknown metric {m!r}")
        row[m] = vals[m]
    return row


def run_sweep(spec, cfg):
    """Rows of the requested metrics over ``spec["n_grid"]`` plus a CSV rendering."""
    metrics = list(spec.get("metrics", []))
    rows = []
    if metrics:
        for n in spec.get("n_grid", []):
            try:
                r = {"n": int(n), "status": "ok", **_sweep_row(spec, int(n), metrics, cfg)}
            except Exception as exc:  # row marked failed, sweep continues
                r = {"n": int(n), "status": "failed", "error": str(exc)}
            rows.append(r)
    cols = ["n", "status", *metrics] if metrics else ["n"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_csv_cell(r.get(c, "")) for c in cols])
    return {"spec": spec, "rows": rows, "columns": cols}, buf.getvalue()


def _csv_cell(v):
    return fmt(v) if isinstance(v, (float, np.floating)) else v


def cmd_sweep(args, cfg):
    _need(args, "spec")
    payload, text = run_sweep(_read_json(args.spec), cfg)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    else:
        payload["csv"] = text
    return payload


# ----------------------------------------------------------------------
# selftest


def selftest(cfg):
    """Small deterministic suite drawn from the acceptance checks."""
    threads = cfg.thread_count
    base = cfg.log_base
    out = {}
    s = solve(bsc(0.11), base=base)
    s_e = solve(bec(0.5), base=base)
    s_a = solve(AwgnSpec(1.0), base=base)
    out["capacity"] = {"bsc": s.C, "bec": s_e.C, "awgn": [s_a.C, s_a.V], "V_bsc": s.V}

    ch = bsc(0.2)
    sol = solve(ch, base=base)
    viol = 0
    total = 0
    for n in (1, 2, 3):
        for M in (2, 3, 4):
            if M > 2 ** n:
                continue
            for code in all_codebooks(2, n, M):
                reps = metaconverse_sweep(ch, code, _caod(sol, n))
                total += len(reps)
                viol += sum(r.verdict == "fail" for r in reps)
                a = augustin_bound(ch, code, _caod(sol, n), sol=sol)
                viol += a.verdict == "fail"
    out["exhaustive"] = {"checks": total, "violations": viol}

    rng = np.random.default_rng(cfg.master_seed)
    ch11 = bsc(0.11)
    s11 = solve(ch11, base=base)
    reps = []
    for n in (6, 8):
        code = random_code(2, n, 4, rng)
        cm = code_metrics(ch11, code, s11, threads=threads)
        reps.append(output_kl_upper(ch11, n, 4, cm.eps_max, s11, cm.D_out))
        reps.extend(cm.dconvk)
    out["outkl"] = reps

    F = LipschitzFn.hamming_weight(8)
    code = random_code(2, 8, 4, rng)
    Q = _caod(s11, 8).masses()
    cert = make_cert(F, base=base, measure=Q)
    out["conc"] = [expectation_transfer(F, induced_output(ch11, code), Q, cert),
                   tail_transfer(F, ch11, code, cert, np.arange(9.0), s11)]

    g = generate(GaussianGenSpec("spherical", 16, 8, 1.0, cfg.master_seed))
    mc = awgn_mc_report(AwgnSpec(1.0), g, 20_000, cfg.master_seed, threads, base)
    out["awgn_mc"] = mc
    out["aep"] = aep_variance(ch11, random_code(2, 8, 8, rng), base, threads=threads)[0]
    return out


def cmd_selftest(args, cfg):
    return selftest(cfg)


# ----------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--channel")
    common.add_argument("--code")
    common.add_argument("--out")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int)
    common.add_argument("--guard", type=int, default=DEFAULT_GUARD)
    common.add_argument("--base", default="2", choices=["2", "e"])
    common.add_argument("--tol", type=float, default=1e-9)

    p = _Parser(prog="fblab", description="Finite-blocklength converse and output-statistics toolkit.")
    p.add_argument("--version", action="version", version=f"fblab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("capacity", parents=[common], help="capacity, caod and dispersion")
    d = sub.add_parser("div", parents=[common], help="kl, tv, w1, w2 between two laws")
    d.add_argument("--op", choices=["kl", "tv", "w1", "w2"], default="kl")
    d.add_argument("--p")
    d.add_argument("--q")
    d.add_argument("--cost")
    b = sub.add_parser("beta", parents=[common], help="Neyman-Pearson beta_alpha(P, Q)")
    b.add_argument("--alpha", type=float)
    b.add_argument("--p")
    b.add_argument("--q")
    m = sub.add_parser("metaconverse", parents=[common], help="meta-converse against the caod")
    m.add_argument("--alpha", type=float)
    m.add_argument("--variant", choices=["avg", "max"], default="avg")
    m.add_argument("--delta", type=float, default=0.0)
    bd = sub.add_parser("bound", parents=[common], help="converse bounds")
    bd.add_argument("--name", choices=["augustin", "sf", "sfvar", "outkl", "tilt"], required=True)
    bd.add_argument("--eps", default="auto")
    bd.add_argument("--t", type=float, default=0.5)
    bd.add_argument("--F")
    bd.add_argument("--mc", type=int, default=100_000)
    a = sub.add_parser("analyze", parents=[common], help="exact or MC code statistics")
    a.add_argument("--mc", type=int, default=100_000)
    c = sub.add_parser("conc", parents=[common], help="concentration transfers")
    c.add_argument("--F")
    c.add_argument("--prop", type=int, choices=[1, 2, 3], default=1)
    c.add_argument("--theta", type=float, default=1.0)
    nm = sub.add_parser("norms", parents=[common], help="generate an AWGN code and its l_q norms")
    nm.add_argument("--gen", choices=sorted(GEN_KINDS), default="iid")
    nm.add_argument("--n", type=int, default=128)
    nm.add_argument("--M", type=int, default=1024)
    nm.add_argument("--P", type=float, default=1.0)
    nm.add_argument("--delta", type=float)
    nm.add_argument("--q", dest="qs", default="1,2,4,inf")
    nm.add_argument("--save-code", dest="save_code")
    qf = sub.add_parser("qform", parents=[common], help="quadratic-form check")
    qf.add_argument("--A")
    qf.add_argument("--eps", default="auto")
    qf.add_argument("--P", type=float)
    qf.add_argument("--mc", type=int, default=20_000)
    sw = sub.add_parser("sweep", parents=[common], help="metric series over an n-grid")
    sw.add_argument("--spec")
    sw.add_argument("--csv")
    sub.add_parser("selftest", parents=[common], help="deterministic small-instance suite")
    return p


COMMANDS = {
    "capacity": cmd_capacity, "div": cmd_div, "beta": cmd_beta, "metaconverse": cmd_metaconverse,
    "bound": cmd_bound, "analyze": cmd_analyze, "conc": cmd_conc, "norms": cmd_norms,
    "qform": cmd_qform, "sweep": cmd_sweep, "selftest": cmd_selftest,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        threads = args.threads if args.threads is not None else default_threads()
        cfg = RunConfig(math.e if args.base == "e" else 2, args.guard, args.seed, max(1, threads),
                        args.out, {"tol": args.tol})
        inputs = {}
        for attr in ("channel", "code", "p", "q", "cost", "F", "A", "spec"):
            path = getattr(args, attr, None)
            if path:
                inputs[attr] = digest(path)
        payload = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"fblab: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"fblab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    env = envelope(payload, cfg, inputs)
    text = json.dumps(env, indent=2)
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return exit_code(payload)


if __name__ == "__main__":
    sys.exit(main())
