"""Command line driver.

Subcommands: ``gen`` (synthetic trace), ``evict`` (retained sets), ``recall``
(window-vs-oracle recall), ``bounds`` (divergence bound sweep), ``simquery``
(similarity conditions), ``offsets`` (position decay curve), ``alignment``
(window alignment table).

Every run resolves its settings from built-in defaults, then an optional INI
config file (section per subcommand, plus ``[policy]`` and ``[pseudo]``),
then explicit flags, in that order. The resolved settings are echoed as
``# key=value`` lines at the top of each CSV so outputs are self-describing,
and two runs with the same settings and seed produce byte-identical files.
Failures remove partial outputs and exit nonzero with one machine-parsable
``error: <Type>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .attention import PoolMode, VisibilityRule
from .bounds import max_workers_from_env, sweep_bounds
from .errors import InvalidConfig, KvEvictError
from .metrics import (
    QueryCondition,
    compute_recall,
    gold_per_kv_head,
    offset_decay_curve,
    similarity_experiment,
    window_attention_alignment,
)
from .policies import (
    CacheBudget,
    FirstLastContent,
    FixedTokensContent,
    PolicyConfig,
    PolicyKind,
    PseudoQuerySpec,
    RandomSpanContent,
    RandomTokensContent,
    allocate_pyramid_budgets,
    select,
)
from .traceio import generate_synthetic_trace, read_trace_file, write_trace_file

POLICY_NAMES = ("dapq", "snapkv", "h2o", "streamingllm", "pyramidkv")
DEFAULT_ALIGNMENT_WINDOWS = "128,64,32,16,8,4,2,1"


# ---------------------------------------------------------------------------
# settings resolution: defaults <- config file <- flags


def _load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path:
        try:
            with open(path) as f:
                cp.read_file(f)
        except OSError as e:
            raise InvalidConfig(f"cannot read config file {path}: {e}") from e
        except configparser.Error as e:
            raise InvalidConfig(f"malformed config file {path}: {e}") from e
    return cp


def _resolve(defaults: dict, cp: configparser.ConfigParser, section: str, args, keys) -> dict:
    """defaults, overridden by the INI section, overridden by explicit flags."""
    out = dict(defaults)
    if cp.has_section(section):
        for key, value in cp.items(section):
            if key not in defaults:
                raise InvalidConfig(f"unknown key {key!r} in config section [{section}]")
            out[key] = value
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _as_int(settings: dict, key: str) -> int:
    try:
        return int(settings[key])
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"{key} must be an integer, got {settings[key]!r}") from e


def _as_float(settings: dict, key: str) -> float:
    try:
        return float(settings[key])
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"{key} must be a number, got {settings[key]!r}") from e


def _as_bool(settings: dict, key: str) -> bool:
    v = settings[key]
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"{key} must be a boolean, got {v!r}")


def _int_list(raw, what: str) -> list[int]:
    if isinstance(raw, (list, tuple)):
        return [int(x) for x in raw]
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    if not parts:
        raise InvalidConfig(f"{what} list is empty")
    try:
        return [int(p) for p in parts]
    except ValueError as e:
        raise InvalidConfig(f"{what} must be a comma-separated integer list, got {raw!r}") from e


class BudgetSpec:
    """A token count, or a percentage resolved against the prompt length."""

    def __init__(self, raw: str):
        raw = raw.strip()
        if not raw:
            raise InvalidConfig("empty budget entry")
        self.raw = raw
        if raw.endswith("%"):
            try:
                self.percent = float(raw[:-1])
            except ValueError as e:
                raise InvalidConfig(f"bad percentage budget {raw!r}") from e
            if not 0.0 < self.percent <= 100.0:
                raise InvalidConfig(f"percentage budget must be in (0, 100], got {raw!r}")
            self.tokens = None
        else:
            try:
                self.tokens = int(raw)
            except ValueError as e:
                raise InvalidConfig(f"bad budget {raw!r}") from e
            if self.tokens < 1:
                raise InvalidConfig(f"budget must be >= 1, got {raw!r}")
            self.percent = None

    def resolve(self, prompt_len: int) -> int:
        if self.tokens is not None:
            return self.tokens
        return max(1, int(self.percent * prompt_len / 100.0))


def _budget_list(raw) -> list[BudgetSpec]:
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    if not parts:
        raise InvalidConfig("budget list is empty")
    return [BudgetSpec(p) for p in parts]


def _policy_list(raw) -> list[str]:
    if isinstance(raw, (list, tuple)):
        raw = ",".join(str(p) for p in raw)
    names = [p.strip().lower() for p in str(raw).split(",") if p.strip()]
    for name in names:
        if name not in POLICY_NAMES:
            raise InvalidConfig(f"unknown policy {name!r}, expected one of {POLICY_NAMES}")
    if not names:
        raise InvalidConfig("no policies requested")
    return names


_POLICY_DEFAULTS = {
    "window": "32",
    "kernel": "7",
    "pooling": "max",
    "sink_size": "4",
    "recent_size": "",
    "visibility": "prompt_plus_preceding_pseudo",
    "dapq_pooling": "false",
    "h2o_normalize": "false",
    "pyramid_beta": "20",
}

_PSEUDO_DEFAULTS = {
    "length": "32",
    "strategy": "first_last",
    "first": "4",
    "last": "28",
    "seed": "0",
    "token_ids": "",
    "offset": "0",
    "insert_index": "",
}


def _policy_config(cp: configparser.ConfigParser, args, kind: PolicyKind) -> PolicyConfig:
    settings = _resolve(_POLICY_DEFAULTS, cp, "policy", args, ["window", "kernel"])
    try:
        pooling = PoolMode(str(settings["pooling"]).strip().lower())
    except ValueError as e:
        raise InvalidConfig(f"unknown pooling mode {settings['pooling']!r}") from e
    try:
        visibility = VisibilityRule(str(settings["visibility"]).strip().lower())
    except ValueError as e:
        raise InvalidConfig(f"unknown visibility rule {settings['visibility']!r}") from e
    recent_raw = str(settings["recent_size"]).strip()
    return PolicyConfig(
        kind=kind,
        window=_as_int(settings, "window"),
        kernel=_as_int(settings, "kernel"),
        pooling=pooling,
        sink_size=_as_int(settings, "sink_size"),
        recent_size=int(recent_raw) if recent_raw else None,
        visibility=visibility,
        dapq_pooling=_as_bool(settings, "dapq_pooling"),
        h2o_normalize=_as_bool(settings, "h2o_normalize"),
        pyramid_beta=_as_int(settings, "pyramid_beta"),
    )


def _pseudo_spec(cp: configparser.ConfigParser, args) -> PseudoQuerySpec:
    settings = _resolve(_PSEUDO_DEFAULTS, cp, "pseudo", args, [])
    length = _as_int(settings, "length")
    name = str(settings["strategy"]).strip().lower()
    if name == "first_last":
        strategy = FirstLastContent(first=_as_int(settings, "first"), last=_as_int(settings, "last"))
    elif name == "random_tokens":
        strategy = RandomTokensContent(seed=_as_int(settings, "seed"))
    elif name == "random_span":
        strategy = RandomSpanContent(seed=_as_int(settings, "seed"))
    elif name == "fixed":
        ids = str(settings["token_ids"]).strip()
        if not ids:
            raise InvalidConfig("fixed content strategy requires token_ids")
        strategy = FixedTokensContent(token_ids=tuple(_int_list(ids, "token_ids")))
    else:
        raise InvalidConfig(f"unknown pseudo content strategy {name!r}")
    insert_raw = str(settings["insert_index"]).strip()
    return PseudoQuerySpec(
        length=length,
        strategy=strategy,
        position_offset=_as_int(settings, "offset"),
        insert_index=int(insert_raw) if insert_raw else None,
    )


# ---------------------------------------------------------------------------
# deterministic CSV output


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str, fieldnames, rows, provenance: dict) -> None:
    """Atomically write provenance comments, a header row and data rows."""
    out_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", newline="") as f:
            for key, value in provenance.items():
                f.write(f"# {key}={_format(value)}\r\n")
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([_format(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_trace_write(trace, path: str) -> None:
    out_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)
    tmp = path + ".tmp"
    try:
        write_trace_file(trace, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _layer_map(trace, fn):
    """Apply fn to every layer, optionally in parallel, preserving order."""
    indices = range(trace.header.num_layers)
    workers = max_workers_from_env()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda i: fn(trace.layer(i)), indices))
    return [fn(trace.layer(i)) for i in indices]


# ---------------------------------------------------------------------------
# subcommands


_GEN_DEFAULTS = {
    "layers": "2",
    "q_heads": "4",
    "kv_heads": "2",
    "head_dim": "32",
    "prompt_len": "512",
    "decode_len": "32",
    "theta": "10000.0",
    "seed": "0",
}


def cmd_gen(args, cp) -> int:
    settings = _resolve(
        _GEN_DEFAULTS, cp, "gen", args,
        ["layers", "q_heads", "kv_heads", "head_dim", "prompt_len", "decode_len", "theta", "seed"],
    )
    if not args.out:
        raise InvalidConfig("gen requires --out")
    trace = generate_synthetic_trace(
        num_layers=_as_int(settings, "layers"),
        num_q_heads=_as_int(settings, "q_heads"),
        num_kv_heads=_as_int(settings, "kv_heads"),
        head_dim=_as_int(settings, "head_dim"),
        prompt_len=_as_int(settings, "prompt_len"),
        decode_len=_as_int(settings, "decode_len"),
        seed=_as_int(settings, "seed"),
        rope_theta=_as_float(settings, "theta"),
    )
    _atomic_trace_write(trace, args.out)
    print(f"wrote {args.out}")
    return 0


def _policy_results(trace, name: str, budget_spec: BudgetSpec, cp, args, spec):
    """Retained sets for one policy at one budget, one EvictionResult per layer."""
    prompt_len = trace.header.prompt_len
    budget_tokens = budget_spec.resolve(prompt_len)
    if name == "pyramidkv":
        cfg = _policy_config(cp, args, PolicyKind.SNAPKV)
        per_layer = allocate_pyramid_budgets(
            budget_tokens, trace.header.num_layers, window=cfg.window, beta=cfg.pyramid_beta
        )
        results = _layer_map(
            trace,
            lambda layer: select(layer, CacheBudget(per_layer[layer.layer_index]), cfg),
        )
        return results, per_layer, budget_tokens
    kind = PolicyKind(name)
    cfg = _policy_config(cp, args, kind)
    results = _layer_map(
        trace, lambda layer: select(layer, CacheBudget(budget_tokens), cfg, spec=spec)
    )
    return results, [budget_tokens] * trace.header.num_layers, budget_tokens


def _common_provenance(args, settings_extra: dict) -> dict:
    prov = {"command": args.command}
    prov.update(settings_extra)
    return prov


def cmd_evict(args, cp) -> int:
    if not args.trace or not args.out:
        raise InvalidConfig("evict requires --trace and --out")
    trace = read_trace_file(args.trace)
    policies = _policy_list(args.policy or "dapq,snapkv,h2o,streamingllm")
    budgets = _budget_list(args.budgets or "64,128,256")
    spec = _pseudo_spec(cp, args)
    cfg_echo = _policy_config(cp, args, PolicyKind.SNAPKV)
    rows = []
    for name in policies:
        for bs in budgets:
            results, per_layer, budget_tokens = _policy_results(
                trace, name, bs, cp, args, spec
            )
            for res in results:
                for g, kept in enumerate(res.retained):
                    rows.append([
                        name, bs.raw, budget_tokens, res.layer, g, per_layer[res.layer],
                        res.budget_used, " ".join(str(i) for i in kept.tolist()),
                    ])
    prov = _common_provenance(args, {
        "trace": args.trace,
        "policies": ",".join(policies),
        "budgets": ",".join(b.raw for b in budgets),
        "window": cfg_echo.window, "kernel": cfg_echo.kernel,
        "pooling": cfg_echo.pooling.value, "sink_size": cfg_echo.sink_size,
        "recent_size": cfg_echo.effective_recent,
        "visibility": cfg_echo.visibility.value,
        "dapq_pooling": cfg_echo.dapq_pooling,
        "h2o_normalize": cfg_echo.h2o_normalize,
        "pyramid_beta": cfg_echo.pyramid_beta,
        "pseudo_length": spec.length,
        "pseudo_strategy": type(spec.strategy).__name__,
        "seed": args.seed or 0,
    })
    if "pyramidkv" in policies:
        prov["pyramidkv_allocation"] = "linear-approximation"
    write_csv(
        args.out,
        ["policy", "budget_spec", "budget_tokens", "layer", "kv_head",
         "layer_budget", "budget_used", "retained"],
        rows, prov,
    )
    print(f"wrote {args.out}")
    return 0


def cmd_recall(args, cp) -> int:
    if not args.trace or not args.out:
        raise InvalidConfig("recall requires --trace and --out")
    trace = read_trace_file(args.trace)
    if trace.header.decode_len == 0:
        raise InvalidConfig("recall needs a trace with decode-phase queries")
    policies = _policy_list(args.policy or "dapq,snapkv,h2o,streamingllm")
    budgets = _budget_list(args.budgets or "1%,2%,5%,10%")
    spec = _pseudo_spec(cp, args)
    cfg_echo = _policy_config(cp, args, PolicyKind.SNAPKV)
    rows = []
    gold_cache: dict[tuple[int, int], list] = {}

    def gold_for(layer_idx: int, budget_tokens: int):
        key = (layer_idx, budget_tokens)
        if key not in gold_cache:
            gold_cache[key] = gold_per_kv_head(trace.layer(layer_idx), budget_tokens)
        return gold_cache[key]

    for name in policies:
        for bs in budgets:
            results, per_layer, budget_tokens = _policy_results(
                trace, name, bs, cp, args, spec
            )
            per_policy = []
            for res in results:
                golds = gold_for(res.layer, per_layer[res.layer])
                for g, kept in enumerate(res.retained):
                    r = compute_recall(golds[g], kept)
                    per_policy.append(r)
                    rows.append([name, bs.raw, budget_tokens, res.layer, g,
                                 per_layer[res.layer], len(golds[g]), r])
            rows.append([name, bs.raw, budget_tokens, "all", "all", "",
                         "", float(np.mean(per_policy))])
    prov = _common_provenance(args, {
        "trace": args.trace,
        "policies": ",".join(policies),
        "budgets": ",".join(b.raw for b in budgets),
        "window": cfg_echo.window, "kernel": cfg_echo.kernel,
        "pooling": cfg_echo.pooling.value, "sink_size": cfg_echo.sink_size,
        "recent_size": cfg_echo.effective_recent,
        "visibility": cfg_echo.visibility.value,
        "dapq_pooling": cfg_echo.dapq_pooling,
        "h2o_normalize": cfg_echo.h2o_normalize,
        "pyramid_beta": cfg_echo.pyramid_beta,
        "pseudo_length": spec.length,
        "pseudo_strategy": type(spec.strategy).__name__,
        "seed": args.seed or 0,
    })
    if "pyramidkv" in policies:
        prov["pyramidkv_allocation"] = "linear-approximation"
    write_csv(
        args.out,
        ["policy", "budget_spec", "budget_tokens", "layer", "kv_head",
         "layer_budget", "gold_size", "recall"],
        rows, prov,
    )
    print(f"wrote {args.out}")
    return 0


def cmd_bounds(args, cp) -> int:
    settings = _resolve(
        {"trials": "1000", "d_ks": "2,8,64", "key_counts": "4,64", "seed": "0"},
        cp, "bounds", args, ["trials", "seed"],
    )
    if not args.out:
        raise InvalidConfig("bounds requires --out")
    trials = _as_int(settings, "trials")
    if trials < 1:
        raise InvalidConfig(f"trials must be >= 1, got {trials}")
    d_ks = _int_list(settings["d_ks"], "d_ks")
    key_counts = _int_list(settings["key_counts"], "key_counts")
    seed = _as_int(settings, "seed")
    results = sweep_bounds(trials, d_ks=d_ks, key_counts=key_counts, seed=seed)
    rows = [
        [d, n, t, r.sim_q, r.k_max, r.norm_q, r.norm_q2,
         r.lhs1, r.rhs1, r.lhs2, r.rhs2, r.lhs4, r.rhs4, r.lhs5, r.rhs5, r.holds]
        for d, n, t, r in results
    ]
    failures = sum(1 for *_ignored, r in results if not r.holds)
    prov = _common_provenance(args, {
        "trials": trials, "d_ks": ",".join(map(str, d_ks)),
        "key_counts": ",".join(map(str, key_counts)), "seed": seed,
        "slack": 1e-9, "failures": failures,
    })
    write_csv(
        args.out,
        ["d_k", "n_keys", "trial", "sim_q", "k_max", "norm_q", "norm_q2",
         "lhs1", "rhs1", "lhs2", "rhs2", "lhs4", "rhs4", "lhs5", "rhs5", "holds"],
        rows, prov,
    )
    print(f"wrote {args.out} ({failures} failures)")
    return 0


def cmd_simquery(args, cp) -> int:
    settings = _resolve(
        {"condition": "all", "trials": "100", "seed": "0", "window": "32"},
        cp, "simquery", args, ["condition", "trials", "seed", "window"],
    )
    if not args.trace or not args.out:
        raise InvalidConfig("simquery requires --trace and --out")
    trace = read_trace_file(args.trace)
    raw = str(settings["condition"]).strip().lower()
    if raw == "all":
        conditions = list(QueryCondition)
    else:
        try:
            conditions = [QueryCondition(raw)]
        except ValueError as e:
            names = [c.value for c in QueryCondition] + ["all"]
            raise InvalidConfig(f"unknown condition {raw!r}, expected one of {names}") from e
    trials = _as_int(settings, "trials")
    seed = _as_int(settings, "seed")
    window = _as_int(settings, "window")
    rows = []
    reports = []
    for cond in conditions:
        rep = similarity_experiment(trace, cond, trials=trials, seed=seed, window=window)
        reports.append(rep)
        for t, (pre, post) in enumerate(rep.per_trial):
            rows.append([cond.value, t, pre, post])
        rows.append([cond.value, "mean", rep.pre_rope, rep.post_rope])
    prov = _common_provenance(args, {
        "trace": args.trace, "trials": trials, "seed": seed,
        "window": reports[0].window, "aggregation": reports[0].aggregation,
    })
    write_csv(args.out, ["condition", "trial", "pre_rope", "post_rope"], rows, prov)
    print(f"wrote {args.out}")
    return 0


def default_offset_grid(prompt_len: int, true_start: int) -> list[int]:
    """Offsets geometric in distance from the true start, densest near it."""
    dists = [0]
    d = 1
    while d <= true_start:
        dists.append(d)
        d *= 2
    if dists[-1] != true_start:
        dists.append(true_start)
    return [true_start - d for d in dists if 0 <= true_start - d <= prompt_len]


def cmd_offsets(args, cp) -> int:
    settings = _resolve(
        {"offsets": "", "seed": "0", "window": "32"},
        cp, "offsets", args, ["offsets", "seed", "window"],
    )
    if not args.trace or not args.out:
        raise InvalidConfig("offsets requires --trace and --out")
    trace = read_trace_file(args.trace)
    window = _as_int(settings, "window")
    seed = _as_int(settings, "seed")
    raw = str(settings["offsets"]).strip()
    if raw:
        offsets = _int_list(raw, "offsets")
    else:
        if trace.header.decode_len > 0:
            true_start = int(trace.decode_positions[0])
        else:
            true_start = int(trace.prompt_positions[-1]) + 1
        offsets = default_offset_grid(trace.header.prompt_len, true_start)
    curve = offset_decay_curve(trace, offsets, seed=seed, window=window)
    rows = [
        [o, abs(o - curve.true_start), sim, curve.spearman_rho]
        for o, sim in curve.points
    ]
    prov = _common_provenance(args, {
        "trace": args.trace, "seed": seed, "window": curve.window,
        "true_start": curve.true_start, "spearman_rho": curve.spearman_rho,
    })
    write_csv(args.out, ["offset", "abs_distance", "mean_similarity", "spearman_rho"], rows, prov)
    print(f"wrote {args.out}")
    return 0


def cmd_alignment(args, cp) -> int:
    settings = _resolve(
        {"window_sizes": DEFAULT_ALIGNMENT_WINDOWS, "policies": "dapq,snapkv"},
        cp, "alignment", args, ["window_sizes"],
    )
    if not args.trace or not args.out:
        raise InvalidConfig("alignment requires --trace and --out")
    trace = read_trace_file(args.trace)
    sizes = _int_list(settings["window_sizes"], "window_sizes")
    policies = [p.strip().lower() for p in str(settings["policies"]).split(",") if p.strip()]
    spec = _pseudo_spec(cp, args)
    cfg = _policy_config(cp, args, PolicyKind.DAPQ)
    table = window_attention_alignment(
        trace, sizes, policies=policies, spec_template=spec, cfg=cfg
    )
    rows = [[r.policy, r.window, r.mean_cosine] for r in table]
    prov = _common_provenance(args, {
        "trace": args.trace, "window_sizes": ",".join(map(str, sizes)),
        "policies": ",".join(policies),
        "visibility": cfg.visibility.value,
    })
    write_csv(args.out, ["policy", "window_size", "mean_cosine"], rows, prov)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvevict",
        description="KV-cache eviction policies and measurements over attention traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=True):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--seed", type=int, default=None, help="root random seed")
        if trace:
            p.add_argument("--trace", default=None, help="input .kvqt trace")

    g = sub.add_parser("gen", help="generate a synthetic trace")
    common(g, trace=False)
    g.add_argument("--layers", type=int, default=None)
    g.add_argument("--q-heads", dest="q_heads", type=int, default=None)
    g.add_argument("--kv-heads", dest="kv_heads", type=int, default=None)
    g.add_argument("--head-dim", dest="head_dim", type=int, default=None)
    g.add_argument("--prompt-len", dest="prompt_len", type=int, default=None)
    g.add_argument("--decode-len", dest="decode_len", type=int, default=None)
    g.add_argument("--theta", type=float, default=None)

    e = sub.add_parser("evict", help="run eviction policies, dump retained sets")
    common(e)
    e.add_argument("--policy", action="append", default=None,
                   help=f"one of {POLICY_NAMES}; repeatable")
    e.add_argument("--budgets", default=None, help="comma list of counts or percents")
    e.add_argument("--window", type=int, default=None)
    e.add_argument("--kernel", type=int, default=None)

    r = sub.add_parser("recall", help="window-vs-oracle recall per policy and budget")
    common(r)
    r.add_argument("--policy", action="append", default=None)
    r.add_argument("--budgets", default=None)
    r.add_argument("--window", type=int, default=None)
    r.add_argument("--kernel", type=int, default=None)

    b = sub.add_parser("bounds", help="random sweep of the divergence bounds")
    common(b, trace=False)
    b.add_argument("--trials", type=int, default=None)

    s = sub.add_parser("simquery", help="pseudo-vs-true query similarity conditions")
    common(s)
    s.add_argument("--condition", default=None,
                   help="sc_sp, dc_sp, sc_dp, dc_dp or all")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--window", type=int, default=None)

    o = sub.add_parser("offsets", help="window position offset decay curve")
    common(o)
    o.add_argument("--offsets", default=None, help="comma list of starting positions")
    o.add_argument("--window", type=int, default=None)

    a = sub.add_parser("alignment", help="window attention alignment table")
    common(a)
    a.add_argument("--window-sizes", dest="window_sizes", default=None)

    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "evict": cmd_evict,
    "recall": cmd_recall,
    "bounds": cmd_bounds,
    "simquery": cmd_simquery,
    "offsets": cmd_offsets,
    "alignment": cmd_alignment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = _load_config(args.config)
        return _COMMANDS[args.command](args, cp)
    except KvEvictError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
