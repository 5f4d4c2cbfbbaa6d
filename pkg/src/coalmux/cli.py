"""Command-line front end: ``coalmux <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric degeneracy.
Failures print one JSON record to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .backbone import NULL_DESCRIPTION, NULLS, NoiseCorrectedBackbone
from .io import (
    DataFileError,
    atomic_write,
    load_network_dir,
    load_partition,
    load_partition_metadata,
    metadata_block,
    params_from_json,
    params_to_json,
    partition_document,
    save_network,
    scores_to_json,
    write_csv,
)
from .metrics import (
    AeiEntry,
    DegenerateNullError,
    aei_table,
    degree_by_layer,
    layer_similarity,
    participation_and_power,
    reduced_mutual_information,
    rmi,
)
from .network import ModelParams, NetworkError, pair_key, temporal_couplings
from .quality import DegenerateError, multilayer_modularity, total_loglik
from .selection import SelectionConfig, evaluate, monolayer_scores, select, worker_pool
from .synth import SyntheticSpec, case_preset, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4

AEI_CONVENTION = (
    "aei = (ei_null_mean - ei_obs) / (ei_null_mean + 1); null = degree-preserving "
    "double-edge swaps of the two communities' induced subgraph"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- argument helpers ---------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _kmax(text: str) -> int | None:
    if text.lower() in ("none", "inf", "unbounded"):
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--kmax must be >= 1 or 'none'")
    return value


def _coupling(text: str) -> str:
    if text in ("all-pairs", "temporal") or text.startswith("custom:"):
        return text
    raise argparse.ArgumentTypeError("--coupling must be all-pairs, temporal or custom:FILE")


def _workers() -> int:
    raw = os.environ.get("COALMUX_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"COALMUX_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("COALMUX_THREADS must be >= 1")
    return value


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_digests(**paths) -> dict:
    """Content hashes of the inputs (paths vary between runs, contents should not)."""
    out = {}
    for name, p in paths.items():
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            out[name] = {f.name: _digest(f) for f in sorted(p.glob("*.csv"))}
        else:
            out[name] = _digest(p)
    return out


_PATH_OPTIONS = {"net", "out", "partition", "compare", "baseline", "spec", "params", "func", "command"}


MODULARITY_NOTE = "unnormalized (no 1/2mu factor); same maximizers as the normalized form"


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _PATH_OPTIONS}
    cfg["command"] = args.command
    return cfg


def _metadata(args, **extra) -> dict:
    inputs = _input_digests(
        net=getattr(args, "net", None),
        partition=getattr(args, "partition", None),
        compare=getattr(args, "compare", None),
        baseline=getattr(args, "baseline", None),
        spec=getattr(args, "spec", None),
        params=getattr(args, "params", None),
    )
    if getattr(args, "coupling", "").startswith("custom:"):
        inputs["coupling"] = _digest(Path(args.coupling[len("custom:"):]))
    return metadata_block(_config(args), inputs=inputs, **extra)


def _load_net(args):
    coupling = args.coupling
    if coupling.startswith("custom:"):
        return load_network_dir(args.net, coupling[len("custom:"):])
    net = load_network_dir(args.net)
    if coupling == "temporal":
        net = net.with_couplings(temporal_couplings(net.layers))
    return net


def _write_json(path, doc) -> None:
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _selection_config(args, workers=1) -> SelectionConfig:
    try:
        return SelectionConfig(
            gamma_grid=args.gamma_grid,
            omega_grid=args.omega_grid,
            step_gamma=args.step_gamma,
            step_omega=args.step_omega,
            runs=args.runs,
            max_passes=args.max_passes,
            base_seed=args.seed,
            k_max=args.kmax,
            mode=args.mode,
            workers=workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        try:
            spec = SyntheticSpec.load(args.spec)
        except (ValueError, TypeError) as exc:
            raise DataFileError(args.spec, 0, str(exc)) from None
    elif args.preset == "case":
        spec = case_preset()
    else:
        spec = SyntheticSpec()
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    net, truth = generate(spec)
    out = Path(args.out)
    meta = _metadata(args, spec=spec.to_json())
    save_network(net, out, meta)
    params = ModelParams.uniform(net)
    doc = partition_document(truth, params, total_loglik(net, truth), meta)
    _write_json(out / "truth.json", doc)
    _write_json(out / "spec.json", spec.to_json())
    return EXIT_OK


def cmd_backbone(args) -> int:
    if not args.keep_all and not 0.0 < args.alpha <= 1.0:
        raise UsageError("--alpha must lie in (0, 1]")
    net = _load_net(args)
    model = NoiseCorrectedBackbone(alpha=args.alpha, null=args.null, keep_all=args.keep_all)
    filtered = model.fit_transform(net)
    out = Path(args.out)
    meta = _metadata(args, null=("keep-all bypass" if args.keep_all else NULL_DESCRIPTION[args.null]))
    save_network(filtered, out, meta)
    ids = net.registry.ids
    rows, dens = [], []
    for layer_before, layer_after in zip(net.layers, filtered.layers):
        res = model.results_.get(layer_before.key)
        if res is not None:
            for i, j, w, p, k in zip(res.src, res.dst, res.weight, res.pvalues, res.kept):
                rows.append((res.layer_id, ids[i], ids[j], float(w), float(p), bool(k)))
        else:
            for i, j, w in zip(layer_before.src, layer_before.dst, layer_before.weight):
                rows.append((layer_before.key, ids[i], ids[j], float(w), None, True))
        dens.append((layer_before.key, layer_before.density(), layer_after.density()))
    write_csv(out / "pvalues.csv", ["layer_id", "source", "target", "weight", "pvalue", "kept"], rows, meta)
    write_csv(out / "densities.csv", ["layer_id", "density_before", "density_after"], dens, meta)
    return EXIT_OK


def _scores_doc(net, partition, params, mode):
    caps = dict(params.k_max)
    if mode == "monolayer":
        scores = monolayer_scores(net, partition, caps)
    else:
        scores = total_loglik(net, partition, caps)
    return scores


def cmd_score(args) -> int:
    net = _load_net(args)
    partition, params, _ = load_partition(args.partition)
    partition.check_domain(net)
    if args.kmax is not None:
        params = params.replace(k_max={k: args.kmax for k in net.layer_keys})
    scores = _scores_doc(net, partition, params, args.mode)
    doc = {
        "scores": scores_to_json(scores),
        "modularity": multilayer_modularity(net, params if args.mode == "multilayer" else params.monolayer(), partition),
        "metadata": _metadata(args, modularity=MODULARITY_NOTE),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.gamma <= 0 or args.omega < 0:
        raise UsageError("--gamma must be > 0 and --omega >= 0")
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    net = _load_net(args)
    if args.params:
        params = params_from_json(json.loads(Path(args.params).read_text(encoding="utf-8")))
    else:
        omega = 0.0 if args.mode == "monolayer" else args.omega
        params = ModelParams.uniform(net, args.gamma, omega, 1.0, args.kmax)
    config = _selection_config(args, _workers())
    with worker_pool(config.workers) as pool:
        partition, scores = evaluate(net, params, config, pool=pool)
    if args.mode == "monolayer":
        scores = monolayer_scores(net, partition, dict(params.k_max))
    _write_json(args.out, partition_document(partition, params, scores, _metadata(args, modularity=MODULARITY_NOTE)))
    return EXIT_OK


def _trace_lines(meta, result, mode) -> list[str]:
    lines = [json.dumps({"metadata": meta}, sort_keys=True)]
    if mode == "monolayer":
        for key, trace in result.layer_traces.items():
            for rec in trace.records:
                lines.append(json.dumps({"layer": key, **rec.to_json()}, sort_keys=True))
    else:
        for rec in result.trace.records:
            lines.append(json.dumps(rec.to_json(), sort_keys=True))
    return lines


def cmd_select(args) -> int:
    net = _load_net(args)
    config = _selection_config(args, _workers())
    out = Path(args.out)
    meta = _metadata(args, modularity=MODULARITY_NOTE)
    result = select(net, config)
    _write_json(out / "partition.json", partition_document(result.partition, result.params, result.scores, meta))
    atomic_write(out / "trace.jsonl", "\n".join(_trace_lines(meta, result, config.mode)) + "\n")
    if config.mode == "multilayer" and not args.no_baseline:
        base = select(net, config.replace(mode="monolayer"))
        base_meta = {**meta, "config": {**meta["config"], "mode": "monolayer"}}
        _write_json(out / "baseline.json", partition_document(base.partition, base.params, base.scores, base_meta))
    return EXIT_OK


# -- metric tables ----------------------------------------------------------------


def _rmi_rows(net, p1, p2):
    rows = []
    for ka in net.layer_keys:
        for kb in net.layer_keys:
            a, b = p1.layer_labels(ka), p2.layer_labels(kb)
            if not set(a) & set(b):
                rows.append((ka, kb, None, None, None, 0))
                continue
            res = reduced_mutual_information(a, b)
            rows.append((ka, kb, res.rmi, rmi(a, b, normalized=True), res.approximate, res.n))
    return rows


RMI_HEADER = ["layer_a", "layer_b", "rmi", "rmi_normalized", "approximate", "n_common"]
AEI_HEADER = ["layer_id", "coalition_a", "coalition_b", "m_int", "m_ext", "ei_obs",
              "ei_null_mean", "ei_null_sd", "aei", "note"]


def _aei_rows(entries):
    rows = []
    for e in entries:
        if isinstance(e, AeiEntry):
            rows.append((e.layer, e.c1, e.c2, e.m_int, e.m_ext, e.ei_obs, e.ei_null_mean, e.ei_null_sd, e.aei, ""))
        else:
            layer, c1, c2, reason = e
            rows.append((layer, c1, c2, None, None, None, None, None, None, reason))
    return rows


def _write_metric_tables(out: Path, net, partition, compare, args, meta) -> None:
    write_csv(out / "rmi_matrix.csv", RMI_HEADER, _rmi_rows(net, partition, compare), meta)
    entries = aei_table(net, partition, args.rewires, args.seed, args.aggregate)
    write_csv(out / "aei.csv", AEI_HEADER, _aei_rows(entries), {**meta, "aei_convention": AEI_CONVENTION})
    rates, shares = participation_and_power(net, partition)
    n = net.n_vertices
    write_csv(
        out / "participation.csv",
        ["layer_id", "n_active", "n_registry", "rate"],
        ((r.layer, r.n_active, n, r.rate) for r in rates),
        meta,
    )
    write_csv(
        out / "power_shares.csv",
        ["layer_id", "coalition", "n_members", "member_share", "power_share"],
        ((s.layer, s.coalition, s.n_members, s.member_share, s.power_share) for s in shares),
        meta,
    )
    if len(net.layers) >= 2:
        jac, tau = layer_similarity(net)
        keys = net.layer_keys
        write_csv(
            out / "layer_similarity.csv",
            ["layer_a", "layer_b", "jaccard", "kendall_tau_b"],
            ((keys[s], keys[r], jac[s, r], tau[s, r]) for s in range(len(keys)) for r in range(len(keys))),
            meta,
        )


def cmd_metrics(args) -> int:
    if args.rewires < 2:
        raise UsageError("--rewires must be >= 2")
    net = _load_net(args)
    partition = load_partition(args.partition)[0]
    partition.check_domain(net)
    compare = load_partition(args.compare)[0] if args.compare else partition
    compare.check_domain(net)
    out = Path(args.out)
    _write_metric_tables(out, net, partition, compare, args, _metadata(args))
    return EXIT_OK


# -- report ------------------------------------------------------------------------


def format_delta(delta: float) -> str:
    """``Δ=86, likelihood ratio e^86 ≈ 10^37`` for a log-likelihood gain of 86."""
    shown = int(round(delta))
    return f"Δ={shown}, likelihood ratio e^{shown} ≈ 10^{int(round(shown / math.log(10)))}"


def cmd_report(args) -> int:
    if args.rewires < 2:
        raise UsageError("--rewires must be >= 2")
    net = _load_net(args)
    partition, params, _ = load_partition(args.partition)
    partition.check_domain(net)
    mode = args.mode or load_partition_metadata(args.partition).get("config", {}).get("mode", "multilayer")
    scores = _scores_doc(net, partition, params, mode)
    out = Path(args.out)
    meta = _metadata(args, report_mode=mode)

    rows = [("intra", k, v) for k, v in scores.intra.items()]
    rows += [("inter", pair_key(p), v) for p, v in scores.inter.items()]
    rows += [("total_intra", "", scores.intra_total), ("total_inter", "", scores.inter_total),
             ("total", "", scores.total)]
    summary = {"mode": mode, "total": scores.total, "intra_total": scores.intra_total,
               "inter_total": scores.inter_total}
    if args.baseline:
        base, base_params, _ = load_partition(args.baseline)
        base.check_domain(net)
        base_scores = monolayer_scores(net, base, dict(base_params.k_max))
        delta = scores.total - base_scores.total
        rows += [("baseline_total", "", base_scores.total), ("delta", "", delta)]
        summary.update(
            baseline_total=base_scores.total,
            delta=delta,
            log10_likelihood_ratio=delta / math.log(10),
            delta_text=format_delta(delta),
        )
    write_csv(out / "scores.csv", ["term", "key", "value"], rows, meta)
    _write_json(out / "summary.json", {**summary, "params": params_to_json(params), "metadata": meta})

    # composition tables in percent
    rates, shares = participation_and_power(net, partition)
    write_csv(
        out / "composition.csv",
        ["layer_id", "coalition", "n_members", "member_share_pct", "power_share_pct"],
        ((s.layer, s.coalition, s.n_members, 100 * s.member_share,
          None if s.power_share is None else 100 * s.power_share) for s in shares),
        meta,
    )
    n = net.n_vertices
    write_csv(
        out / "participation.csv",
        ["layer_id", "n_active", "n_registry", "rate_pct"],
        ((r.layer, r.n_active, n, 100 * r.rate) for r in rates),
        meta,
    )
    write_csv(out / "rmi_matrix.csv", RMI_HEADER, _rmi_rows(net, partition, partition), meta)
    entries = aei_table(net, partition, args.rewires, args.seed, args.aggregate)
    write_csv(out / "aei.csv", AEI_HEADER, _aei_rows(entries), {**meta, "aei_convention": AEI_CONVENTION})
    degrees = degree_by_layer(net)
    ids = net.registry.ids
    deg_rows = []
    for li, layer in enumerate(net.layers):
        labels = partition.layer_labels(layer.key)
        for v in range(n):
            deg_rows.append((ids[v], layer.key, int(degrees[v, li]), labels.get(ids[v])))
    write_csv(out / "degree_by_layer.csv", ["vertex_id", "layer_id", "degree", "coalition"], deg_rows, meta)
    if "delta_text" in summary:
        print(summary["delta_text"])
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _add_common(p, net=True):
    if net:
        p.add_argument("--net", required=True, help="directory with vertices/layers/edges CSV files")
    p.add_argument("--coupling", type=_coupling, default="all-pairs",
                   help="all-pairs, temporal, or custom:FILE (layer_a,layer_b rows)")
    p.add_argument("--seed", type=int, default=0)


def _add_selection(p):
    p.add_argument("--mode", choices=("multilayer", "monolayer"), default="multilayer")
    p.add_argument("--runs", type=int, default=10, help="maximizer runs per evaluation")
    p.add_argument("--kmax", type=_kmax, default=3, help="per-layer community cap ('none' for unbounded)")
    p.add_argument("--gamma-grid", type=_float_list, default=[0.6, 0.8, 1.0, 1.2, 1.4])
    p.add_argument("--omega-grid", type=_float_list, default=[0.0, 0.25, 0.5, 1.0, 2.0])
    p.add_argument("--step-gamma", type=float, default=0.05)
    p.add_argument("--step-omega", type=float, default=0.05)
    p.add_argument("--max-passes", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coalmux", description="Multilayer coalition inference.")
    parser.add_argument("--version", action="version", version=f"coalmux {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a planted multilayer network")
    p.add_argument("--spec", help="SyntheticSpec JSON file")
    p.add_argument("--preset", choices=("case", "default"), default="case")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed stored in --spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("backbone", help="filter edges against the count null")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--null", choices=NULLS, default="binomial")
    p.add_argument("--keep-all", action="store_true", help="skip the test; only binarize")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backbone)

    p = sub.add_parser("score", help="likelihood breakdown of a stored partition")
    _add_common(p)
    p.add_argument("--partition", required=True)
    p.add_argument("--mode", choices=("multilayer", "monolayer"), default="multilayer")
    p.add_argument("--kmax", type=_kmax, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("infer", help="consensus partition at fixed parameters")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--params", help="ModelParams JSON (overrides --gamma/--omega/--kmax)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("select", help="grid start plus coordinate ascent on the log-likelihood")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--no-baseline", action="store_true", help="skip the monolayer baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    for name, func, text in (("metrics", cmd_metrics, "partition metrics tables"),
                             ("report", cmd_report, "score breakdown and report tables")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--partition", required=True)
        if name == "metrics":
            p.add_argument("--compare", help="second partition for the RMI grid")
        else:
            p.add_argument("--baseline", help="monolayer partition for the delta")
            p.add_argument("--mode", choices=("multilayer", "monolayer"), default=None)
        p.add_argument("--rewires", type=int, default=100, help="AEI null samples")
        p.add_argument("--aggregate", action="store_true", help="pool all coalition pairs per layer")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (DegenerateError, DegenerateNullError) as exc:
        return _fail(EXIT_DEGENERATE, "numeric_degeneracy", str(exc))
    except (DataFileError, NetworkError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(EXIT_DATA, "data", str(exc))
    except Exception as exc:  # unexpected: still emit a machine-readable record
        return _fail(1, "internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
