"""Command-line entry point.

Every command writes its outputs plus ``manifest.json`` into ``--out``;
``agriprivacy replay MANIFEST --out DIR`` re-runs the recorded command and
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import ClusterSpec, GeneratorConfig
from .fedproto import MarketNode, ResearcherNode, query_aggregates, researcher_session
from .fedproto.simulate import INPROC, SOCKET, Simulation
from .linkage import link, load_monthly_csv, load_timeseries_csv
from .pca import ProjectedMatrix
from .privacy_eval import SweepConfig, epsilon_sweep, membership_power, select_optimal_epsilon
from .scenario import PRODUCT, load_scenario, make_scenario

log = logging.getLogger("agriprivacy")

MANIFEST = "manifest.json"
FILES_INDEX = "files.json"


class ValidationError(ValueError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _manifest(command: str, config: dict) -> str:
    return _dump({
        "command": command,
        "config": config,
        "versions": {"agriprivacy": __version__, "numpy": np.__version__},
    })


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None


def _scenario_config(args) -> dict:
    cfg = {
        "seed": args.seed,
        "markets": args.markets,
        "rows_per_market": args.rows_per_market,
        "public_rows": args.public_rows,
        "weeks": args.weeks,
        "clusters": None,
    }
    if getattr(args, "generator_config", None):
        path = Path(args.generator_config)
        _require(path.is_file(), f"generator config {path} does not exist")
        gen = GeneratorConfig.from_json(path.read_text(encoding="utf-8"))
        cfg["clusters"] = [c.to_dict() for c in gen.clusters]
        cfg["seed"] = gen.seed
    _require(cfg["markets"] >= 1, "--markets must be >= 1")
    _require(cfg["rows_per_market"] >= 1, "--rows-per-market must be >= 1")
    _require(cfg["public_rows"] >= 3, "--public-rows must be >= 3")
    _require(1 <= cfg["weeks"] <= 52, "--weeks must lie in [1, 52]")
    return cfg


def _build_scenario(cfg: dict):
    kwargs = {}
    if cfg.get("clusters"):
        kwargs["clusters"] = [ClusterSpec.from_dict(c) for c in cfg["clusters"]]
    return make_scenario(cfg["seed"], cfg["markets"], cfg["rows_per_market"], cfg["public_rows"],
                         weeks=cfg["weeks"], **kwargs)


def _scenario_from(cfg: dict):
    if cfg.get("data"):
        data = Path(cfg["data"])
        files = json.loads((data / FILES_INDEX).read_text(encoding="utf-8"))
        return load_scenario(data, files)
    return _build_scenario(cfg["scenario"])


def _session_config(args) -> dict:
    cfg = {
        "seed": args.seed,
        "epsilon": args.epsilon,
        "k_min": args.k_min,
        "k_max": args.k_max,
        "min_group_size": args.min_group_size,
        "transport": args.transport,
        "components": args.components,
        "data": None,
        "scenario": None,
    }
    if args.data:
        data = Path(args.data).resolve()
        _require((data / FILES_INDEX).is_file(), f"{data} has no {FILES_INDEX}; create it with `agriprivacy gen`")
        cfg["data"] = str(data)
    else:
        cfg["scenario"] = _scenario_config(args)
    _require(cfg["epsilon"] > 0, "--epsilon must be positive")
    _require(1 <= cfg["k_min"] <= cfg["k_max"], "need 1 <= --k-min <= --k-max")
    _require(cfg["k_min"] == cfg["k_max"] or cfg["k_min"] >= 2, "an elbow search needs --k-min >= 2")
    _require(cfg["min_group_size"] >= 1, "--min-group-size must be >= 1")
    _require(cfg["components"] >= 1, "--components must be >= 1")
    return cfg


def _run_session(cfg: dict, then=None):
    scenario = _scenario_from(cfg)
    nodes = [MarketNode(m.market_id, m.table, {"sales": m.sales}, cfg["min_group_size"], seed=cfg["seed"])
             for m in scenario.markets]
    researcher = ResearcherNode(scenario.public, cfg["components"])
    with Simulation(nodes, cfg["transport"]) as sim:
        report = researcher_session(researcher, sim.transports, cfg["epsilon"], (cfg["k_min"], cfg["k_max"]),
                                    seed=cfg["seed"])
        extra = then(researcher, report, scenario) if then else None
    return report, extra


# -- commands -------------------------------------------------------------

def cmd_gen(cfg: dict, out: Path) -> None:
    scenario = _build_scenario(cfg)
    files = scenario.write(out)
    _write(out, FILES_INDEX, _dump(files))


def cmd_simulate(cfg: dict, out: Path) -> None:
    report, _ = _run_session(cfg)
    _write(out, "cluster_report.json", report.to_json())


def cmd_sweep(cfg: dict, out: Path) -> None:
    sweep_cfg = SweepConfig.from_dict(cfg["sweep"])
    result = epsilon_sweep(sweep_cfg)
    optimal = select_optimal_epsilon(result, cfg["power_max"], cfg["accuracy_min"])
    _write(out, "sweep.csv", result.to_csv())
    _write(out, "optimal.json", _dump({
        "power_max": cfg["power_max"],
        "accuracy_min": cfg["accuracy_min"],
        "optimal_epsilon": {k: v.epsilon for k, v in optimal.items()},
        "frontier": {k: [list(p) for p in v.frontier] for k, v in optimal.items()},
    }))


def cmd_link(cfg: dict, out: Path) -> None:
    def query(researcher, report, scenario):
        cluster = cfg["cluster"]
        if cluster is None:
            cluster = max(report.clusters, key=lambda c: (c["size"], -c["cluster_id"]))["cluster_id"]
        result = query_aggregates(researcher, cluster, cfg["attribute"], (cfg["start"], cfg["end"]), cfg["aggregate"])
        return cluster, result, scenario

    _, (cluster, result, scenario) = _run_session(cfg, query)
    if cfg["public_csv"]:
        path = Path(cfg["public_csv"])
        if cfg["public_kind"] == "insecurity":
            public = load_monthly_csv(path, "month", "population_pct", {"level": cfg["level"]} if cfg["level"] else None)
        else:
            public = load_timeseries_csv(path, "week", "price_per_unit", {"product": cfg["product"]})
    else:
        public = scenario.prices
    report = link(result.series, public, (f"{cfg['aggregate']}_{cfg['attribute']}", cfg["public_kind"]))
    report.write(out, "linkage")
    summary = report.summary()
    summary.update({"cluster": cluster, "refusals": result.refusals})
    _write(out, "linkage.json", _dump(summary))


def _read_scores(path: Path) -> ProjectedMatrix:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: no rows")
    pseudonyms = [r[0] for r in rows[1:]]
    try:
        scores = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return ProjectedMatrix(pseudonyms, scores)


def cmd_eval_power(cfg: dict, out: Path) -> None:
    groups = {k: _read_scores(Path(cfg[k])) for k in ("shared", "case", "control")}
    res = membership_power(groups["shared"], groups["case"], groups["control"], cfg["fpr"])
    _write(out, "power.json", _dump({
        "threshold": res.threshold,
        "fpr_target": res.fpr_target,
        "realized_fpr": res.realized_fpr,
        "power": res.power,
        "n_case": int(res.case_distances.size),
        "n_control": int(res.control_distances.size),
    }))


COMMANDS = {
    "gen": cmd_gen,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "link": cmd_link,
    "eval-power": cmd_eval_power,
}


# -- argument parsing ------------------------------------------------------

def _add_scenario_flags(p):
    p.add_argument("--markets", type=int, default=3, help="number of private markets")
    p.add_argument("--rows-per-market", type=int, default=60)
    p.add_argument("--public-rows", type=int, default=120)
    p.add_argument("--weeks", type=int, default=36, help="weeks of sales history per record")
    p.add_argument("--generator-config", help="JSON generator config {n, clusters, seed}")


def _add_session_flags(p):
    p.add_argument("--data", help="directory written by `agriprivacy gen` (default: generate in memory)")
    _add_scenario_flags(p)
    p.add_argument("--epsilon", type=float, default=50.0, help="total privacy budget per record")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--min-group-size", type=int, default=3)
    p.add_argument("--components", type=int, default=2, help="PCA components shared with markets")
    p.add_argument("--transport", choices=(INPROC, SOCKET), default=INPROC)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agriprivacy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen", help="generate a public table, private markets and a price series")
    common(p)
    _add_scenario_flags(p)

    p = sub.add_parser("simulate", help="run the researcher/market protocol and write a cluster report")
    common(p)
    _add_session_flags(p)

    p = sub.add_parser("sweep", help="privacy/utility sweep over epsilon")
    common(p)
    p.add_argument("--config", help="JSON sweep config")
    p.add_argument("--epsilon-list", help="comma-separated ascending epsilons")
    p.add_argument("--seeds", type=int, help="number of repetitions")
    p.add_argument("--fpr", type=float, help="false-positive rate for the attack threshold")
    p.add_argument("--kinds", help="comma-separated classifier kinds")
    p.add_argument("--power-max", type=float, default=0.3)
    p.add_argument("--accuracy-min", type=float, default=0.8)

    p = sub.add_parser("link", help="query a cluster's aggregate series and correlate it with a public series")
    common(p)
    _add_session_flags(p)
    p.add_argument("--cluster", type=int, help="cluster id (default: largest cluster)")
    p.add_argument("--attribute", default="sales")
    p.add_argument("--aggregate", choices=("sum", "mean", "count"), default="sum")
    p.add_argument("--start", default="2018-W01")
    p.add_argument("--end", default="2018-W52")
    p.add_argument("--public-csv", help="public CSV (default: the scenario's price series)")
    p.add_argument("--public-kind", choices=("pricing", "insecurity"), default="pricing")
    p.add_argument("--product", default=PRODUCT)
    p.add_argument("--level", help="insecurity level to keep")

    p = sub.add_parser("eval-power", help="membership-inference power from score CSVs")
    common(p)
    p.add_argument("--shared", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--control", required=True)
    p.add_argument("--fpr", type=float, default=0.05)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args) -> dict:
    """Turn parsed flags into the complete config recorded in the manifest."""
    if args.command == "gen":
        return _scenario_config(args)
    if args.command == "simulate":
        return _session_config(args)
    if args.command == "link":
        cfg = _session_config(args)
        if args.public_csv:
            _require(Path(args.public_csv).is_file(), f"{args.public_csv} does not exist")
        cfg.update({
            "cluster": args.cluster,
            "attribute": args.attribute,
            "aggregate": args.aggregate,
            "start": args.start,
            "end": args.end,
            "public_csv": str(Path(args.public_csv).resolve()) if args.public_csv else None,
            "public_kind": args.public_kind,
            "product": args.product,
            "level": args.level,
        })
        return cfg
    if args.command == "sweep":
        base = {}
        if args.config:
            path = Path(args.config)
            _require(path.is_file(), f"sweep config {path} does not exist")
            base = json.loads(path.read_text(encoding="utf-8"))
        if args.seed or "master_seed" not in base:
            base["master_seed"] = args.seed
        if args.epsilon_list:
            base["epsilons"] = _float_list(args.epsilon_list)
        if args.seeds is not None:
            base["seeds"] = args.seeds
        if args.fpr is not None:
            base["fpr"] = args.fpr
        if args.kinds:
            base["kinds"] = [k.strip() for k in args.kinds.split(",")]
        _require(0 < args.power_max < 1 and 0 < args.accuracy_min < 1, "thresholds must lie in (0, 1)")
        sweep_cfg = SweepConfig.from_dict(base)
        return {"sweep": sweep_cfg.to_dict(), "power_max": args.power_max, "accuracy_min": args.accuracy_min}
    if args.command == "eval-power":
        cfg = {"fpr": args.fpr}
        for k in ("shared", "case", "control"):
            path = Path(getattr(args, k))
            _require(path.is_file(), f"--{k} {path} does not exist")
            cfg[k] = str(path.resolve())
        _require(0 < args.fpr < 1, "--fpr must lie in (0, 1)")
        return cfg
    raise ValidationError(f"unknown command {args.command}")


def execute(command: str, cfg: dict, out: Path) -> None:
    COMMANDS[command](cfg, out)
    _write(out, MANIFEST, _manifest(command, cfg))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.command == "replay":
            path = Path(args.manifest)
            _require(path.is_file(), f"manifest {path} does not exist")
            manifest = json.loads(path.read_text(encoding="utf-8"))
            command, cfg = manifest.get("command"), manifest.get("config")
            _require(command in COMMANDS and isinstance(cfg, dict), f"{path} is not a valid manifest")
        else:
            command, cfg = args.command, resolve_config(args)
    except (ValidationError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        execute(command, cfg, out)
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
