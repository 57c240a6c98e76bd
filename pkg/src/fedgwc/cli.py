"""Command-line entry point.

    fedgwc generate CONFIG [--out DIR] [--set section.key=value ...]
    fedgwc run CONFIG --federation DIR [--out DIR] [--set ...]
    fedgwc eval FEDERATION_DIR LABELING [--out FILE]
    fedgwc report RUN_DIR [--out DIR]
    fedgwc dump-state RUN_DIR --cluster ID [--matrix P|W] [--beta B] [--out FILE]

Output directories default to subdirectories of ``$FEDGWC_OUTPUT_ROOT``
(``./fedgwc-out`` when unset). Exit status: 0 success, 2 configuration
error, 3 divergence during training, 4 missing input.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .artifacts import (
    FORMAT_VERSION,
    dumps,
    format_matrix,
    ground_truth,
    load_federation,
    load_federation_manifest,
    read_json,
    read_jsonl,
    read_matrix,
    save_federation,
    sha256_file,
    spec_to_dict,
    write_json,
    write_jsonl,
    write_matrix,
    write_vector,
)
from .config import load_config
from .datagen import make_federation
from .errors import ConfigError, DivergenceError, MissingInputError
from .interaction import build_affinity
from .metrics import rand_index, wadb_score, was_score
from .orchestrator import Experiment

ENV_OUTPUT_ROOT = "FEDGWC_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4

log = logging.getLogger("fedgwc")


def output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_ROOT) or "fedgwc-out")


def _out_dir(arg, default_name) -> Path:
    out = Path(arg) if arg else output_root() / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hash_outputs(root: Path, rel_paths) -> dict:
    return {rel: sha256_file(root / rel) for rel in sorted(rel_paths)}


# -- generate -----------------------------------------------------------------

def cmd_generate(config_path, out_dir=None, overrides=()) -> Path:
    cfg = load_config(config_path, overrides)
    out = _out_dir(out_dir, "federation")
    fed = make_federation(cfg.federation)
    save_federation(fed, out)
    log.info("wrote %d clients to %s", len(fed), out)
    return out


# -- run ----------------------------------------------------------------------

def labeling_record(exp_log) -> dict:
    summary = exp_log.summary
    return {
        "n_cl": summary["n_cl"],
        "clients": {str(m): node.id for node in exp_log.clusters for m in node.members},
        "clusters": [
            {
                "id": node.id,
                "members": list(node.members),
                "born": node.born,
                "balanced_accuracy": summary["balanced_accuracy"][str(node.id)],
            }
            for node in exp_log.clusters
        ],
        "splits": [
            {k: r[k] for k in ("round", "parent", "children", "sizes", "db_scores", "rejected")}
            for r in exp_log.splits
        ],
    }


def cmd_run(config_path, federation_dir, out_dir=None, overrides=()) -> Path:
    """Run an experiment on a generated federation; returns the run directory.

    Raises DivergenceError after writing all outputs if any round had to be
    abandoned because of non-finite values.
    """
    cfg = load_config(config_path, overrides)
    if federation_dir is None:
        raise MissingInputError("run needs --federation DIR (see 'fedgwc generate')")
    fed_manifest = load_federation_manifest(federation_dir)
    if fed_manifest["spec"] != spec_to_dict(cfg.federation):
        raise ConfigError(f"federation section of {config_path} does not match the federation in {federation_dir}")
    federation = load_federation(federation_dir)

    out = _out_dir(out_dir, "run")
    (out / "models").mkdir(exist_ok=True)
    (out / "state").mkdir(exist_ok=True)
    exp_log = Experiment(cfg, federation).run()

    written = ["log.jsonl", "labeling.json"]
    write_jsonl(out / "log.jsonl", exp_log.records)
    write_json(out / "labeling.json", labeling_record(exp_log))
    for node in exp_log.clusters:
        m, p = f"models/cluster_{node.id}.txt", f"state/cluster_{node.id}_P.txt"
        write_vector(out / m, node.model)
        write_matrix(out / p, node.interaction.P, node.interaction.clients)
        written += [m, p]

    aborted = sum(1 for r in exp_log.of_type("round") if r["aborted"])
    write_json(out / "manifest.json", {
        "format_version": FORMAT_VERSION,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "config_file": str(config_path),
        "config_sha256": sha256_file(config_path),
        "overrides": list(overrides),
        "federation": {
            "dir": str(Path(federation_dir).resolve()),
            "manifest_sha256": sha256_file(Path(federation_dir) / "manifest.json"),
        },
        "aborted_rounds": aborted,
        "outputs": _hash_outputs(out, written),
    })
    log.info("run finished: %d cluster(s), outputs in %s", len(exp_log.clusters), out)
    if aborted:
        raise DivergenceError(f"{aborted} round(s) aborted on non-finite values; see {out / 'log.jsonl'}")
    return out


# -- eval ---------------------------------------------------------------------

def evaluate_labeling(fed_manifest: dict, labeling: dict) -> dict:
    hist = {e["id"]: e["histogram"] for e in fed_manifest["clients"]}
    labels = {int(c): k for c, k in labeling["clients"].items()}
    if set(labels) != set(hist):
        raise ConfigError("labeling record and federation cover different clients")
    ids = sorted(hist)
    record = {"n_cl": len(set(labels.values())), "K": len(ids)}
    if record["n_cl"] >= 2:
        H = [hist[i] for i in ids]
        L = [labels[i] for i in ids]
        record["was"] = was_score(H, L)
        record["wadb"] = wadb_score(H, L)
    truth = ground_truth(fed_manifest)
    if truth is not None:
        record["rand_index"] = rand_index(labels, truth)
    return record


def cmd_eval(federation_dir, labeling_path, out_file=None) -> dict:
    record = evaluate_labeling(load_federation_manifest(federation_dir), read_json(labeling_path))
    text = dumps(record)
    if out_file:
        Path(out_file).write_text(text)
    else:
        sys.stdout.write(text)
    return record


# -- report -------------------------------------------------------------------

def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def report_tables(records, labeling=None, fed_manifest=None) -> dict:
    """Plot-ready CSV tables keyed by file name."""
    evals = [r for r in records if r["type"] == "eval"]
    summaries = [r for r in records if r["type"] == "summary"]
    if not summaries:
        raise MissingInputError("the run log has no summary record; the run did not complete")
    summary = summaries[-1]

    acc = [(r["round"], r["cluster"], len(r["members"]), r["balanced_accuracy"]) for r in evals]
    # a round record carries the count at the start of the round; report it after splits
    after = {}
    for r in records:
        if r["type"] == "round":
            after.setdefault(r["round"], r["n_cl"])
        elif r["type"] == "split":
            after[r["round"]] = after.get(r["round"], 0) + len(r["children"]) - 1
    n_cl = [(t, after[t]) for t in sorted(after)]
    db = []
    for r in records:
        if r["type"] == "round" and "db_scores" in r:
            db += [(r["round"], r["cluster"], int(n), v, int(int(n) in r["rejected"]), 0)
                   for n, v in r["db_scores"].items()]
        elif r["type"] == "split":
            db += [(r["round"], r["parent"], int(n), v, int(int(n) in r["rejected"]), int(int(n) == r["n_cl"]))
                   for n, v in r["db_scores"].items()]

    cols = ["rounds", "n_cl", "splits", "mean_balanced_accuracy"]
    vals = [summary["rounds"], summary["n_cl"], summary["splits"], summary["mean_balanced_accuracy"]]
    if labeling is not None and fed_manifest is not None:
        metrics = evaluate_labeling(fed_manifest, labeling)
        for key in ("was", "wadb", "rand_index"):
            if key in metrics:
                cols.append(key)
                vals.append(metrics[key])
    return {
        "accuracy.csv": _csv(acc, ["round", "cluster", "n_members", "balanced_accuracy"]),
        "n_clusters.csv": _csv(n_cl, ["round", "n_cl"]),
        "db_candidates.csv": _csv(db, ["round", "cluster", "n", "db", "rejected", "chosen"]),
        "summary.csv": _csv([vals], cols),
    }


def cmd_report(run_dir, out_dir=None) -> Path:
    run_dir = Path(run_dir)
    if not (run_dir / "log.jsonl").is_file():
        raise MissingInputError(f"{run_dir} holds no completed run (log.jsonl missing)")
    records = read_jsonl(run_dir / "log.jsonl")
    labeling = read_json(run_dir / "labeling.json")
    fed_manifest = None
    manifest_path = run_dir / "manifest.json"
    if manifest_path.is_file():
        fed_dir = Path(read_json(manifest_path)["federation"]["dir"])
        if (fed_dir / "manifest.json").is_file():
            fed_manifest = load_federation_manifest(fed_dir)
    out = Path(out_dir) if out_dir else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    for name, text in report_tables(records, labeling, fed_manifest).items():
        (out / name).write_text(text)
    return out


# -- dump-state ---------------------------------------------------------------

def cmd_dump_state(run_dir, cluster, matrix="P", beta=None, out_file=None) -> str:
    run_dir = Path(run_dir)
    path = run_dir / "state" / f"cluster_{cluster}_P.txt"
    if not path.is_file():
        raise MissingInputError(f"no saved state for cluster {cluster} in {run_dir}")
    P, clients = read_matrix(path)
    if matrix == "W":
        if beta is None:
            beta = read_json(run_dir / "manifest.json")["config"]["fedgwc"]["beta"]
        text = format_matrix(build_affinity(P, beta).W, clients)
    else:
        text = format_matrix(P, clients)
    if out_file:
        Path(out_file).write_text(text)
    else:
        sys.stdout.write(text)
    return text


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgwc", description="Clustered federated learning simulator.")
    parser.add_argument("--version", action="version", version=f"fedgwc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_overrides(p):
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("generate", help="write a synthetic federation to disk")
    p.add_argument("config")
    p.add_argument("--out")
    with_overrides(p)

    p = sub.add_parser("run", help="run the clustered training procedure")
    p.add_argument("config")
    p.add_argument("--federation", required=True)
    p.add_argument("--out")
    with_overrides(p)

    p = sub.add_parser("eval", help="clustering metrics for a labeling record")
    p.add_argument("federation")
    p.add_argument("labeling")
    p.add_argument("--out")

    p = sub.add_parser("report", help="tidy CSV tables from a completed run")
    p.add_argument("run_dir")
    p.add_argument("--out")

    p = sub.add_parser("dump-state", help="print a cluster's interaction or affinity matrix")
    p.add_argument("run_dir")
    p.add_argument("--cluster", type=int, required=True)
    p.add_argument("--matrix", choices=("P", "W"), default="P")
    p.add_argument("--beta", type=float)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            print(cmd_generate(args.config, args.out, args.overrides))
        elif args.command == "run":
            print(cmd_run(args.config, args.federation, args.out, args.overrides))
        elif args.command == "eval":
            cmd_eval(args.federation, args.labeling, args.out)
        elif args.command == "report":
            print(cmd_report(args.run_dir, args.out))
        elif args.command == "dump-state":
            cmd_dump_state(args.run_dir, args.cluster, args.matrix, args.beta, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
