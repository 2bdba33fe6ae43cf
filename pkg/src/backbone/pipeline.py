"""File-based stages of the full workflow and report emission.

Every stage reads and writes plain CSV/JSON so it can be rerun in
isolation; :func:`run_pipeline` chains them and builds the report bundle
from the persisted intermediates only.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from . import bicm, bidcm, botdetect, community, influence, ingest, polarization, projection
from .core import (
    DirectedGraph, ensure_dir, read_bipartite_csv,
    read_directed_bipartite_csv, read_edge_list_csv, read_validated_csv, write_bipartite_csv,
    write_directed_bipartite_csv, write_edge_list_csv, write_validated_csv,
)

logger = logging.getLogger(__name__)

FAILED_MARKER = "FAILED"
HUB_COLUMNS = ("screen_name", "hub_score", "k_out", "bot_fraction", "bot_fraction_ratio")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


@dataclass
class PipelineConfig:
    input: str
    out: str
    keywords: str | None = None
    mapping: str | None = None
    model: str | None = None
    alpha: float = 0.01
    fit_mode: str = bicm.CHUNG_LU
    projection_mode: str | None = None
    directed_fit: str = bidcm.LAMBDA_ONLY
    n_tests: str = "nonzero"
    runs: int | str | None = None
    seed: int = 42
    max_rounds: int = polarization.DEFAULT_MAX_ROUNDS
    min_shared: int = 3
    top: int = 20
    anonymize: bool = False
    compare_raw: bool = False
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("input", "keywords", "mapping", "model"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{name}: no such file {path}")


def write_json(obj, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# stages

def stage_ingest(input_path, out_dir, keywords=None, mapping=None) -> dict:
    """Filter the corpus and write the account table and the three graphs."""
    out = ensure_dir(out_dir)
    diag = ingest.Diagnostics()
    fmap = ingest.load_mapping(mapping) if mapping else None
    kws = ingest.load_keywords(keywords) if keywords else ingest.default_keywords()
    raw = list(ingest.read_records(input_path, fmap, diag))
    records = list(ingest.keyword_filter(raw, kws))
    accounts = ingest.build_accounts(records)
    as_of = ingest.corpus_end(records)
    bip = ingest.build_interaction_bipartite(records, accounts, diag)
    up = ingest.build_user_post_bipartite(records, diag)
    ingest.write_accounts_csv(accounts, out / "accounts.csv", as_of)
    write_bipartite_csv(bip, out / "interaction_bipartite.csv")
    write_directed_bipartite_csv(up, out / "user_post.csv")
    write_edge_list_csv(ingest.interaction_edges(records), out / "interactions.csv")
    with open(out / "ingest_diagnostics.txt", "w", encoding="utf-8") as fh:
        fh.writelines(m + "\n" for m in diag.messages)
    summary = {
        "records_read": len(raw),
        "records_kept": len(records),
        "accounts": len(accounts),
        "verified": sum(1 for a in accounts.values() if a.verified is True),
        "unverified": sum(1 for a in accounts.values() if a.verified is False),
        "diagnostics": len(diag),
    }
    write_json(summary, out / "ingest.json")
    return summary


def write_labels_csv(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "label"])
        w.writerows(sorted(labels.items()))


def read_labels_csv(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["user_id"]: row["label"] for row in csv.DictReader(fh)}


def stage_bots(accounts_csv, out_path, model=None) -> dict:
    accounts, as_of = ingest.read_accounts_csv(accounts_csv)
    tree = botdetect.TreeModel.load(model) if model else botdetect.default_model()
    labels, summary = botdetect.classify_accounts(accounts, tree, as_of)
    write_labels_csv(labels, out_path)
    return asdict(summary)


def stage_fit_bicm(graph_csv, out_path, mode=bicm.EXACT) -> dict:
    g = read_bipartite_csv(graph_csv)
    fit = bicm.fit_bicm(g, mode=mode)
    write_json(fit.to_dict(), out_path)
    return {"mode": fit.mode, "residual": fit.residual, "iterations": fit.iterations}


def stage_fit_bidcm(graph_csv, out_path, mode=bidcm.LAMBDA_ONLY) -> dict:
    g = read_directed_bipartite_csv(graph_csv)
    fit = bidcm.fit_bidcm(g, mode=mode)
    write_json(fit.to_dict(), out_path)
    return {"mode": fit.mode, "residual": fit.residual, "iterations": fit.iterations}


def _meta_path(out_path) -> Path:
    p = Path(out_path)
    return p.with_name(p.stem + ".meta.json")


def stage_project(kind, graph_csv, fit_json, out_path, alpha=0.01, mode=None,
                  n_tests="nonzero", correction="fdr") -> dict:
    """Validated projection; writes the edge CSV and a ``.meta.json`` sidecar."""
    if kind == "undirected":
        g = read_bipartite_csv(graph_csv)
        fit = bicm.BicmFit.from_dict(read_json(fit_json))
        vp = projection.validate_undirected(g, fit, alpha, mode, n_tests, correction)
    elif kind == "directed":
        g = read_directed_bipartite_csv(graph_csv)
        fit = bidcm.BidcmFit.from_dict(read_json(fit_json))
        vp = projection.validate_directed(g, fit, alpha, mode, n_tests, correction)
    else:
        raise ValueError(f"kind must be 'undirected' or 'directed', got {kind!r}")
    write_validated_csv(vp.graph, out_path)
    tested = g.shape[0] if kind == "undirected" else g.n_users
    meta = {
        "kind": kind,
        "mode": vp.mode,
        "alpha": alpha,
        "correction": correction,
        "tests": len(vp.tests),
        "n_tests": vp.selection.n_tests,
        "tested_nodes": tested,
        "validated_nodes": vp.graph.n_nodes,
        "validated_edges": vp.graph.n_edges,
        "isolated": len(vp.isolated),
        "loops": vp.loops,
        "loop_nodes": vp.loop_nodes,
        "loop_percentage": 100.0 * vp.loops / vp.n_validated_links if vp.n_validated_links else 0.0,
    }
    write_json(meta, _meta_path(out_path))
    return meta


def write_partition_csv(assignment, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "community"])
        w.writerows(sorted(assignment.items()))


def read_partition_csv(path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["node_id"]: int(row["community"]) for row in csv.DictReader(fh)}


def stage_communities(graph_csv, out_path, runs=None, seed=42) -> dict:
    g = read_validated_csv(graph_csv, directed=False)
    part = community.louvain_reshuffled(g, runs=runs, seed=seed)
    write_partition_csv(part.assignment, out_path)
    sizes = sorted((len(c) for c in part.communities()), reverse=True)
    meta = {"modularity": part.modularity, "runs": part.runs, "seed": seed,
            "communities": len(sizes), "sizes": sizes}
    write_json(meta, _meta_path(out_path))
    return meta


def write_polarization_csv(state: polarization.PolarizationState, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "rho", "community", "round_assigned"])
        for u in sorted(set(state.users) | set(state.seeds)):
            if u in state.seeds:
                w.writerow([u, "", state.seeds[u], 0])
                continue
            r = state.users[u]
            w.writerow([u, "" if r.rho is None else repr(float(r.rho)),
                        "" if r.community is None else r.community,
                        "" if r.round_assigned is None else r.round_assigned])


def read_polarization_csv(path) -> polarization.PolarizationState:
    state = polarization.PolarizationState()
    rounds: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            comm = None if row["community"] == "" else int(row["community"])
            rnd = None if row["round_assigned"] == "" else int(row["round_assigned"])
            if rnd == 0:
                state.seeds[row["user_id"]] = comm
                continue
            rho = None if row["rho"] == "" else float(row["rho"])
            state.users[row["user_id"]] = polarization.UserPolarization(rho, comm, rnd)
            if rnd is not None:
                rounds[rnd] = rounds.get(rnd, 0) + 1
    state.history = sorted(rounds.items())
    return state


def stage_polarize(bipartite_csv, partition_csv, interactions_csv, out_path,
                   max_rounds=polarization.DEFAULT_MAX_ROUNDS, labels_csv=None) -> dict:
    """Verified-interaction assignment followed by contagion.

    Seeds are the verified accounts of the validated projection, labelled
    ``round_assigned = 0`` in the output.
    """
    g = read_bipartite_csv(bipartite_csv)
    part = read_partition_csv(partition_csv)
    edges = read_edge_list_csv(interactions_csv)
    first = polarization.assign_from_verified(g, part)
    final = polarization.contagion(edges, first, max_rounds=max_rounds)
    write_polarization_csv(final, out_path)
    labels = read_labels_csv(labels_csv) if labels_csv else {}
    bots = [u for u, lab in labels.items() if lab == botdetect.BOT]
    meta = {
        "seeds": len(final.seeds),
        "after_verified": {"polarized": len(first.polarized()) - len(first.seeds),
                           "histogram": polarization.rho_histogram(first)},
        "after_contagion": {"polarized": len(final.polarized()) - len(final.seeds),
                            "histogram": polarization.rho_histogram(final),
                            "bots_histogram": polarization.rho_histogram(final, bots)},
        "history": [list(h) for h in final.history],
    }
    write_json(meta, _meta_path(out_path))
    return meta


def influence_bundle(validated_csv, labels_csv, accounts_csv=None, top=20, min_shared=3) -> dict:
    """Hub table, overlap matrix of the top hubs and bot squads, before anonymization."""
    g = read_validated_csv(validated_csv, directed=True)
    labels = read_labels_csv(labels_csv)
    verified = {}
    if accounts_csv:
        accounts, _ = ingest.read_accounts_csv(accounts_csv)
        verified = {u: a.verified for u, a in accounts.items()}
    hits = influence.hits_scores(g)
    report = influence.bot_fractions(g, labels, hits)
    hub_scores = hits.hub_of()
    top_rows = report.top(top)
    bot_sets = influence.bot_followers(g, labels)
    names = [r.node for r in top_rows]
    matrix, empty = influence.overlap_matrix(names, bot_sets)
    squads = influence.detect_squads(g, labels, min_shared, hub_scores)
    return {
        "global_bot_fraction": report.global_bot_fraction,
        "n_bots": report.n_bots,
        "n_labelled": report.n_labelled,
        "n_unknown": report.n_unknown,
        "ranking": [{"node": r.node, "verified": verified.get(r.node) is True} for r in report.rows],
        "hub_table": [{"screen_name": r.node, "hub_score": r.hub_score, "k_out": r.k_out,
                       "bot_fraction": r.bot_fraction, "bot_fraction_ratio": r.bot_fraction_ratio,
                       "bots": r.bots, "authority_score": r.authority_score}
                      for r in top_rows],
        "overlap": {"hubs": names, "matrix": matrix.tolist(), "empty_rows": empty.tolist()},
        "squads": {"min_shared": squads.min_shared,
                   "squads": [{"genuine_members": s.genuine_members, "shared_bots": s.shared_bots,
                               "all_bot_followers": s.all_bot_followers, "top_hub": s.top_hub,
                               "subgraph_nodes": s.subgraph.n_nodes, "subgraph_edges": s.subgraph.n_edges}
                              for s in squads.squads]},
    }


# --------------------------------------------------------------------------
# the full run

def _fail(out: Path, stage: str, exc: BaseException):
    with open(out / FAILED_MARKER, "w", encoding="utf-8") as fh:
        fh.write(f"{stage}: {type(exc).__name__}: {exc}\n")
    raise StageError(stage, exc) from exc


def _empty_bipartite(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        return sum(1 for _ in fh) <= 1


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage into ``cfg.out`` and emit the report.

    Returns the report bundle.  A failing stage leaves its predecessors'
    outputs in place, writes a ``FAILED`` marker and raises :class:`StageError`.
    """
    out = ensure_dir(cfg.out)
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    p = {name: out / name for name in (
        "accounts.csv", "interaction_bipartite.csv", "user_post.csv", "interactions.csv", "bots.csv",
        "fit_bicm.json", "fit_bidcm.json", "validated_undirected.csv", "validated_directed.csv",
        "partition.csv", "polarization.csv")}
    stage = "ingest"
    try:
        stage_ingest(cfg.input, out, cfg.keywords, cfg.mapping)
        stage = "bots"
        stage_bots(p["accounts.csv"], p["bots.csv"], cfg.model)

        # undirected branch
        if _empty_bipartite(p["interaction_bipartite.csv"]):
            write_validated_csv(DirectedGraph((), [], [], directed=False), p["validated_undirected.csv"])
            write_json({"kind": "undirected", "tests": 0, "validated_nodes": 0, "validated_edges": 0},
                        _meta_path(p["validated_undirected.csv"]))
        else:
            stage = "fit-bicm"
            stage_fit_bicm(p["interaction_bipartite.csv"], p["fit_bicm.json"], cfg.fit_mode)
            stage = "project"
            stage_project("undirected", p["interaction_bipartite.csv"], p["fit_bicm.json"],
                          p["validated_undirected.csv"], cfg.alpha, cfg.projection_mode, cfg.n_tests)
        stage = "communities"
        stage_communities(p["validated_undirected.csv"], p["partition.csv"], cfg.runs, cfg.seed)
        stage = "polarize"
        stage_polarize(p["interaction_bipartite.csv"], p["partition.csv"], p["interactions.csv"],
                       p["polarization.csv"], cfg.max_rounds, p["bots.csv"])

        # directed branch
        stage = "fit-bidcm"
        if _empty_bipartite(p["user_post.csv"]):
            write_validated_csv(DirectedGraph((), [], [], directed=True), p["validated_directed.csv"])
            write_json({"kind": "directed", "tests": 0, "validated_nodes": 0, "validated_edges": 0,
                         "loops": 0, "loop_nodes": [], "loop_percentage": 0.0},
                        _meta_path(p["validated_directed.csv"]))
        else:
            stage_fit_bidcm(p["user_post.csv"], p["fit_bidcm.json"], cfg.directed_fit)
            stage = "project"
            stage_project("directed", p["user_post.csv"], p["fit_bidcm.json"], p["validated_directed.csv"],
                          cfg.alpha, cfg.projection_mode, cfg.n_tests)
        stage = "influence"
        inf = influence_bundle(p["validated_directed.csv"], p["bots.csv"], p["accounts.csv"], cfg.top,
                               cfg.min_shared)
        write_json(inf, out / "influence.json")

        if cfg.compare_raw:
            stage = "compare-raw"
            compare_raw(p["interactions.csv"], p["polarization.csv"], out / "compare_raw.csv",
                        cfg.runs, cfg.seed)

        stage = "report"
        bundle = load_bundle(out)
        bundle["config"] = {"alpha": cfg.alpha, "fit_mode": cfg.fit_mode,
                            "projection_mode": cfg.projection_mode, "directed_fit": cfg.directed_fit,
                            "n_tests": cfg.n_tests, "runs": cfg.runs, "seed": cfg.seed,
                            "max_rounds": cfg.max_rounds, "min_shared": cfg.min_shared, "top": cfg.top}
        write_json(bundle, out / "bundle.json")
        emit_report(bundle, out, anonymize=cfg.anonymize)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every stage error is reported with its name
        _fail(out, stage, exc)
    return bundle


def compare_raw(interactions_csv, polarization_csv, out_path, runs=None, seed=42) -> dict:
    """Louvain on the raw interaction graph next to the polarization labels, without adjudication."""
    edges = read_edge_list_csv(interactions_csv)
    nodes = sorted({a for a, _ in edges} | {b for _, b in edges})
    g = DirectedGraph.from_edges(nodes, edges, directed=False)
    part = community.louvain_reshuffled(g, runs=runs, seed=seed)
    state = read_polarization_csv(polarization_csv)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "raw_community", "polarization_community"])
        for u in nodes:
            c = state.community_of(u)
            w.writerow([u, part.assignment[u], "" if c is None else c])
    return {"modularity": part.modularity, "communities": len(set(part.assignment.values()))}


def load_bundle(out_dir) -> dict:
    """Assemble the report bundle from the intermediates in ``out_dir``."""
    out = Path(out_dir)
    ing = read_json(out / "ingest.json")
    labels = read_labels_csv(out / "bots.csv")
    und = read_json(out / "validated_undirected.meta.json")
    dire = read_json(out / "validated_directed.meta.json")
    comm = read_json(out / "partition.meta.json")
    pol = read_json(out / "polarization.meta.json")
    inf = read_json(out / "influence.json")
    counts = {
        **{k: ing[k] for k in ("records_read", "records_kept", "accounts", "verified", "unverified")},
        "bots": sum(1 for v in labels.values() if v == botdetect.BOT),
        "genuine": sum(1 for v in labels.values() if v == botdetect.GENUINE),
        "unknown": sum(1 for v in labels.values() if v == botdetect.UNKNOWN),
        "undirected_tests": und["tests"],
        "undirected_validated_nodes": und["validated_nodes"],
        "undirected_validated_edges": und["validated_edges"],
        "communities": comm["communities"],
        "modularity": comm["modularity"],
        "directed_tests": dire["tests"],
        "directed_validated_nodes": dire["validated_nodes"],
        "directed_validated_edges": dire["validated_edges"],
        "loops": dire["loops"],
        "loop_percentage": dire["loop_percentage"],
        "polarized_after_verified": pol["after_verified"]["polarized"],
        "polarized_after_contagion": pol["after_contagion"]["polarized"],
    }
    return {
        "counts": counts,
        "community_sizes": comm["sizes"],
        "polarization": {
            "after_verified": pol["after_verified"]["histogram"],
            "after_contagion": pol["after_contagion"]["histogram"],
            "bots_after_contagion": pol["after_contagion"]["bots_histogram"],
            "rounds": pol["history"],
        },
        "loop_nodes": dire.get("loop_nodes", []),
        "influence": inf,
    }


# --------------------------------------------------------------------------
# report

def anonymization_map(ranking) -> dict[str, str]:
    """``hub_<rank>`` placeholders for every account not known to be verified."""
    return {r["node"]: f"hub_{k}" for k, r in enumerate(ranking, 1) if not r["verified"]}


def anonymize_bundle(bundle: dict) -> dict:
    inf = bundle["influence"]
    names = anonymization_map(inf["ranking"])

    def sub(v):
        return names.get(v, v)

    out = json.loads(json.dumps(bundle))
    oi = out["influence"]
    oi["ranking"] = [{"node": sub(r["node"]), "verified": r["verified"]} for r in inf["ranking"]]
    for row in oi["hub_table"]:
        row["screen_name"] = sub(row["screen_name"])
    oi["overlap"]["hubs"] = [sub(h) for h in inf["overlap"]["hubs"]]
    for sq in oi["squads"]["squads"]:
        for key in ("genuine_members", "shared_bots", "all_bot_followers"):
            sq[key] = [sub(v) for v in sq[key]]
        sq["top_hub"] = sub(sq["top_hub"])
    if "loop_nodes" in bundle:
        out["loop_nodes"] = [sub(v) for v in bundle["loop_nodes"]]
    return out


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def emit_report(bundle: dict, out_dir, anonymize: bool = False) -> list[Path]:
    """Write ``report.json``, the CSV tables and ``summary.txt``; returns the paths written."""
    out = Path(out_dir)
    if not out.is_dir() or not os.access(out, os.W_OK):
        raise OSError(f"cannot write report to {out}: not a writable directory")
    rep = anonymize_bundle(bundle) if anonymize else bundle
    inf = rep["influence"]
    written = []

    path = out / "report.json"
    write_json(rep, path)
    written.append(path)

    path = out / "hub_table.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HUB_COLUMNS)
        for row in inf["hub_table"]:
            w.writerow([_csv_value(row[c]) for c in HUB_COLUMNS])
    written.append(path)

    path = out / "overlap_matrix.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub"] + inf["overlap"]["hubs"])
        for h, row in zip(inf["overlap"]["hubs"], inf["overlap"]["matrix"]):
            w.writerow([h] + [repr(float(x)) for x in row])
    written.append(path)

    path = out / "squads.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["squad", "account", "role"])
        for k, sq in enumerate(inf["squads"]["squads"]):
            w.writerows([k, v, "genuine"] for v in sq["genuine_members"])
            w.writerows([k, v, "bot"] for v in sq["all_bot_followers"])
    written.append(path)

    path = out / "summary.txt"
    c = rep["counts"]
    lines = [
        f"records read / kept: {c['records_read']} / {c['records_kept']}",
        f"accounts: {c['accounts']} ({c['verified']} verified, {c['unverified']} unverified)",
        f"bots: {c['bots']}  genuine: {c['genuine']}  unknown: {c['unknown']}",
        f"validated undirected projection: {c['undirected_validated_nodes']} nodes, "
        f"{c['undirected_validated_edges']} links out of {c['undirected_tests']} tested pairs",
        f"communities: {c['communities']} (modularity {c['modularity']:.4f})",
        f"polarized users: {c['polarized_after_verified']} from verified interactions, "
        f"{c['polarized_after_contagion']} after contagion",
        f"validated directed network: {c['directed_validated_nodes']} nodes, "
        f"{c['directed_validated_edges']} links, {c['loops']} self-loops removed "
        f"({c['loop_percentage']:.2f}%)",
        f"global bot fraction: {_fmt(inf['global_bot_fraction'])}",
        "",
        "top hubs (" + ", ".join(HUB_COLUMNS) + "):",
    ]
    for row in inf["hub_table"]:
        lines.append("  " + "  ".join(str(_fmt(row[col])) for col in HUB_COLUMNS))
    lines.append("")
    lines.append(f"bot squads (min_shared={inf['squads']['min_shared']}): {len(inf['squads']['squads'])}")
    for k, sq in enumerate(inf["squads"]["squads"]):
        lines.append(f"  squad {k}: {len(sq['genuine_members'])} genuine accounts, "
                     f"{len(sq['shared_bots'])} shared bots, top hub {sq['top_hub']}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(path)
    return written


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return v
