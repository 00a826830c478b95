"""Command-line pipeline driver.

Every stage reads and writes line-delimited JSON so stages can be chained,
rerun, and diffed; skipped inputs go to a sidecar rejects file next to the
output.
"""

import json
from pathlib import Path

import click

from . import __version__, assembly, image_query, verification
from .embed_index import HashingEmbedder, Ranking, VectorIndex, build_space, read_vector_file
from .jsonl import dumps_record, ensure_parent, read_jsonl, write_jsonl
from .lf_engine import (
    CalibrationResult,
    ExtractedInstance,
    HeuristicPosChecker,
    SidecarPosChecker,
    calibration_sample,
    compile_lf_table,
    cumulative_report,
    extract_corpus,
    ingest_calibration,
    parse_threshold_range,
    select_best,
    threshold_filter,
    write_lf_table,
)
from .normalize import (
    Caption,
    SkipRecord,
    Statement,
    build_captions,
    default_detector,
    length_filter,
    normalize_statement,
)
from .rank_fusion import copeland_select


def _rejects_path(out: str, override: str | None) -> Path:
    return Path(override) if override else Path(out).with_suffix(".rejects.jsonl")


def _write_json(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    if out:
        ensure_parent(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def load_registry(path: str | None) -> dict:
    """Source registry: {"sources": {tag: {"size": int, "abstract": bool}},
    "site_blocklist": [host, ...]}."""
    if path is None:
        return {"sources": {}, "site_blocklist": []}
    reg = json.loads(Path(path).read_text(encoding="utf-8"))
    reg.setdefault("sources", {})
    reg.setdefault("site_blocklist", [])
    return reg


def _abstract_sources(registry: dict) -> frozenset[str]:
    return frozenset(
        tag for tag, cfg in registry["sources"].items() if cfg.get("abstract")
    )


@click.group()
@click.version_option(version=__version__, prog_name="pvli")
def main():
    """Weakly supervised preconditioned visual inference pipeline."""


# --------------------------------------------------------------- normalize

@main.group()
def normalize():
    """Clean raw statements and captions into canonical records."""


@normalize.command("statements")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--kind", default="precondition", show_default=True,
              type=click.Choice(["precondition", "action"]))
@click.option("--registry", "registry_path", type=click.Path(exists=True),
              help="Reject records whose source tag is not registered.")
@click.option("--rejects", "rejects_path", type=click.Path())
def normalize_statements(in_path, out_path, kind, registry_path, rejects_path):
    """Normalize statement records {id?, text, source?, kind?}."""
    registry = load_registry(registry_path)
    known = set(registry["sources"]) if registry_path else None
    detector = default_detector()
    records, rejects = [], []
    for i, rec in enumerate(read_jsonl(in_path)):
        rid = rec.get("id") or f"st-{i:06d}"
        source = rec.get("source", "")
        if known is not None and source not in known:
            rejects.append({"id": rid, "reason": "unknown_source", "detail": source})
            continue
        raw = rec.get("text", "")
        try:
            stmt = normalize_statement(
                raw, source, detector.find_person_spans(raw),
                kind=rec.get("kind", kind), id=rid,
            )
        except SkipRecord as exc:
            rejects.append({"id": rid, "reason": exc.reason, "detail": exc.detail})
            continue
        records.append(stmt.to_record())
    n = write_jsonl(out_path, records)
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    click.echo(f"wrote {n} statements, {len(rejects)} rejects")


@normalize.command("captions")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rejects", "rejects_path", type=click.Path())
def normalize_captions(in_path, out_path, rejects_path):
    """Split and normalize caption records {id?, text, image_ref, source?}."""
    records, rejects = [], []
    for i, rec in enumerate(read_jsonl(in_path)):
        rid = rec.get("id") or f"cap-{i:06d}"
        try:
            caps = build_captions(rec.get("text", ""), rec.get("image_ref", ""),
                                  rec.get("source", ""), rid)
        except SkipRecord as exc:
            rejects.append({"id": rid, "reason": exc.reason, "detail": exc.detail})
            continue
        records.extend(c.to_record() for c in caps)
    n = write_jsonl(out_path, records)
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    click.echo(f"wrote {n} caption sentences, {len(rejects)} rejects")


@normalize.command("length-filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
@click.option("--rejects", "rejects_path", type=click.Path())
def normalize_length_filter(in_path, out_path, report_path, rejects_path):
    """Keep records within one standard deviation of the mean token length."""
    records = list(read_jsonl(in_path))
    items = [
        Caption.from_record(r) if "image_ref" in r else Statement.from_record(r)
        for r in records
    ]
    if not items:
        raise click.ClickException("input is empty")
    kept, report = length_filter(items)
    kept_ids = {item.id for item in kept}
    rejects = [
        {"id": item.id, "reason": "outside_length_band", "detail": str(item.token_len)}
        for item in items if item.id not in kept_ids
    ]
    n = write_jsonl(out_path, [item.to_record() for item in kept])
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    _write_json(report.to_record(), report_path)
    click.echo(f"kept {n}/{len(items)} in [{report.lower}, {report.upper}]")


# ----------------------------------------------------------------- extract

@main.command()
@click.option("--captions", "captions_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--lf-table", "table_path", type=click.Path(exists=True),
              help="Override the shipped labeling-function table.")
@click.option("--pos-sidecar", type=click.Path(exists=True),
              help="Part-of-speech confirmations {caption_id, lf_name, confirmed}.")
@click.option("--best-per-caption", is_flag=True,
              help="Keep only the best-precision instance per caption.")
def extract(captions_path, out_path, table_path, pos_sidecar, best_per_caption):
    """Run the labeling functions over normalized captions."""
    lfs = compile_lf_table(table_path)
    if pos_sidecar:
        confirmed = {
            (r["caption_id"], r["lf_name"]): bool(r["confirmed"])
            for r in read_jsonl(pos_sidecar)
        }
        checker = SidecarPosChecker(confirmed)
    else:
        checker = HeuristicPosChecker()
    captions = [Caption.from_record(r) for r in read_jsonl(captions_path)]
    instances = extract_corpus(captions, lfs, checker)
    if best_per_caption:
        instances = select_best(instances, lfs)
    n = write_jsonl(out_path, [i.to_record() for i in instances])
    click.echo(f"extracted {n} instances from {len(captions)} captions")


# --------------------------------------------------------------- calibrate

@main.group()
def calibrate():
    """Estimate labeling-function precision from annotated samples."""


@calibrate.command("sample")
@click.option("--instances", "instances_path", required=True, type=click.Path(exists=True))
@click.option("--lf", "lf_name", required=True)
@click.option("--n", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lf-table", "table_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def calibrate_sample(instances_path, lf_name, n, seed, table_path, out_path):
    """Draw a uniform sample of one function's matches for annotation."""
    lfs = {lf.name: lf for lf in compile_lf_table(table_path)}
    if lf_name not in lfs:
        raise click.ClickException(f"unknown labeling function {lf_name!r}")
    instances = [ExtractedInstance.from_record(r) for r in read_jsonl(instances_path)]
    sample = calibration_sample(lfs[lf_name], instances, n=n, rng_seed=seed)
    rows = [{**inst.to_record(), "score": None} for inst in sample]
    write_jsonl(out_path, rows)
    click.echo(f"sampled {len(rows)} of {sum(1 for i in instances if i.lf_name == lf_name)} "
               f"matches for {lf_name!r}; fill the score field with 0 or 1")


@calibrate.command("ingest")
@click.option("--annotations", "ann_path", required=True, type=click.Path(exists=True),
              help="Annotated sample records carrying lf_name and score.")
@click.option("--lf-table", "table_path", type=click.Path(exists=True))
@click.option("--n", default=20, show_default=True)
@click.option("--out-table", "out_table", required=True, type=click.Path())
def calibrate_ingest(ann_path, table_path, n, out_table):
    """Fold annotation scores into a recalibrated labeling-function table."""
    lfs = compile_lf_table(table_path)
    by_lf: dict[str, list[dict]] = {}
    for rec in read_jsonl(ann_path):
        by_lf.setdefault(rec["lf_name"], []).append(rec)
    results: list[CalibrationResult] = []
    for lf in lfs:
        if lf.name not in by_lf:
            continue
        try:
            res = ingest_calibration(lf.name, by_lf[lf.name], n=n)
        except ValueError as exc:
            raise click.ClickException(str(exc))
        lf.precision = res.precision
        lf.min_sample_met = res.min_sample_met
        results.append(res)
    unknown = sorted(set(by_lf) - {lf.name for lf in lfs})
    if unknown:
        raise click.ClickException(f"annotations for unknown functions: {unknown}")
    write_lf_table(out_table, lfs)
    for res in results:
        click.echo(dumps_record(res.to_record()))


# ------------------------------------------------------------------ report

@main.group()
def report():
    """Corpus statistics and coverage tables."""


@report.command("cumulative")
@click.option("--instances", "instances_path", required=True, type=click.Path(exists=True))
@click.option("--thresholds", default="0.0:1.0:0.05", show_default=True)
@click.option("--out", "out_path", type=click.Path())
def report_cumulative(instances_path, thresholds, out_path):
    """Retention at each precision threshold."""
    instances = [ExtractedInstance.from_record(r) for r in read_jsonl(instances_path)]
    try:
        ts = parse_threshold_range(thresholds)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    _write_json(cumulative_report(instances, ts), out_path)


@report.command("dist")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
def report_dist(dataset_path, registry_path, out_path):
    """Observed vs expected source shares and the per-source rule breakdown."""
    registry = load_registry(registry_path)
    sizes = {tag: cfg["size"] for tag, cfg in registry["sources"].items() if "size" in cfg}
    instances = [assembly.PvliInstance.from_record(r) for r in read_jsonl(dataset_path)]
    try:
        rep = assembly.distribution_report(instances, sizes)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    for warning in rep["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    _write_json(rep, out_path)


@report.command("sites")
@click.option("--results", "results_path", required=True, type=click.Path(exists=True))
@click.option("--top", default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def report_sites(results_path, top, out_path):
    """Distinct-image counts per source site."""
    results = [image_query.ImageResult.from_record(r) for r in read_jsonl(results_path)]
    try:
        stats = image_query.site_stats(results, top_m=top)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    _write_json(stats.to_record(), out_path)


# ------------------------------------------------------------------- index

@main.group()
def index():
    """Exact nearest-neighbor search over embedding vector files."""


@index.command("build")
@click.option("--vectors", "vectors_path", required=True, type=click.Path(exists=True))
def index_build(vectors_path):
    """Validate a vector file and report the loaded space."""
    idx = build_space(vectors_path)
    click.echo(dumps_record({
        "model_id": idx.space.model_id,
        "dim": idx.space.dim,
        "metric": idx.space.metric,
        "vectors": len(idx),
    }))


@index.command("query")
@click.option("--vectors", "vectors_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True),
              help="Vector file of query embeddings in the same space.")
@click.option("--k", default=50, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def index_query(vectors_path, queries_path, k, out_path):
    """Rank the k nearest stored vectors for every query vector."""
    idx = build_space(vectors_path)
    qspace, qitems = read_vector_file(queries_path)
    if (qspace.model_id, qspace.dim) != (idx.space.model_id, idx.space.dim):
        raise click.ClickException(
            f"query space {qspace.model_id}/{qspace.dim} does not match "
            f"index {idx.space.model_id}/{idx.space.dim}")
    rankings = [idx.query(vec, k=k, query_id=qid).to_record() for qid, vec in qitems]
    n = write_jsonl(out_path, rankings)
    click.echo(f"wrote {n} rankings (k={k})")


# -------------------------------------------------------------------- fuse

@main.command()
@click.option("--rankings", "ranking_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="One rankings file per encoder space.")
@click.option("--p", default=0.9, show_default=True, help="Top-weighting for rank overlap.")
@click.option("--out", "out_path", required=True, type=click.Path())
def fuse(ranking_paths, p, out_path):
    """Fuse per-space rankings into one grounding choice per query."""
    by_query: dict[str, list[Ranking]] = {}
    for path in ranking_paths:
        for rec in read_jsonl(path):
            ranking = Ranking.from_record(rec)
            by_query.setdefault(ranking.query_id, []).append(ranking)
    rows = []
    for query_id in sorted(by_query):
        rows.append(copeland_select(by_query[query_id], p=p).to_record())
    n = write_jsonl(out_path, rows)
    click.echo(f"fused {n} queries across {len(ranking_paths)} spaces")


# ------------------------------------------------------------------- embed

@main.group()
def embed():
    """Produce embedding vector files."""


@embed.command("hash")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dim", default=256, show_default=True)
@click.option("--ngram", default=3, show_default=True)
@click.option("--id-field", default="id", show_default=True)
@click.option("--text-field", default="text", show_default=True)
def embed_hash(in_path, out_path, dim, ngram, id_field, text_field):
    """Deterministic feature-hashing embeddings for records with a text field."""
    embedder = HashingEmbedder(dim=dim, ngram=ngram)
    items = [(rec[id_field], rec[text_field]) for rec in read_jsonl(in_path)]
    embedder.write_vector_file(out_path, items)
    click.echo(f"embedded {len(items)} texts into {embedder.space.model_id}")


# ------------------------------------------------------------ cq / iq runs

def _load_pairs(path) -> list[assembly.StatementPair]:
    return [assembly.StatementPair.from_record(r) for r in read_jsonl(path)]


def _space_spec(value: str) -> tuple[int, int]:
    try:
        ngram_s, dim_s = value.split(":")
        return int(ngram_s), int(dim_s)
    except ValueError:
        raise click.ClickException(f"bad space spec {value!r}; expected NGRAM:DIM")


@main.group()
def cq():
    """Caption querying: ground preconditions in existing caption images."""


@cq.command("run")
@click.option("--statements", "statements_path", required=True, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--captions", "captions_path", required=True, type=click.Path(exists=True))
@click.option("--space", "space_specs", multiple=True, default=("3:64", "3:128", "3:256"),
              show_default=True, help="Hashing encoder spaces as NGRAM:DIM.")
@click.option("--k", default=50, show_default=True)
@click.option("--p", default=0.9, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fusion-out", "fusion_path", type=click.Path())
@click.option("--rejects", "rejects_path", type=click.Path())
def cq_run(statements_path, pairs_path, captions_path, space_specs, k, p,
           out_path, fusion_path, rejects_path):
    """Embed precondition statements, rank captions per space, fuse, and emit
    labeled instances grounded in the chosen caption's image."""
    statements = {s.id: s for s in
                  (Statement.from_record(r) for r in read_jsonl(statements_path))}
    captions = {c.id: c for c in
                (Caption.from_record(r) for r in read_jsonl(captions_path))}
    if not captions:
        raise click.ClickException("caption file is empty")
    pairs = _load_pairs(pairs_path)

    spaces = []
    for spec in space_specs:
        ngram, dim = _space_spec(spec)
        embedder = HashingEmbedder(dim=dim, ngram=ngram)
        items = [(cid, embedder.embed(cap.text)) for cid, cap in sorted(captions.items())]
        spaces.append((embedder, VectorIndex(embedder.space, items)))

    instances, fusions, rejects = [], [], []
    query_cache: dict[str, object] = {}
    for pair in sorted(pairs, key=lambda pr: pr.pair_id):
        pre = statements.get(pair.precondition_id)
        act = statements.get(pair.action_id)
        if pre is None or act is None:
            missing = pair.precondition_id if pre is None else pair.action_id
            rejects.append({"id": pair.pair_id, "reason": "unknown_statement",
                            "detail": missing})
            continue
        fusion = query_cache.get(pre.id)
        if fusion is None:
            rankings = [
                idx.query(embedder.embed(pre.text), k=k, query_id=pre.id)
                for embedder, idx in spaces
            ]
            fusion = copeland_select(rankings, p=p)
            query_cache[pre.id] = fusion
            fusions.append(fusion.to_record())
        image_ref = captions[fusion.chosen].image_ref
        instances.append(
            assembly.from_caption_query(pair, pre.text, act.text, fusion, image_ref))
    n = write_jsonl(out_path, [i.to_record() for i in instances])
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    if fusion_path:
        write_jsonl(fusion_path, fusions)
    click.echo(f"grounded {n} instances from {len(pairs)} pairs")


@main.group()
def iq():
    """Image querying: ground preconditions in retrieved web images."""


@iq.command("run")
@click.option("--statements", "statements_path", required=True, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--provider", type=click.Choice(["fixture", "live"]), default="fixture",
              show_default=True)
@click.option("--fixture-file", type=click.Path(exists=True),
              help="Query-to-urls map for the fixture provider.")
@click.option("--base-url", help="Endpoint for the live provider.")
@click.option("--n", default=10, show_default=True)
@click.option("--registry", "registry_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--results-out", "results_path", type=click.Path())
@click.option("--rejects", "rejects_path", type=click.Path())
def iq_run(statements_path, pairs_path, provider, fixture_file, base_url, n,
           registry_path, out_path, results_path, rejects_path):
    """Search each precondition statement and emit one instance per image."""
    registry = load_registry(registry_path)
    blocklist = frozenset(registry["site_blocklist"])
    excluded = _abstract_sources(registry)

    if provider == "fixture":
        if not fixture_file:
            raise click.ClickException("--fixture-file is required with --provider fixture")
        client = image_query.FixtureProvider.from_file(fixture_file)
        limiter = None
    else:
        if not base_url:
            raise click.ClickException("--base-url is required with --provider live")
        client = image_query.HttpProvider(base_url)
        limiter = image_query.TokenBucket()

    statements = {s.id: s for s in
                  (Statement.from_record(r) for r in read_jsonl(statements_path))}
    pairs = _load_pairs(pairs_path)
    rejects = []

    wanted_ids = sorted({p.precondition_id for p in pairs})
    queried = []
    for sid in wanted_ids:
        stmt = statements.get(sid)
        if stmt is None:
            rejects.append({"id": sid, "reason": "unknown_statement"})
            continue
        queried.append(stmt)
    results, skips = image_query.run_image_queries(
        queried, client, n=n, excluded_sources=excluded,
        blocklist=blocklist, rate_limiter=limiter)
    rejects.extend(skips)

    by_statement: dict[str, list[image_query.ImageResult]] = {}
    for res in results:
        by_statement.setdefault(res.statement_id, []).append(res)

    instances = []
    for pair in sorted(pairs, key=lambda pr: pr.pair_id):
        pre = statements.get(pair.precondition_id)
        act = statements.get(pair.action_id)
        if pre is None or act is None:
            if pre is not None:  # unknown preconditions already rejected above
                rejects.append({"id": pair.pair_id, "reason": "unknown_statement",
                                "detail": pair.action_id})
            continue
        for res in by_statement.get(pre.id, []):
            instances.append(assembly.from_image_query(pair, pre.text, act.text, res))
    n_out = write_jsonl(out_path, [i.to_record() for i in instances])
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    if results_path:
        write_jsonl(results_path, [r.to_record() for r in results])
    click.echo(f"grounded {n_out} instances from {len(results)} images")


# ---------------------------------------------------- assemble / split / cf

@main.command()
@click.option("--ec", "ec_path", type=click.Path(exists=True),
              help="Extracted instances (pre-assembly schema).")
@click.option("--cq", "cq_path", type=click.Path(exists=True))
@click.option("--iq", "iq_path", type=click.Path(exists=True))
@click.option("--threshold", type=float,
              help="Drop extracted instances below this rule precision.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
def assemble(ec_path, cq_path, iq_path, threshold, out_path, report_path):
    """Merge the three strategy streams into one deduplicated dataset."""
    streams = []
    if ec_path:
        extracted = [ExtractedInstance.from_record(r) for r in read_jsonl(ec_path)]
        if threshold is not None:
            extracted = threshold_filter(extracted, threshold)
        streams.append([assembly.from_extraction(i) for i in extracted])
    if cq_path:
        streams.append([assembly.PvliInstance.from_record(r) for r in read_jsonl(cq_path)])
    if iq_path:
        streams.append([assembly.PvliInstance.from_record(r) for r in read_jsonl(iq_path)])
    if not streams:
        raise click.ClickException("provide at least one of --ec/--cq/--iq")
    merged, rep = assembly.merge_dedupe(streams)
    write_jsonl(out_path, [i.to_record() for i in merged])
    _write_json(rep, report_path)


@main.command("split")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--n-tuning", default=16000, show_default=True)
@click.option("--n-noisy-test", default=6000, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def split_cmd(dataset_path, seed, n_tuning, n_noisy_test, out_path):
    """Assign tuning / noisy_test splits; writes a .meta.json beside the output."""
    instances = [assembly.PvliInstance.from_record(r) for r in read_jsonl(dataset_path)]
    try:
        assigned, meta = assembly.split_sample(instances, n_tuning, n_noisy_test, seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    write_jsonl(out_path, [i.to_record() for i in assigned])
    _write_json(meta, str(Path(out_path).with_suffix(".meta.json")))
    click.echo(f"assigned {n_tuning} tuning / {n_noisy_test} noisy_test (seed {seed})")


@main.group()
def cf():
    """Counterfactually masked variants."""


@cf.command("make")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--kinds", default=",".join(assembly.VARIANT_KINDS), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--grid", default="4x4", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rejects", "rejects_path", type=click.Path())
def cf_make(dataset_path, kinds, seed, grid, out_path, rejects_path):
    """Generate masked text and image-region variants for every instance."""
    try:
        rows_s, cols_s = grid.lower().split("x")
        grid_rows, grid_cols = int(rows_s), int(cols_s)
    except ValueError:
        raise click.ClickException(f"bad grid {grid!r}; expected RxC")
    kind_list = [k.strip() for k in kinds.split(",") if k.strip()]
    records, rejects = [], []
    n_instances = 0
    for rec in read_jsonl(dataset_path):
        inst = assembly.PvliInstance.from_record(rec)
        n_instances += 1
        try:
            variants, skips = assembly.make_counterfactuals(
                inst, kind_list, seed=seed, grid_rows=grid_rows, grid_cols=grid_cols)
        except ValueError as exc:
            raise click.ClickException(str(exc))
        records.extend(v.to_record() for v in variants)
        rejects.extend(skips)
    n = write_jsonl(out_path, records)
    write_jsonl(_rejects_path(out_path, rejects_path), rejects)
    click.echo(f"wrote {n} variants for {n_instances} instances")


@main.command()
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True),
              help="Records {id, label}.")
@click.option("--split", "split_name", default=None,
              type=click.Choice(list(assembly.SPLITS)),
              help="Score only this gold split.")
@click.option("--seed", default=0, show_default=True,
              help="Seed for the uniform-random baseline.")
@click.option("--out", "out_path", type=click.Path())
def score(gold_path, pred_path, split_name, seed, out_path):
    """Score a prediction file against gold labels."""
    gold = [assembly.PvliInstance.from_record(r) for r in read_jsonl(gold_path)]
    if split_name:
        gold = [i for i in gold if i.split == split_name]
    preds = [(r["id"], r["label"]) for r in read_jsonl(pred_path)]
    try:
        rep = assembly.score_predictions(gold, preds, random_seed=seed)
    except assembly.ScoringError as exc:
        raise click.ClickException(str(exc))
    _write_json(rep, out_path)


# ------------------------------------------------------------------ verify

@main.group()
def verify():
    """Human verification service and clean-test selection."""


def _load_store(dataset_path, log_path, split_name, allowlist_path):
    instances = [assembly.PvliInstance.from_record(r) for r in read_jsonl(dataset_path)]
    if split_name:
        instances = [i for i in instances if i.split == split_name]
    allowlist = None
    if allowlist_path:
        allowlist = [
            line.strip() for line in Path(allowlist_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    return verification.VoteStore(instances, log_path, allowlist=allowlist)


@verify.command("serve")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--split", "split_name", default=None, type=click.Choice(list(assembly.SPLITS)))
@click.option("--allowlist", "allowlist_path", type=click.Path(exists=True),
              help="One permitted annotator id per line.")
@click.option("--static", "static_dir", type=click.Path(exists=True),
              help="Directory with the built review UI.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def verify_serve(dataset_path, log_path, split_name, allowlist_path, static_dir, host, port):
    """Serve the annotation API (and optionally the UI) over HTTP."""
    import uvicorn

    store = _load_store(dataset_path, log_path, split_name, allowlist_path)
    app = verification.create_app(store, static_dir=static_dir)
    click.echo(f"serving {store.progress()['units_total']} units on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@verify.command("select-clean")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--summary", "summary_path", type=click.Path())
def verify_select_clean(dataset_path, log_path, out_path, summary_path):
    """Apply the 2-of-3 rule to the vote log and write the updated dataset."""
    instances = [assembly.PvliInstance.from_record(r) for r in read_jsonl(dataset_path)]
    votes = verification.read_vote_log(log_path)
    try:
        updated, summary = verification.select_clean_test(instances, votes)
    except verification.VerificationError as exc:
        raise click.ClickException(str(exc))
    write_jsonl(out_path, [i.to_record() for i in updated])
    _write_json(summary, summary_path)


@verify.command("kappa")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
def verify_kappa(log_path):
    """Inter-annotator agreement over the vote log."""
    votes = verification.read_vote_log(log_path)
    try:
        kappa = verification.fleiss_kappa(votes)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{kappa:.6f}")


if __name__ == "__main__":
    main()
