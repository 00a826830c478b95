import json

import pytest
from click.testing import CliRunner

from pvli.cli import main
from pvli.jsonl import read_jsonl, write_jsonl
from pvli.lf_engine import compile_lf_table
from pvli.verification import VoteStore


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def write_registry(path, sources=None, blocklist=()):
    payload = {"sources": sources or {}, "site_blocklist": list(blocklist)}
    path.write_text(json.dumps(payload))
    return str(path)


class TestNormalizeCommands:
    def test_statements_flow(self, runner, tmp_path):
        src = tmp_path / "raw.jsonl"
        write_jsonl(src, [
            {"text": "Alice helps Bob", "source": "srcA"},
            {"text": "   ", "source": "srcA"},
        ])
        out = tmp_path / "stmts.jsonl"
        res = run_ok(runner, ["normalize", "statements", "--in", str(src),
                              "--out", str(out)])
        assert "wrote 1 statements, 1 rejects" in res.output
        recs = list(read_jsonl(out))
        assert recs[0]["text"] == "the person helps another person"
        assert recs[0]["id"] == "st-000000"
        rejects = list(read_jsonl(tmp_path / "stmts.rejects.jsonl"))
        assert rejects[0]["reason"] == "empty_after_normalization"

    def test_statements_registry_gate(self, runner, tmp_path):
        src = tmp_path / "raw.jsonl"
        write_jsonl(src, [{"text": "rain falls", "source": "mystery"}])
        reg = write_registry(tmp_path / "reg.json", {"srcA": {"size": 10}})
        out = tmp_path / "stmts.jsonl"
        run_ok(runner, ["normalize", "statements", "--in", str(src),
                        "--out", str(out), "--registry", reg])
        assert list(read_jsonl(out)) == []
        rejects = list(read_jsonl(tmp_path / "stmts.rejects.jsonl"))
        assert rejects[0]["reason"] == "unknown_source"

    def test_captions_split(self, runner, tmp_path):
        src = tmp_path / "raw.jsonl"
        write_jsonl(src, [
            {"text": "The dog barks. The cat naps.", "image_ref": "img1.jpg",
             "source": "srcA", "id": "c9"},
            {"text": "no image here"},
        ])
        out = tmp_path / "caps.jsonl"
        res = run_ok(runner, ["normalize", "captions", "--in", str(src),
                              "--out", str(out)])
        assert "wrote 2 caption sentences, 1 rejects" in res.output
        recs = list(read_jsonl(out))
        assert [r["id"] for r in recs] == ["c9", "c9-s1"]
        assert recs[0]["text"] == "the dog barks."

    def test_length_filter(self, runner, tmp_path):
        src = tmp_path / "caps.jsonl"
        texts = ["a b c", "a b c d", "a b c d e", "a b c d e f", "a b c d e f g"]
        write_jsonl(src, [
            {"id": f"c{i}", "text": t, "image_ref": "x.jpg", "source": "s"}
            for i, t in enumerate(texts)
        ])
        out = tmp_path / "kept.jsonl"
        report = tmp_path / "band.json"
        res = run_ok(runner, ["normalize", "length-filter", "--in", str(src),
                              "--out", str(out), "--report", str(report)])
        assert "kept 3/5 in [4, 6]" in res.output
        assert {r["id"] for r in read_jsonl(out)} == {"c1", "c2", "c3"}
        band = json.loads(report.read_text())
        assert (band["lower"], band["upper"]) == (4, 6)
        rejects = list(read_jsonl(tmp_path / "kept.rejects.jsonl"))
        assert {r["id"] for r in rejects} == {"c0", "c4"}


def write_captions(path, texts, source="srcA"):
    write_jsonl(path, [
        {"id": f"c{i}", "text": t, "image_ref": f"img{i}.jpg", "source": source}
        for i, t in enumerate(texts)
    ])


class TestExtractAndCalibrate:
    def test_extract(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, [
            "swimming pools have cold water in the winter unless they are heated",
            "a red bus on a street",
        ])
        out = tmp_path / "ec.jsonl"
        res = run_ok(runner, ["extract", "--captions", str(caps), "--out", str(out)])
        assert "extracted 1 instances from 2 captions" in res.output
        rec = next(iter(read_jsonl(out)))
        assert rec["lf_name"] == "unless"
        assert rec["label"] == "prevent"

    def test_extract_best_per_caption(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, ["the pool stays cold because it snows unless the heater runs"])
        plain = tmp_path / "all.jsonl"
        best = tmp_path / "best.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(plain)])
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(best),
                        "--best-per-caption"])
        assert len(list(read_jsonl(plain))) == 2
        kept = list(read_jsonl(best))
        assert [r["lf_name"] for r in kept] == ["unless"]

    def test_extract_pos_sidecar(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, ["the game was delayed due to the rain falling"])
        sidecar = tmp_path / "pos.jsonl"
        write_jsonl(sidecar, [{"caption_id": "c0", "lf_name": "due to", "confirmed": False}])
        out = tmp_path / "ec.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(out),
                        "--pos-sidecar", str(sidecar)])
        assert list(read_jsonl(out)) == []

    def test_calibrate_round_trip(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, [
            f"the light stays off count {i} unless the switch was flipped on"
            for i in range(8)
        ])
        ec = tmp_path / "ec.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(ec)])

        sample = tmp_path / "sample.jsonl"
        res = run_ok(runner, ["calibrate", "sample", "--instances", str(ec),
                              "--lf", "unless", "--n", "5", "--out", str(sample)])
        assert "sampled 5 of 8" in res.output
        rows = list(read_jsonl(sample))
        assert all(r["score"] is None for r in rows)

        for i, row in enumerate(rows):
            row["score"] = 1 if i < 4 else 0
        annotated = tmp_path / "annotated.jsonl"
        write_jsonl(annotated, rows)
        table = tmp_path / "table.txt"
        res = run_ok(runner, ["calibrate", "ingest", "--annotations", str(annotated),
                              "--n", "5", "--out-table", str(table)])
        lf = {l.name: l for l in compile_lf_table(table)}["unless"]
        assert lf.precision == pytest.approx(0.8)
        assert lf.min_sample_met

    def test_calibrate_unknown_lf(self, runner, tmp_path):
        ann = tmp_path / "ann.jsonl"
        write_jsonl(ann, [{"lf_name": "no such rule", "score": 1}])
        result = runner.invoke(main, ["calibrate", "ingest", "--annotations", str(ann),
                                      "--out-table", str(tmp_path / "t.txt")])
        assert result.exit_code != 0
        assert "no such rule" in result.output

    def test_sample_unknown_lf(self, runner, tmp_path):
        ec = tmp_path / "ec.jsonl"
        write_jsonl(ec, [])
        result = runner.invoke(main, ["calibrate", "sample", "--instances", str(ec),
                                      "--lf", "bogus", "--out", str(tmp_path / "s.jsonl")])
        assert result.exit_code != 0


class TestReports:
    def _extract(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, [
            "the pool stays cold unless the heater runs",
            "she stayed inside because the rain was heavy",
        ])
        ec = tmp_path / "ec.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(ec)])
        return ec

    def test_cumulative(self, runner, tmp_path):
        ec = self._extract(runner, tmp_path)
        out = tmp_path / "cumulative.json"
        run_ok(runner, ["report", "cumulative", "--instances", str(ec),
                        "--out", str(out)])
        rows = json.loads(out.read_text())
        assert len(rows) == 21
        assert rows[0]["n_retained"] == 2
        at_07 = next(r for r in rows if abs(r["threshold"] - 0.7) < 1e-9)
        assert at_07["n_retained"] == 1  # only the 0.750 rule survives

    def test_dist_with_registry(self, runner, tmp_path):
        dataset = tmp_path / "data.jsonl"
        rows = []
        for i in range(3):
            rows.append({"id": f"pv-a{i}", "hypothesis_text": f"a {i}",
                         "premise_image_ref": "x.jpg", "label": "allow",
                         "provenance": {"strategy": "EC", "source": "srcA",
                                        "lf_name": "unless"}})
        rows.append({"id": "pv-b0", "hypothesis_text": "b", "premise_image_ref": "y.jpg",
                     "label": "prevent", "provenance": {"strategy": "CQ", "source": "srcB"}})
        write_jsonl(dataset, rows)
        reg = write_registry(tmp_path / "reg.json",
                             {"srcA": {"size": 100}, "srcB": {"size": 100}})
        out = tmp_path / "dist.json"
        run_ok(runner, ["report", "dist", "--dataset", str(dataset),
                        "--registry", reg, "--out", str(out)])
        rep = json.loads(out.read_text())
        by_source = {r["source"]: r for r in rep["per_source"]}
        assert by_source["srcA"]["ratio"] == pytest.approx(1.5)
        assert by_source["srcB"]["ratio"] == pytest.approx(0.5)
        assert rep["lf_by_source"]["srcA"][0]["lf_name"] == "unless"

    def test_sites(self, runner, tmp_path):
        results = tmp_path / "results.jsonl"
        write_jsonl(results, [
            {"statement_id": "s1", "rank": 1, "image_url": "https://a.com/1.jpg",
             "site": "a.com", "source": "srcA"},
            {"statement_id": "s2", "rank": 1, "image_url": "https://a.com/2.jpg",
             "site": "a.com", "source": "srcA"},
        ])
        out = tmp_path / "sites.json"
        run_ok(runner, ["report", "sites", "--results", str(results), "--out", str(out)])
        stats = json.loads(out.read_text())
        assert stats["per_group"]["srcA"] == [["a.com", 2]]


class TestIndexCommands:
    def _embed(self, runner, tmp_path, name, texts, dim=64):
        src = tmp_path / f"{name}.jsonl"
        write_jsonl(src, [{"id": f"{name}{i}", "text": t} for i, t in enumerate(texts)])
        out = tmp_path / f"{name}.vec"
        run_ok(runner, ["embed", "hash", "--in", str(src), "--out", str(out),
                        "--dim", str(dim)])
        return out

    def test_embed_build_query(self, runner, tmp_path):
        vec = self._embed(runner, tmp_path, "cap",
                          ["a dog runs", "rain falls", "the sun shines"])
        res = run_ok(runner, ["index", "build", "--vectors", str(vec)])
        info = json.loads(res.output)
        assert info == {"model_id": "hash3g-64", "dim": 64,
                        "metric": "cosine-distance", "vectors": 3}

        queries = self._embed(runner, tmp_path, "q", ["rain falls"])
        out = tmp_path / "rankings.jsonl"
        run_ok(runner, ["index", "query", "--vectors", str(vec),
                        "--queries", str(queries), "--k", "2", "--out", str(out)])
        rec = next(iter(read_jsonl(out)))
        assert rec["query_id"] == "q0"
        assert rec["entries"][0][0] == "cap1"
        assert rec["entries"][0][1] == pytest.approx(0.0, abs=1e-9)

    def test_query_space_mismatch(self, runner, tmp_path):
        vec = self._embed(runner, tmp_path, "cap", ["a dog runs"], dim=64)
        queries = self._embed(runner, tmp_path, "q", ["a dog runs"], dim=32)
        result = runner.invoke(main, ["index", "query", "--vectors", str(vec),
                                      "--queries", str(queries),
                                      "--out", str(tmp_path / "r.jsonl")])
        assert result.exit_code != 0
        assert "does not match" in result.output


class TestFuse:
    def test_fuse_rankings(self, runner, tmp_path):
        paths = []
        orders = [["a", "b", "c"], ["b", "a", "c"], ["a", "c", "b"]]
        for i, order in enumerate(orders):
            path = tmp_path / f"r{i}.jsonl"
            entries = [[cid, round(0.1 * (j + 1), 3)] for j, cid in enumerate(order)]
            write_jsonl(path, [{"query_id": "q1", "model_id": f"m{i}",
                                "entries": entries}])
            paths.append(str(path))
        out = tmp_path / "fused.jsonl"
        args = ["fuse", "--out", str(out)]
        for p in paths:
            args.extend(["--rankings", p])
        res = run_ok(runner, args)
        assert "fused 1 queries across 3 spaces" in res.output
        rec = next(iter(read_jsonl(out)))
        assert rec["chosen"] == "a"
        assert rec["copeland_scores"] == {"a": 2, "b": 0, "c": -2}


def write_statements(path, rows):
    write_jsonl(path, [
        {"id": rid, "text": text, "kind": kind, "source": source,
         "token_len": len(text.split())}
        for rid, text, kind, source in rows
    ])


def write_pairs(path, rows):
    write_jsonl(path, [
        {"pair_id": pid, "precondition_id": pre, "action_id": act,
         "label": label, "source": source}
        for pid, pre, act, label, source in rows
    ])


@pytest.fixture
def grounding_files(tmp_path):
    statements = tmp_path / "stmts.jsonl"
    write_statements(statements, [
        ("s-act", "the pool stays warm", "action", "srcB"),
        ("s-pre", "the heater runs all night", "precondition", "srcB"),
        ("s-pre2", "the rain falls hard", "precondition", "srcB"),
    ])
    pairs = tmp_path / "pairs.jsonl"
    write_pairs(pairs, [
        ("p1", "s-pre", "s-act", "allow", "srcB"),
        ("p2", "s-pre2", "s-act", "prevent", "srcB"),
        ("p3", "s-missing", "s-act", "allow", "srcB"),
    ])
    captions = tmp_path / "caps.jsonl"
    write_captions(captions, [
        "the heater runs all night long",
        "the rain falls hard on the roof",
        "a red bus on a street",
    ])
    return statements, pairs, captions


class TestGroundingRuns:
    def test_cq_run(self, runner, tmp_path, grounding_files):
        statements, pairs, captions = grounding_files
        out = tmp_path / "cq.jsonl"
        fusions = tmp_path / "fusions.jsonl"
        res = run_ok(runner, ["cq", "run", "--statements", str(statements),
                              "--pairs", str(pairs), "--captions", str(captions),
                              "--space", "3:32", "--space", "3:64",
                              "--out", str(out), "--fusion-out", str(fusions)])
        assert "grounded 2 instances from 3 pairs" in res.output
        recs = list(read_jsonl(out))
        by_origin = {r["provenance"]["origin_id"]: r for r in recs}
        assert by_origin["p1"]["premise_image_ref"] == "img0.jpg"
        assert by_origin["p1"]["provenance"]["caption_id"] == "c0"
        assert by_origin["p2"]["premise_image_ref"] == "img1.jpg"
        assert by_origin["p1"]["label"] == "allow"
        rejects = list(read_jsonl(tmp_path / "cq.rejects.jsonl"))
        assert rejects == [{"id": "p3", "reason": "unknown_statement",
                            "detail": "s-missing"}]
        assert {r["query_id"] for r in read_jsonl(fusions)} == {"s-pre", "s-pre2"}

    def test_cq_run_byte_identical(self, runner, tmp_path, grounding_files):
        statements, pairs, captions = grounding_files
        outs = []
        for name in ("one.jsonl", "two.jsonl"):
            out = tmp_path / name
            run_ok(runner, ["cq", "run", "--statements", str(statements),
                            "--pairs", str(pairs), "--captions", str(captions),
                            "--space", "3:32", "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_iq_run(self, runner, tmp_path, grounding_files):
        statements, pairs, _ = grounding_files
        fixture = tmp_path / "fixture.jsonl"
        write_jsonl(fixture, [
            {"query": "the heater runs all night",
             "urls": ["https://a.com/1.jpg", "https://blocked.org/2.jpg"]},
            {"query": "the rain falls hard", "urls": ["https://b.com/3.jpg"]},
        ])
        reg = write_registry(tmp_path / "reg.json",
                             {"srcB": {"size": 10}}, blocklist=["blocked.org"])
        out = tmp_path / "iq.jsonl"
        results_out = tmp_path / "iq-results.jsonl"
        res = run_ok(runner, ["iq", "run", "--statements", str(statements),
                              "--pairs", str(pairs), "--fixture-file", str(fixture),
                              "--registry", reg, "--out", str(out),
                              "--results-out", str(results_out)])
        assert "grounded 2 instances from 2 images" in res.output
        recs = list(read_jsonl(out))
        by_origin = {r["provenance"]["origin_id"]: r for r in recs}
        assert by_origin["p1"]["premise_image_ref"] == "https://a.com/1.jpg"
        assert by_origin["p1"]["provenance"]["site"] == "a.com"
        assert by_origin["p2"]["premise_image_ref"] == "https://b.com/3.jpg"
        rejects = list(read_jsonl(tmp_path / "iq.rejects.jsonl"))
        assert {r["id"] for r in rejects} == {"s-missing"}
        assert all("blocked.org" not in r["image_url"] for r in read_jsonl(results_out))

    def test_iq_run_excludes_abstract_sources(self, runner, tmp_path, grounding_files):
        statements, pairs, _ = grounding_files
        fixture = tmp_path / "fixture.jsonl"
        write_jsonl(fixture, [])
        reg = write_registry(tmp_path / "reg.json",
                             {"srcB": {"size": 10, "abstract": True}})
        out = tmp_path / "iq.jsonl"
        run_ok(runner, ["iq", "run", "--statements", str(statements),
                        "--pairs", str(pairs), "--fixture-file", str(fixture),
                        "--registry", reg, "--out", str(out)])
        assert list(read_jsonl(out)) == []
        rejects = list(read_jsonl(tmp_path / "iq.rejects.jsonl"))
        assert all(r["reason"] in ("excluded_source", "unknown_statement")
                   for r in rejects)

    def test_iq_requires_fixture_file(self, runner, tmp_path, grounding_files):
        statements, pairs, _ = grounding_files
        result = runner.invoke(main, ["iq", "run", "--statements", str(statements),
                                      "--pairs", str(pairs),
                                      "--out", str(tmp_path / "iq.jsonl")])
        assert result.exit_code != 0
        assert "--fixture-file" in result.output


class TestAssemblePipeline:
    def _dataset(self, runner, tmp_path, n=12):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, [
            f"the lamp glows green number {i} unless the plug was pulled out"
            for i in range(n)
        ])
        ec = tmp_path / "ec.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(ec)])
        out = tmp_path / "dataset.jsonl"
        report = tmp_path / "assemble.json"
        run_ok(runner, ["assemble", "--ec", str(ec), "--threshold", "0.6",
                        "--out", str(out), "--report", str(report)])
        return out, report

    def test_assemble(self, runner, tmp_path):
        out, report = self._dataset(runner, tmp_path)
        recs = list(read_jsonl(out))
        assert len(recs) == 12
        assert all(r["provenance"]["strategy"] == "EC" for r in recs)
        rep = json.loads(report.read_text())
        assert rep["kept"] == 12
        assert rep["per_strategy"] == {"EC": 12}

    def test_assemble_threshold_drops_low_precision(self, runner, tmp_path):
        caps = tmp_path / "caps.jsonl"
        write_captions(caps, ["the kids play outside if not told otherwise"])
        ec = tmp_path / "ec.jsonl"
        run_ok(runner, ["extract", "--captions", str(caps), "--out", str(ec)])
        out = tmp_path / "dataset.jsonl"
        run_ok(runner, ["assemble", "--ec", str(ec), "--threshold", "0.6",
                        "--out", str(out), "--report", str(tmp_path / "r.json")])
        assert list(read_jsonl(out)) == []  # "if not" sits at 0.300

    def test_assemble_requires_an_input(self, runner, tmp_path):
        result = runner.invoke(main, ["assemble", "--out", str(tmp_path / "d.jsonl")])
        assert result.exit_code != 0

    def test_split(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path)
        out = tmp_path / "splits.jsonl"
        run_ok(runner, ["split", "--dataset", str(dataset), "--n-tuning", "6",
                        "--n-noisy-test", "4", "--seed", "3", "--out", str(out)])
        recs = list(read_jsonl(out))
        from collections import Counter

        counts = Counter(r["split"] for r in recs)
        assert counts == {"tuning": 6, "noisy_test": 4, "unassigned": 2}
        meta = json.loads((tmp_path / "splits.meta.json").read_text())
        assert meta["seed"] == 3

    def test_split_insufficient(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path)
        result = runner.invoke(main, ["split", "--dataset", str(dataset),
                                      "--n-tuning", "100", "--n-noisy-test", "0",
                                      "--out", str(tmp_path / "s.jsonl")])
        assert result.exit_code != 0
        assert "100" in result.output

    def test_cf_make(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path, n=3)
        out = tmp_path / "variants.jsonl"
        res = run_ok(runner, ["cf", "make", "--dataset", str(dataset),
                              "--grid", "2x2", "--out", str(out)])
        assert "wrote 12 variants for 3 instances" in res.output
        recs = list(read_jsonl(out))
        kinds = {r["variant_kind"] for r in recs}
        assert kinds == {"text_token_mask", "image_region_mask",
                         "text_blind", "image_blind"}
        region = next(r for r in recs if r["variant_kind"] == "image_region_mask")
        assert sum(c for row in region["mask_grid"] for c in row) == 2

    def test_cf_bad_grid(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path, n=3)
        result = runner.invoke(main, ["cf", "make", "--dataset", str(dataset),
                                      "--grid", "4by4", "--out", str(tmp_path / "v.jsonl")])
        assert result.exit_code != 0

    def test_score(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path)
        gold = list(read_jsonl(dataset))
        preds = tmp_path / "preds.jsonl"
        write_jsonl(preds, [{"id": r["id"], "label": r["label"]} for r in gold])
        out = tmp_path / "score.json"
        run_ok(runner, ["score", "--gold", str(dataset), "--predictions", str(preds),
                        "--out", str(out)])
        rep = json.loads(out.read_text())
        assert rep["accuracy"] == 1.0

    def test_score_mismatch_fails(self, runner, tmp_path):
        dataset, _ = self._dataset(runner, tmp_path)
        preds = tmp_path / "preds.jsonl"
        write_jsonl(preds, [{"id": "pv-bogus", "label": "allow"}])
        result = runner.invoke(main, ["score", "--gold", str(dataset),
                                      "--predictions", str(preds)])
        assert result.exit_code != 0
        assert "pv-bogus" in result.output


class TestVerifyCommands:
    def _dataset_and_log(self, tmp_path):
        rows = []
        for i, label in enumerate(["allow", "prevent", "allow"]):
            rows.append({"id": f"u{i}", "hypothesis_text": f"hyp {i}",
                         "premise_image_ref": f"{i}.jpg", "label": label,
                         "provenance": {"strategy": "EC"}})
        dataset = tmp_path / "dataset.jsonl"
        write_jsonl(dataset, rows)
        from pvli.assembly import PvliInstance

        store = VoteStore([PvliInstance.from_record(r) for r in rows],
                          tmp_path / "votes.jsonl")
        choices = {"u0": "true", "u1": "false", "u2": "not_sure"}
        for uid, choice in choices.items():
            for i in range(3):
                store.record_vote(uid, f"ann{i}", choice)
        store.close()
        return dataset, tmp_path / "votes.jsonl"

    def test_select_clean(self, runner, tmp_path):
        dataset, log = self._dataset_and_log(tmp_path)
        out = tmp_path / "clean.jsonl"
        summary = tmp_path / "summary.json"
        run_ok(runner, ["verify", "select-clean", "--dataset", str(dataset),
                        "--log", str(log), "--out", str(out),
                        "--summary", str(summary)])
        recs = {r["id"]: r["split"] for r in read_jsonl(out)}
        assert recs == {"u0": "clean_test", "u1": "clean_test", "u2": "unassigned"}
        body = json.loads(summary.read_text())
        assert body["clean_test_size"] == 2
        assert body["allow_count"] == 1

    def test_kappa(self, runner, tmp_path):
        _, log = self._dataset_and_log(tmp_path)
        res = run_ok(runner, ["verify", "kappa", "--log", str(log)])
        assert res.output.strip() == "1.000000"


class TestTopLevel:
    def test_version(self, runner):
        res = run_ok(runner, ["--version"])
        assert "pvli" in res.output

    def test_help_lists_commands(self, runner):
        res = run_ok(runner, ["--help"])
        for name in ("normalize", "extract", "calibrate", "report", "index",
                     "fuse", "embed", "cq", "iq", "assemble", "split", "cf",
                     "score", "verify"):
            assert name in res.output
