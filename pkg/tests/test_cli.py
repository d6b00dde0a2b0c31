"""End-to-end runs of every subcommand through main(argv)."""

import hashlib
import json

import numpy as np
import pytest

from sparsepq import cli
from sparsepq.data import exact_knn, read_ivecs, read_vecs, write_vecs
from sparsepq.metrics import read_metrics_csv


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared data files plus a trained flat index, built through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    gallery = root / "gallery.fvecs"
    queries = root / "queries.fvecs"
    gt = root / "gt.ivecs"
    book = root / "book.spqb"
    index = root / "flat.spqi"
    assert _run("gen-data", "--out", gallery, "--n", 400, "--d", 8, "--seed", 1) == 0
    assert _run("gen-data", "--out", queries, "--n", 12, "--d", 8, "--seed", 2) == 0
    assert _run(
        "groundtruth", "--gallery", gallery, "--queries", queries, "--t", 10, "--out", gt
    ) == 0
    assert _run(
        "train", "--train", gallery, "--out", book,
        "--kind", "spq", "--m", 2, "--k", 16, "--L", 2, "--seed", 3,
    ) == 0
    assert _run(
        "encode", "--gallery", gallery, "--codebook", book,
        "--method", "spq", "--L", 2, "--out", index,
    ) == 0
    return root


def test_gen_data_is_reproducible(tmp_path):
    a, b = tmp_path / "a.fvecs", tmp_path / "b.fvecs"
    assert _run("gen-data", "--out", a, "--n", 64, "--d", 4, "--seed", 5) == 0
    assert _run("gen-data", "--out", b, "--n", 64, "--d", 4, "--seed", 5) == 0
    assert _digest(a) == _digest(b)
    c = tmp_path / "c.fvecs"
    assert _run("gen-data", "--out", c, "--n", 64, "--d", 4, "--seed", 6) == 0
    assert _digest(a) != _digest(c)


def test_missing_required_setting_fails_cleanly(capsys):
    assert _run("gen-data", "--n", 10) == 1
    err = capsys.readouterr().err
    assert "error:" in err and "--out" in err


def test_groundtruth_matches_the_library(workspace):
    gallery = read_vecs(str(workspace / "gallery.fvecs"))
    queries = read_vecs(str(workspace / "queries.fvecs"))
    want = exact_knn(gallery, queries, 10).ids
    got = read_ivecs(str(workspace / "gt.ivecs"))
    np.testing.assert_array_equal(got, want)


def test_train_reports_per_subspace_distortion(workspace, capsys, tmp_path):
    out = tmp_path / "book2.spqb"
    assert _run(
        "train", "--train", workspace / "gallery.fvecs", "--out", out,
        "--kind", "spq", "--m", 2, "--k", 8, "--seed", 0,
    ) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum("mean squared distortion" in ln for ln in lines) == 2
    assert any(ln.startswith("subspace 0:") for ln in lines)


def test_config_file_layering_and_dump(tmp_path, workspace):
    cfg_path = tmp_path / "gen.json"
    cfg_path.write_text(json.dumps({"n": 32, "d": 4, "seed": 9}))
    out1 = tmp_path / "one.fvecs"
    dump = tmp_path / "merged.json"
    # flag beats file: d=6 wins over the configured 4
    assert _run(
        "gen-data", "--config", cfg_path, "--d", 6, "--out", out1, "--dump-config", dump
    ) == 0
    merged = json.loads(dump.read_text())
    assert merged["n"] == 32 and merged["d"] == 6 and merged["seed"] == 9
    assert read_vecs(str(out1)).shape == (32, 6)
    # replaying the dumped config reproduces the artifact byte for byte
    out2 = tmp_path / "two.fvecs"
    assert _run("gen-data", "--config", dump, "--out", out2) == 0
    assert _digest(out1) == _digest(out2)


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert _run("gen-data", "--config", bad, "--out", tmp_path / "x.fvecs") == 1
    assert "unknown config keys: bogus" in capsys.readouterr().err


def test_flat_search_writes_ids_scores_and_timings(workspace, tmp_path):
    out = tmp_path / "res.ivecs"
    scores = tmp_path / "res.fvecs"
    timings = tmp_path / "timings.json"
    assert _run(
        "search", "--index", workspace / "flat.spqi", "--queries", workspace / "queries.fvecs",
        "--distance", "adc", "--p", 20, "--out", out,
        "--scores-out", scores, "--timings-out", timings,
    ) == 0
    ids = read_ivecs(str(out))
    ss = read_vecs(str(scores))
    assert ids.shape == (12, 20)
    assert ss.shape == (12, 20)
    assert (np.diff(ss.astype(np.float64), axis=1) >= -1e-6).all()
    payload = json.loads(timings.read_text())
    assert payload["queries"] == 12 and payload["p"] == 20
    assert {"tables", "scan", "select"} <= set(payload["stage_seconds"])


def test_flat_search_supports_the_symmetric_distance(workspace, tmp_path):
    out = tmp_path / "res_sdc.ivecs"
    assert _run(
        "search", "--index", workspace / "flat.spqi", "--queries", workspace / "queries.fvecs",
        "--distance", "sdc", "--p", 5, "--out", out,
    ) == 0
    assert read_ivecs(str(out)).shape == (12, 5)


def test_self_query_returns_each_item_when_codes_are_lossless(tmp_path):
    # a gallery of scaled canonical directions is exactly representable by
    # one atom per subspace, so the nearest code to each query is itself
    gallery = np.zeros((16, 4), dtype=np.float32)
    for i in range(16):
        gallery[i, i % 4] = 1.0 + i / 8.0  # well-separated scales
    gpath = tmp_path / "g.fvecs"
    write_vecs(str(gpath), gallery)
    book = tmp_path / "book.spqb"
    index = tmp_path / "g.spqi"
    assert _run(
        "train", "--train", gpath, "--out", book, "--kind", "spq",
        "--m", 2, "--k", 4, "--L", 2, "--seed", 0,
    ) == 0
    assert _run(
        "encode", "--gallery", gpath, "--codebook", book, "--method", "spq",
        "--L", 2, "--out", index,
    ) == 0
    out = tmp_path / "self.ivecs"
    scores = tmp_path / "self.fvecs"
    assert _run(
        "search", "--index", index, "--queries", gpath, "--distance", "adc",
        "--p", 1, "--out", out, "--scores-out", scores,
    ) == 0
    assert read_ivecs(str(out)).ravel().tolist() == list(range(16))
    assert np.abs(read_vecs(str(scores))).max() < 1e-4


def test_pq_round_trip_through_the_cli(workspace, tmp_path):
    book = tmp_path / "pq.spqb"
    codes = tmp_path / "codes.spqp"
    out = tmp_path / "pq.ivecs"
    assert _run(
        "train", "--train", workspace / "gallery.fvecs", "--out", book,
        "--kind", "pq", "--m", 4, "--k", 16, "--seed", 0,
    ) == 0
    assert _run(
        "encode", "--gallery", workspace / "gallery.fvecs", "--codebook", book,
        "--method", "pq", "--out", codes,
    ) == 0
    for distance in ("adc", "sdc"):
        assert _run(
            "search", "--index", codes, "--queries", workspace / "queries.fvecs",
            "--codebook", book, "--distance", distance, "--p", 10, "--out", out,
        ) == 0
        assert read_ivecs(str(out)).shape == (12, 10)


def test_pq_training_rejects_the_dictionary_method(workspace, capsys, tmp_path):
    assert _run(
        "train", "--train", workspace / "gallery.fvecs", "--out", tmp_path / "x.spqb",
        "--kind", "pq", "--method", "odl",
    ) == 1
    assert "kmeans" in capsys.readouterr().err


def test_ivf_round_trip_through_the_cli(workspace, tmp_path):
    index = tmp_path / "lists.spqv"
    out = tmp_path / "ivf.ivecs"
    assert _run(
        "encode", "--gallery", workspace / "gallery.fvecs", "--method", "ivfspq",
        "--m", 2, "--k", 16, "--L", 2, "--kprime", 8, "--seed", 0, "--out", index,
    ) == 0
    assert _run(
        "search", "--index", index, "--queries", workspace / "queries.fvecs",
        "--w", 8, "--p", 10, "--out", out,
    ) == 0
    ids = read_ivecs(str(out))
    assert ids.shape == (12, 10)
    assert (ids >= 0).all()  # full probe never pads

    # re-ranked run against the exact ground truth prefix
    out2 = tmp_path / "ivf_rr.ivecs"
    assert _run(
        "search", "--index", index, "--queries", workspace / "queries.fvecs",
        "--w", 8, "--p", 10, "--rerank", 400,
        "--gallery", workspace / "gallery.fvecs", "--out", out2,
    ) == 0
    gt = read_ivecs(str(workspace / "gt.ivecs"))
    np.testing.assert_array_equal(read_ivecs(str(out2)), gt[:, :10])


def test_ivfpq_style_encodes_single_atom_codes(workspace, tmp_path, capsys):
    index = tmp_path / "style.spqv"
    assert _run(
        "encode", "--gallery", workspace / "gallery.fvecs", "--method", "ivfpq-style",
        "--m", 2, "--k", 16, "--kprime", 4, "--seed", 0, "--out", index,
    ) == 0
    assert "L=1" in capsys.readouterr().out


def test_search_rejects_unknown_index_files(tmp_path, capsys):
    bogus = tmp_path / "bogus.spqi"
    bogus.write_bytes(b"NOPE" + b"\x00" * 64)
    q = tmp_path / "q.fvecs"
    write_vecs(str(q), np.zeros((1, 4), dtype=np.float32))
    assert _run(
        "search", "--index", bogus, "--queries", q, "--out", tmp_path / "r.ivecs"
    ) == 1
    assert "unrecognized index file" in capsys.readouterr().err


def test_eval_reproduces_library_metrics(workspace, tmp_path):
    res = tmp_path / "res.ivecs"
    assert _run(
        "search", "--index", workspace / "flat.spqi",
        "--queries", workspace / "queries.fvecs",
        "--distance", "adc", "--p", 10, "--out", res,
    ) == 0
    csv_out = tmp_path / "metrics.csv"
    assert _run(
        "eval", "--results", res, "--gt", workspace / "gt.ivecs", "--out", csv_out,
        "--R", "1,5,10", "--t-eval", 1, "--method", "spq", "--distance", "adc",
        "--m", 2, "--k", 16, "--L", 2, "--bits-index", 16, "--coeff-bytes", 16,
    ) == 0
    rows, meta = read_metrics_csv(str(csv_out))
    assert meta["t_eval"] == "1"
    metrics = {r["metric"]: r for r in rows}
    assert set(metrics) == {"recall@1", "recall@5", "recall@10", "map"}
    assert all(r["method"] == "spq" and r["bits_index"] == 16 for r in rows)

    from sparsepq.data import GroundTruth
    from sparsepq.metrics import mean_average_precision, recall_at_r

    run_ids = read_ivecs(str(res))
    gt_ids = read_ivecs(str(workspace / "gt.ivecs"))
    gt = GroundTruth(ids=gt_ids, dists=np.zeros(gt_ids.shape))
    assert metrics["recall@5"]["value"] == pytest.approx(recall_at_r(run_ids, gt, 5, 1))
    assert metrics["map"]["value"] == pytest.approx(mean_average_precision(run_ids, gt, 1))


def test_eval_rejects_r_beyond_the_result_depth(workspace, tmp_path, capsys):
    res = tmp_path / "res.ivecs"
    assert _run(
        "search", "--index", workspace / "flat.spqi",
        "--queries", workspace / "queries.fvecs",
        "--distance", "adc", "--p", 5, "--out", res,
    ) == 0
    assert _run(
        "eval", "--results", res, "--gt", workspace / "gt.ivecs",
        "--out", tmp_path / "m.csv", "--R", "50",
    ) == 1
    assert "no requested R" in capsys.readouterr().err


def test_bench_writes_csv_figures_and_timings(tmp_path):
    out_dir = tmp_path / "bench"
    assert _run(
        "bench", "--out-dir", out_dir, "--n-train", 400, "--n-gallery", 500,
        "--n-queries", 10, "--d", 8, "--k", 8, "--L", 2, "--bits", "6,12",
        "--methods", "pq,spq", "--R", "1,10", "--t-gt", 10,
        "--t-eval-map", 10, "--seed", 0, "--iters", 8,
    ) == 0
    rows, meta = read_metrics_csv(str(out_dir / "bench_metrics.csv"))
    # per (method, bits): one distortion row + two recall rows + one map row;
    # pq fits only 12 bits (ceil(log2 8)=3 per subspace, and 6/3=2 but 8%2=0
    # works, so both fit), spq needs 6 bits per subspace: both fit as well
    by = {}
    for r in rows:
        by.setdefault((r["method"], r["bits_index"]), []).append(r["metric"])
    for combo, metrics in by.items():
        assert sorted(metrics) == ["distortion", "map", "recall@1", "recall@10"], combo

    # distortion strictly improves with more bits, per method
    for method in ("pq", "spq"):
        vals = [
            r["value"] for r in rows
            if r["method"] == method and r["metric"] == "distortion"
        ]
        assert len(vals) == 2 and vals[1] < vals[0]

    figures = sorted(p.name for p in out_dir.glob("*.png"))
    assert "bench_distortion_vs_bits.png" in figures
    assert "bench_map_vs_bits.png" in figures
    assert any(name.startswith("bench_recall_") for name in figures)
    timings = json.loads((out_dir / "bench_timings.json").read_text())
    assert all("search_adc_ms_per_query" in v for v in timings.values())
    assert meta["t_eval_recall"] == "1"


def test_bench_rejects_unknown_methods(tmp_path, capsys):
    assert _run(
        "bench", "--out-dir", tmp_path / "b", "--methods", "pq,quantum", "--bits", "8"
    ) == 1
    assert "unknown method" in capsys.readouterr().err
