"""Command line front end.

Subcommands cover the full workflow: synthesize data, compute exact ground
truth, train codebooks, encode galleries, search, score a run against ground
truth, and run the end-to-end benchmark sweep that writes a metrics CSV plus
rendered figures.

Every subcommand accepts --config pointing at a JSON file whose keys mirror
the long option names (underscores for dashes); explicit flags win over the
file, the file wins over built-in defaults. --dump-config writes the merged
settings back out, and feeding that file to --config reproduces the run.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import time

import numpy as np

from . import data as dio
from . import ivf as ivfm
from . import metrics as mx
from . import omp as ompm
from . import pq as pqm
from . import spq as spqm
from .codebook import load_product_codebook, save_product_codebook, train_product_codebook
from .kernels import top_k


def _thread_limit(threads):
    """Cap BLAS thread pools for the enclosed work."""
    if threads is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(threads))


def _int_list(v) -> list[int]:
    if isinstance(v, str):
        return [int(x) for x in v.split(",") if x.strip()]
    return [int(x) for x in v]


def _str_list(v) -> list[str]:
    if isinstance(v, str):
        return [x.strip() for x in v.split(",") if x.strip()]
    return [str(x) for x in v]


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """Layer defaults, then the config file, then explicit flags."""
    cfg = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            loaded = json.load(fh)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    dump = getattr(args, "dump_config", None)
    if dump:
        with open(dump, "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise ValueError(f"missing required setting --{key.replace('_', '-')}")


# ---------------------------------------------------------------------------
# gen-data

_GEN_DEFAULTS = {"out": None, "n": 10000, "d": 128, "seed": 0}


def cmd_gen_data(args) -> int:
    cfg = _merge(args, _GEN_DEFAULTS)
    _require(cfg, "out")
    X = dio.gen_gaussian(int(cfg["n"]), int(cfg["d"]), int(cfg["seed"]))
    dio.write_vecs(cfg["out"], X, "fvecs")
    print(f"wrote {X.shape[0]} x {X.shape[1]} float vectors to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# groundtruth

_GT_DEFAULTS = {
    "gallery": None,
    "queries": None,
    "t": 50,
    "out": None,
    "dists_out": None,
    "threads": None,
}


def cmd_groundtruth(args) -> int:
    cfg = _merge(args, _GT_DEFAULTS)
    _require(cfg, "gallery", "queries", "out")
    with _thread_limit(cfg["threads"]):
        gallery = dio.read_vecs(cfg["gallery"])
        queries = dio.read_vecs(cfg["queries"])
        gt = dio.exact_knn(gallery, queries, int(cfg["t"]))
    dio.write_ivecs(cfg["out"], gt.ids)
    if cfg["dists_out"]:
        dio.write_vecs(cfg["dists_out"], gt.dists.astype(np.float32), "fvecs")
    print(f"wrote exact top-{gt.t} ids for {gt.ids.shape[0]} queries to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# train

_TRAIN_DEFAULTS = {
    "train": None,
    "out": None,
    "kind": "spq",
    "method": "kmeans",
    "m": 8,
    "k": 256,
    "L": 2,
    "iters": 25,
    "epochs": 5,
    "batch_size": 256,
    "seed": 0,
    "subspace_dims": None,
    "threads": None,
}


def cmd_train(args) -> int:
    cfg = _merge(args, _TRAIN_DEFAULTS)
    _require(cfg, "train", "out")
    if cfg["kind"] not in ("spq", "pq"):
        raise ValueError(f"unknown codebook kind {cfg['kind']!r}")
    if cfg["kind"] == "pq" and cfg["method"] != "kmeans":
        raise ValueError("the hard-assignment codebook only trains with kmeans")
    dims = _int_list(cfg["subspace_dims"]) if cfg["subspace_dims"] else None
    m, k, L = int(cfg["m"]), int(cfg["k"]), int(cfg["L"])

    with _thread_limit(cfg["threads"]):
        X = dio.read_vecs(cfg["train"])
        if cfg["kind"] == "pq":
            pqc = pqm.train_pq_codebook(
                X, m, k, iters=int(cfg["iters"]), seed=int(cfg["seed"]), subspace_dims=dims
            )
            pqm.save_pq_codebook(cfg["out"], pqc)
            codes = pqm.pq_encode(X, pqc)
            recon = pqm.pq_reconstruct(codes, pqc)
            for i, (sub, rsub) in enumerate(zip(pqc.split(X), pqc.split(recon))):
                err = mx.mean_squared_distortion(sub, rsub)
                print(f"subspace {i}: mean squared distortion {err:.6f}")
        else:
            pcb = train_product_codebook(
                X,
                m,
                k,
                method=cfg["method"],
                L=L,
                iters=int(cfg["iters"]),
                epochs=int(cfg["epochs"]),
                batch_size=int(cfg["batch_size"]),
                seed=int(cfg["seed"]),
                subspace_dims=dims,
            )
            save_product_codebook(cfg["out"], pcb)
            for i, sub in enumerate(pcb.split(X)):
                sel, coef, _ = ompm.omp_encode_batch(sub, pcb.books[i], L)
                recon = ompm.reconstruct_batch(sel, coef, pcb.books[i])
                err = mx.mean_squared_distortion(sub, recon)
                print(f"subspace {i}: mean squared distortion {err:.6f}")
    print(f"wrote {cfg['kind']} codebook (m={m}, k={k}) to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# encode

_ENCODE_DEFAULTS = {
    "gallery": None,
    "codebook": None,
    "method": "spq",
    "L": 2,
    "m": None,
    "k": None,
    "kprime": 256,
    "coarse_iters": 25,
    "seed": 0,
    "out": None,
    "threads": None,
}


def cmd_encode(args) -> int:
    cfg = _merge(args, _ENCODE_DEFAULTS)
    _require(cfg, "gallery", "out")
    method = cfg["method"]
    L = int(cfg["L"])
    with _thread_limit(cfg["threads"]):
        X = dio.read_vecs(cfg["gallery"])
        if method == "pq":
            _require(cfg, "codebook")
            pqc = pqm.load_pq_codebook(cfg["codebook"])
            codes = pqm.pq_encode(X, pqc)
            pqm.save_pq_codes(cfg["out"], codes, pqc.k)
            print(f"encoded {codes.shape[0]} vectors at {pqm.pq_code_bits(pqc.m, pqc.k)} bits each")
        elif method == "spq":
            _require(cfg, "codebook")
            pcb = load_product_codebook(cfg["codebook"])
            index = spqm.build(X, pcb, L)
            spqm.save_index(cfg["out"], index)
            bits = spqm.spq_code_bits(index.m, index.k, index.L)
            cbytes = spqm.spq_coeff_bytes(index.m, index.L)
            print(
                f"encoded {index.n} vectors at {bits} index bits "
                f"+ {cbytes} coefficient bytes each"
            )
        elif method in ("ivfspq", "ivfpq-style"):
            # The codebook trains on residuals, so the coarse stage and the
            # residual codebooks are built here in one shot.
            _require(cfg, "m", "k")
            L_eff = 1 if method == "ivfpq-style" else L
            index = ivfm.build_ivf(
                X,
                int(cfg["kprime"]),
                int(cfg["m"]),
                int(cfg["k"]),
                L_eff,
                int(cfg["seed"]),
                coarse_iters=int(cfg["coarse_iters"]),
            )
            ivfm.save_ivf(cfg["out"], index)
            print(
                f"built inverted file: {index.kprime} cells, {index.n} vectors, "
                f"L={index.L} residual codes"
            )
        else:
            raise ValueError(f"unknown encode method {method!r}")
    return 0


# ---------------------------------------------------------------------------
# search

_SEARCH_DEFAULTS = {
    "index": None,
    "queries": None,
    "codebook": None,
    "distance": "adc",
    "p": 100,
    "w": 8,
    "rerank": None,
    "gallery": None,
    "out": None,
    "scores_out": None,
    "timings_out": None,
    "threads": None,
}


# Sentinel for padded result slots: id -1 cannot match any gallery id and
# the score stays finite so the row still serializes as floats.
_PAD_SCORE = float(np.finfo(np.float32).max)


def _pad_row(ids, scores, p):
    if ids.shape[0] == p:
        return ids, scores
    pad_ids = np.full(p, -1, dtype=np.int64)
    pad_scores = np.full(p, _PAD_SCORE)
    pad_ids[: ids.shape[0]] = ids
    pad_scores[: scores.shape[0]] = scores
    return pad_ids, pad_scores


def _search_flat_spq(index, queries, distance, p, timings):
    nq = queries.shape[0]
    out_ids = np.empty((nq, p), dtype=np.int32)
    out_scores = np.empty((nq, p), dtype=np.float32)
    for qi in range(nq):
        t0 = time.perf_counter()
        if distance == "adc":
            lut = spqm.adc_tables(queries[qi], index.codebook)
        else:
            lut = spqm.sdc_tables(queries[qi], index.codebook, index.L)
        t1 = time.perf_counter()
        scores = spqm.scan(index, lut)
        t2 = time.perf_counter()
        ids, ss = top_k(scores, p)
        t3 = time.perf_counter()
        timings["tables"] += t1 - t0
        timings["scan"] += t2 - t1
        timings["select"] += t3 - t2
        out_ids[qi], out_scores[qi] = ids, ss
    return out_ids, out_scores


def _search_flat_pq(codes, pqc, queries, distance, p, timings):
    nq = queries.shape[0]
    out_ids = np.empty((nq, p), dtype=np.int32)
    out_scores = np.empty((nq, p), dtype=np.float32)
    pair_tables = None
    if distance == "sdc":
        t0 = time.perf_counter()
        pair_tables = pqm.sdc_tables(pqc)
        timings["tables"] += time.perf_counter() - t0
    for qi in range(nq):
        t0 = time.perf_counter()
        if distance == "adc":
            per_sub = pqm.adc_tables(queries[qi], pqc)
        else:
            q_code = pqm.pq_encode(queries[qi], pqc).astype(np.int64)
            per_sub = [pair_tables[i][q_code[i]] for i in range(pqc.m)]
        t1 = time.perf_counter()
        scores = pqm.scan(codes, per_sub, None)
        t2 = time.perf_counter()
        ids, ss = top_k(scores, p)
        t3 = time.perf_counter()
        timings["tables"] += t1 - t0
        timings["scan"] += t2 - t1
        timings["select"] += t3 - t2
        out_ids[qi], out_scores[qi] = ids, ss
    return out_ids, out_scores


def _search_ivf(index, queries, w, p, rerank, gallery, timings):
    nq = queries.shape[0]
    out_ids = np.full((nq, p), -1, dtype=np.int32)
    out_scores = np.full((nq, p), _PAD_SCORE, dtype=np.float32)
    padded = 0
    for qi in range(nq):
        t0 = time.perf_counter()
        ids, ss = ivfm.ivf_search(index, queries[qi], w, p, rerank=rerank, gallery=gallery)
        timings["search"] += time.perf_counter() - t0
        if ids.shape[0] < p:
            padded += 1
            ids, ss = _pad_row(ids, ss, p)
        out_ids[qi], out_scores[qi] = ids, ss
    if padded:
        print(f"note: {padded} queries returned fewer than p results; rows padded with -1")
    return out_ids, out_scores


def cmd_search(args) -> int:
    cfg = _merge(args, _SEARCH_DEFAULTS)
    _require(cfg, "index", "queries", "out")
    if cfg["distance"] not in ("adc", "sdc"):
        raise ValueError(f"unknown distance {cfg['distance']!r}")
    with open(cfg["index"], "rb") as fh:
        magic = fh.read(4)

    with _thread_limit(cfg["threads"]):
        queries = dio.read_vecs(cfg["queries"])
        timings = {"tables": 0.0, "scan": 0.0, "select": 0.0, "search": 0.0}
        rerank = int(cfg["rerank"]) if cfg["rerank"] is not None else None
        if magic == spqm.INDEX_MAGIC:
            index = spqm.load_index(cfg["index"])
            p = min(int(cfg["p"]), index.n)
            out_ids, out_scores = _search_flat_spq(
                index, queries, cfg["distance"], p, timings
            )
        elif magic == pqm.PQ_CODES_MAGIC:
            _require(cfg, "codebook")
            codes, k = pqm.load_pq_codes(cfg["index"])
            pqc = pqm.load_pq_codebook(cfg["codebook"])
            if pqc.k != k or pqc.m != codes.shape[1]:
                raise ValueError("codebook does not match the code file's m and k")
            p = min(int(cfg["p"]), codes.shape[0])
            out_ids, out_scores = _search_flat_pq(
                codes, pqc, queries, cfg["distance"], p, timings
            )
        elif magic == ivfm.IVF_MAGIC:
            index = ivfm.load_ivf(cfg["index"])
            gallery = None
            if rerank is not None:
                _require(cfg, "gallery")
                gallery = dio.read_vecs(cfg["gallery"])
            p = min(int(cfg["p"]), index.n)
            out_ids, out_scores = _search_ivf(
                index, queries, int(cfg["w"]), p, rerank, gallery, timings
            )
        else:
            raise ValueError(f"{cfg['index']}: unrecognized index file (magic {magic!r})")

    dio.write_ivecs(cfg["out"], out_ids)
    if cfg["scores_out"]:
        dio.write_vecs(cfg["scores_out"], out_scores, "fvecs")
    nq = queries.shape[0]
    stage_ms = {s: 1000.0 * v / nq for s, v in timings.items() if v > 0.0}
    for stage, ms in stage_ms.items():
        print(f"{stage}: {ms:.3f} ms/query")
    if cfg["timings_out"]:
        payload = {
            "queries": nq,
            "p": int(out_ids.shape[1]),
            "stage_seconds": {s: v for s, v in timings.items() if v > 0.0},
            "per_query_ms": stage_ms,
        }
        with open(cfg["timings_out"], "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"wrote top-{out_ids.shape[1]} ids for {nq} queries to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# eval

_EVAL_DEFAULTS = {
    "results": None,
    "gt": None,
    "out": None,
    "R": [1, 10, 100],
    "t_eval": None,
    "method": "",
    "distance": "",
    "m": 0,
    "k": 0,
    "L": 0,
    "bits_index": 0,
    "coeff_bytes": 0,
}


def cmd_eval(args) -> int:
    cfg = _merge(args, _EVAL_DEFAULTS)
    _require(cfg, "results", "gt", "out")
    run_ids = dio.read_ivecs(cfg["results"])
    gt_ids = dio.read_ivecs(cfg["gt"])
    gt = dio.GroundTruth(ids=gt_ids, dists=np.zeros(gt_ids.shape, dtype=np.float64))
    t_eval = int(cfg["t_eval"]) if cfg["t_eval"] is not None else gt.t
    R_list = [r for r in _int_list(cfg["R"]) if r <= run_ids.shape[1]]
    if not R_list:
        raise ValueError("no requested R fits within the result depth")

    base = {
        "method": cfg["method"],
        "distance": cfg["distance"],
        "bits_index": int(cfg["bits_index"]),
        "coeff_bytes": int(cfg["coeff_bytes"]),
        "m": int(cfg["m"]),
        "k": int(cfg["k"]),
        "L": int(cfg["L"]),
    }
    rows = []
    for R in R_list:
        value = mx.recall_at_r(run_ids, gt, R, t_eval)
        rows.append(dict(base, metric=f"recall@{R}", value=value))
        print(f"recall@{R} (t_eval={t_eval}): {value:.4f}")
    value = mx.mean_average_precision(run_ids, gt, t_eval)
    rows.append(dict(base, metric="map", value=value))
    print(f"map (t_eval={t_eval}, depth={run_ids.shape[1]}): {value:.4f}")
    mx.write_metrics_csv(
        cfg["out"],
        rows,
        metadata={
            "results": cfg["results"],
            "groundtruth": cfg["gt"],
            "queries": run_ids.shape[0],
            "depth": run_ids.shape[1],
            "t_eval": t_eval,
        },
    )
    print(f"wrote {len(rows)} metric rows to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# bench

_BENCH_DEFAULTS = {
    "out_dir": None,
    "n_train": 5000,
    "n_gallery": 10000,
    "n_queries": 100,
    "d": 128,
    "seed": 0,
    "k": 256,
    "L": 2,
    "bits": [32, 64, 128],
    "methods": ["pq", "spq"],
    "distances": ["adc"],
    "R": [1, 10, 100],
    "t_gt": 50,
    "t_eval_recall": 1,
    "t_eval_map": 50,
    "trainer": "kmeans",
    "iters": 25,
    "epochs": 5,
    "kprime": 256,
    "w": 8,
    "rerank": None,
    "threads": None,
}


def _derive_m(method: str, bits: int, d: int, k: int, L: int):
    """Bits per code determine the subspace count; None means no fit."""
    per = math.ceil(math.log2(k)) * (L if method in ("spq", "ivfspq") else 1)
    if bits % per != 0:
        return None
    m = bits // per
    if m < 1 or d % m != 0:
        return None
    return m


def cmd_bench(args) -> int:
    cfg = _merge(args, _BENCH_DEFAULTS)
    _require(cfg, "out_dir")
    bits_list = _int_list(cfg["bits"])
    methods = _str_list(cfg["methods"])
    distances = _str_list(cfg["distances"])
    R_list = sorted(_int_list(cfg["R"]))
    known = {"pq", "spq", "ivfspq", "ivfpq-style"}
    for m_name in methods:
        if m_name not in known:
            raise ValueError(f"unknown method {m_name!r}")
    for d_name in distances:
        if d_name not in ("adc", "sdc"):
            raise ValueError(f"unknown distance {d_name!r}")
    t_gt = int(cfg["t_gt"])
    t_recall = int(cfg["t_eval_recall"])
    t_map = int(cfg["t_eval_map"])
    if t_gt < max(t_recall, t_map):
        raise ValueError("t_gt must cover both t_eval settings")
    seed = int(cfg["seed"])
    k, L, d = int(cfg["k"]), int(cfg["L"]), int(cfg["d"])

    os.makedirs(cfg["out_dir"], exist_ok=True)
    rows = []
    timing_log = {}
    with _thread_limit(cfg["threads"]):
        train = dio.gen_gaussian(int(cfg["n_train"]), d, seed)
        gallery = dio.gen_gaussian(int(cfg["n_gallery"]), d, seed + 1)
        queries = dio.gen_gaussian(int(cfg["n_queries"]), d, seed + 2)
        gt = dio.exact_knn(gallery, queries, t_gt)
        p = min(max(R_list), gallery.shape[0])

        for method in methods:
            L_eff = 1 if method == "ivfpq-style" else L
            for bits in bits_list:
                m = _derive_m(method, bits, d, k, L_eff)
                if m is None:
                    print(f"skip {method} at {bits} bits: no integer subspace split")
                    continue
                tag = f"{method} {bits}b m={m}"
                base = {
                    "method": method,
                    "bits_index": bits,
                    "m": m,
                    "k": k,
                    "L": L_eff if method != "pq" else 0,
                    "coeff_bytes": 0 if method == "pq" else spqm.spq_coeff_bytes(m, L_eff),
                }
                tlog = timing_log.setdefault(f"{method}_{bits}", {})

                t0 = time.perf_counter()
                if method == "pq":
                    pqc = pqm.train_pq_codebook(train, m, k, iters=int(cfg["iters"]), seed=seed + 10)
                    tlog["train_s"] = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    codes = pqm.pq_encode(gallery, pqc)
                    tlog["encode_s"] = time.perf_counter() - t0
                    dist_val = pqm.pq_mean_distortion(gallery, pqc, codes)
                    rows.append(dict(base, distance="", metric="distortion", value=dist_val))
                    print(f"[{tag}] distortion={dist_val:.4f}")
                    pair_tables = pqm.sdc_tables(pqc) if "sdc" in distances else None
                    searchers = {
                        dn: (lambda q, dn=dn: (
                            pqm.pq_adc_search(codes, q, pqc, p)
                            if dn == "adc"
                            else pqm.pq_sdc_search(codes, q, pqc, p, tables=pair_tables)
                        ))
                        for dn in distances
                    }
                elif method == "spq":
                    pcb = train_product_codebook(
                        train,
                        m,
                        k,
                        method=cfg["trainer"],
                        L=L_eff,
                        iters=int(cfg["iters"]),
                        epochs=int(cfg["epochs"]),
                        seed=seed + 10,
                    )
                    tlog["train_s"] = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    index = spqm.build(gallery, pcb, L_eff)
                    tlog["encode_s"] = time.perf_counter() - t0
                    dist_val = spqm.mean_distortion(gallery, pcb, L_eff)
                    rows.append(dict(base, distance="", metric="distortion", value=dist_val))
                    print(f"[{tag}] distortion={dist_val:.4f}")
                    searchers = {
                        dn: (lambda q, dn=dn: (
                            spqm.adc_search(index, q, p)
                            if dn == "adc"
                            else spqm.sdc_search(index, q, p)
                        ))
                        for dn in distances
                    }
                else:
                    index = ivfm.build_ivf(
                        gallery, int(cfg["kprime"]), m, k, L_eff, seed + 20,
                        coarse_iters=int(cfg["iters"]),
                    )
                    tlog["build_s"] = time.perf_counter() - t0
                    rerank = int(cfg["rerank"]) if cfg["rerank"] is not None else None
                    searchers = {
                        "adc": lambda q: ivfm.ivf_search(
                            index,
                            q,
                            int(cfg["w"]),
                            p,
                            rerank=rerank,
                            gallery=gallery if rerank is not None else None,
                        )
                    }

                for dn, searcher in searchers.items():
                    t0 = time.perf_counter()
                    run = np.full((queries.shape[0], p), -1, dtype=np.int64)
                    for qi in range(queries.shape[0]):
                        ids, _ = searcher(queries[qi])
                        run[qi, : ids.shape[0]] = ids
                    elapsed = time.perf_counter() - t0
                    tlog[f"search_{dn}_s"] = elapsed
                    tlog[f"search_{dn}_ms_per_query"] = 1000.0 * elapsed / queries.shape[0]
                    parts = []
                    for R in R_list:
                        val = mx.recall_at_r(run, gt, R, t_recall)
                        rows.append(dict(base, distance=dn, metric=f"recall@{R}", value=val))
                        parts.append(f"recall@{R}={val:.3f}")
                    val = mx.mean_average_precision(run, gt, t_map)
                    rows.append(dict(base, distance=dn, metric="map", value=val))
                    parts.append(f"map={val:.3f}")
                    print(f"[{tag} {dn}] " + " ".join(parts))

    csv_path = os.path.join(cfg["out_dir"], "bench_metrics.csv")
    mx.write_metrics_csv(
        csv_path,
        rows,
        metadata={
            "n_train": cfg["n_train"],
            "n_gallery": cfg["n_gallery"],
            "n_queries": cfg["n_queries"],
            "d": d,
            "seed": seed,
            "k": k,
            "t_gt": t_gt,
            "t_eval_recall": t_recall,
            "t_eval_map": t_map,
            "map_depth": p,
            "trainer": cfg["trainer"],
        },
    )
    print(f"wrote {len(rows)} metric rows to {csv_path}")
    from .report import render_bench_figures

    for path in render_bench_figures(rows, cfg["out_dir"]):
        print(f"wrote figure {path}")
    timings_path = os.path.join(cfg["out_dir"], "bench_timings.json")
    with open(timings_path, "w") as fh:
        json.dump(timing_log, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote stage timings to {timings_path}")
    return 0


# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="JSON file of settings (keys = option names)")
    sp.add_argument("--dump-config", help="write the merged settings to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsepq",
        description="Sparse product quantization: train, encode, search, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-data", help="write synthetic Gaussian vectors")
    _add_common(sp)
    sp.add_argument("--out")
    sp.add_argument("--n", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("groundtruth", help="exact nearest neighbors by brute force")
    _add_common(sp)
    sp.add_argument("--gallery")
    sp.add_argument("--queries")
    sp.add_argument("--t", type=int)
    sp.add_argument("--out")
    sp.add_argument("--dists-out", dest="dists_out")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_groundtruth)

    sp = sub.add_parser("train", help="train a codebook file")
    _add_common(sp)
    sp.add_argument("--train")
    sp.add_argument("--out")
    sp.add_argument("--kind", choices=["spq", "pq"])
    sp.add_argument("--method", choices=["kmeans", "odl"])
    sp.add_argument("--m", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--subspace-dims", dest="subspace_dims")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("encode", help="encode a gallery against a codebook")
    _add_common(sp)
    sp.add_argument("--gallery")
    sp.add_argument("--codebook")
    sp.add_argument("--method", choices=["pq", "spq", "ivfspq", "ivfpq-style"])
    sp.add_argument("--L", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--kprime", type=int)
    sp.add_argument("--coarse-iters", dest="coarse_iters", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("search", help="query an index file")
    _add_common(sp)
    sp.add_argument("--index")
    sp.add_argument("--queries")
    sp.add_argument("--codebook", help="needed when the index file holds bare codes")
    sp.add_argument("--distance", choices=["adc", "sdc"])
    sp.add_argument("--p", type=int)
    sp.add_argument("--w", type=int)
    sp.add_argument("--rerank", type=int)
    sp.add_argument("--gallery", help="original vectors, needed for --rerank")
    sp.add_argument("--out")
    sp.add_argument("--scores-out", dest="scores_out")
    sp.add_argument("--timings-out", dest="timings_out")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("eval", help="score a result file against ground truth")
    _add_common(sp)
    sp.add_argument("--results")
    sp.add_argument("--gt")
    sp.add_argument("--out")
    sp.add_argument("--R")
    sp.add_argument("--t-eval", dest="t_eval", type=int)
    sp.add_argument("--method")
    sp.add_argument("--distance")
    sp.add_argument("--m", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--bits-index", dest="bits_index", type=int)
    sp.add_argument("--coeff-bytes", dest="coeff_bytes", type=int)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="synthetic end-to-end sweep with figures")
    _add_common(sp)
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--n-train", dest="n_train", type=int)
    sp.add_argument("--n-gallery", dest="n_gallery", type=int)
    sp.add_argument("--n-queries", dest="n_queries", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--bits")
    sp.add_argument("--methods")
    sp.add_argument("--distances")
    sp.add_argument("--R")
    sp.add_argument("--t-gt", dest="t_gt", type=int)
    sp.add_argument("--t-eval-recall", dest="t_eval_recall", type=int)
    sp.add_argument("--t-eval-map", dest="t_eval_map", type=int)
    sp.add_argument("--trainer", choices=["kmeans", "odl"])
    sp.add_argument("--iters", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--kprime", type=int)
    sp.add_argument("--w", type=int)
    sp.add_argument("--rerank", type=int)
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
