"""Acceptance criteria, one test each.

Every test appends a PASS/FAIL line (with the measured numbers) to the
summary printed at the end of the run, then asserts.
"""

import math
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.stats import binomtest

import oracles
from conftest import ACCEPTANCE_LINES
from cpfloc.camera import batch_reprojection_errors
from cpfloc.cli import main as cli_main
from cpfloc.container import from_bytes, memory_report, read_model, to_bytes, write_model
from cpfloc.evaluation import center_error, rotation_error
from cpfloc.feature_filter import (
    PLATEAU_WEIGHT,
    Matches,
    bilateral_ratio_test,
    find_candidates,
    gaussian_weight,
    score_and_partition,
)
from cpfloc.geometry_pose import bin_shares
from cpfloc.params import PipelineParams
from cpfloc.pipeline import CascadedLocalizer, localize
from cpfloc.scene_model import VisibilityGraph
from cpfloc.solvers import bearings, p3p_batch, p4pf_batch
from cpfloc.synthetic import SyntheticSceneConfig, generate_scene
from cpfloc.visibility_filter import run_visibility_filter, vote_images

pytestmark = pytest.mark.slow

# spatially clustered, ambiguous scene for the ablation comparison: 90% of each
# query's true features and outlier features fall in a window of two grid bins,
# and half the outliers repeat the appearance of points the query also sees
ABLATION_SCENE = dict(
    num_points=20_000,
    num_db_images=150,
    num_queries=100,
    cluster_count=2_000,
    pixel_noise=1.0,
    spatial_clustering=0.9,
    repeated_texture=0.5,
    seed=2,
)


def _record(number, ok, text):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
    assert ok, text


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ---- 1: formulas against brute force -------------------------------------------


def _random_graph_and_candidates(rng, n_points=30, n_images=8, n_feats=25, n_cand=80, tau=19):
    edges = {(int(rng.integers(n_points)), int(rng.integers(n_images))) for _ in range(n_points * 3)}
    edges |= {(p, int(rng.integers(n_images))) for p in range(n_points)}
    p, d = zip(*sorted(edges))
    graph = VisibilityGraph.from_edges(p, d, n_points, n_images)
    keys = sorted({(int(rng.integers(n_feats)), int(rng.integers(n_points))) for _ in range(n_cand)})
    q, pt = zip(*keys)
    h = rng.integers(0, tau + 1, len(keys))
    cand = Matches.new(q, pt, rng.uniform([0, 0], [1000, 800], (len(keys), 2)), h)
    return graph, cand, [(a, b, int(c)) for (a, b), c in zip(keys, h)]


def test_formula_oracles():
    rng = np.random.default_rng(101)
    params = PipelineParams(top_images=3, pool_images=5)
    sigma, tau, phi, alpha = params.sigma, params.hamming_threshold, params.image_ratio_threshold, params.score_threshold
    start = time.perf_counter()
    worst = dict.fromkeys(["ratio", "weight", "score", "vote", "promotion", "bin share"], 0.0)
    counts = dict.fromkeys(worst, 0)

    for _ in range(1000):
        h = int(rng.integers(0, tau + 1))
        side_a = [h] + rng.integers(0, tau + 1, int(rng.integers(0, 6))).tolist()
        side_b = [h] + rng.integers(0, tau + 1, int(rng.integers(0, 6))).tolist()
        got = bilateral_ratio_test(h, side_a, side_b, phi)
        ref = oracles.ratio_test(h, side_a, side_b, phi)
        worst["ratio"] = max(worst["ratio"], *(_rel(g, r) if r else abs(g) for g, r in zip(got, ref)))
        counts["ratio"] += 1

        hw = float(rng.uniform(0, 1.2 * tau))
        worst["weight"] = max(worst["weight"], _rel(gaussian_weight(hw, sigma, tau), oracles.weight(hw, sigma, tau)) if hw <= tau else abs(gaussian_weight(hw, sigma, tau)))
        counts["weight"] += 1

        c = rng.integers(0, 50, 16)
        c[0] = max(c[0], 1)
        worst["bin share"] = max(worst["bin share"], max(_rel(a, b) if b else abs(a) for a, b in zip(bin_shares(c), oracles.bin_shares(c.tolist()))))
        counts["bin share"] += 1

    for _ in range(1000):
        graph, cand, plain = _random_graph_and_candidates(rng)
        pool, fc = score_and_partition(cand, params)
        ref = oracles.scores(plain, phi, sigma, tau)
        for q, p, e in zip(pool.query_id, pool.point_id, pool.score):
            worst["score"] = max(worst["score"], _rel(e, ref[(int(q), int(p))][3]))
        assert pool.keys() == {k for k, v in ref.items() if v[3] > 0}
        counts["score"] += 1

        observers = {p: set(graph.images_of_point(p).tolist()) for p in range(graph.n_points)}
        fc_rows = [(int(q), int(p), float(e)) for q, p, e in zip(fc.query_id, fc.point_id, fc.score)]
        ranking = vote_images(fc, graph)
        ref_rank = oracles.vote(fc_rows, observers, graph.image_sizes().tolist())
        assert [v.image_id for v in ranking] == [r[0] for r in ref_rank]
        for v, r in zip(ranking, ref_rank):
            worst["vote"] = max(worst["vote"], _rel(v.score, r[1]))
            assert v.vote_count == r[2]
        counts["vote"] += 1
        if not ranking:
            continue
        res = run_visibility_filter(pool, fc, graph, params)
        m = res.matches
        members = [((int(q), int(p)), float(e)) for q, p, e, vc in zip(m.query_id, m.point_id, m.score, m.vc) if vc]
        expect = oracles.promote(members, {v.image_id for v in ranking[: params.top_images]}, observers, alpha)
        for q, p, e2, vc in zip(m.query_id, m.point_id, m.promoted, m.vc):
            if vc:
                worst["promotion"] = max(worst["promotion"], _rel(e2, expect[(int(q), int(p))]))
        counts["promotion"] += 1

    elapsed = time.perf_counter() - start
    ok = all(v <= 1e-12 for v in worst.values()) and elapsed < 10 and min(counts.values()) >= 1000
    detail = ", ".join(f"{k} {counts[k]} cases max rel {worst[k]:.1e}" for k in worst)
    _record(1, ok, f"formula oracles ({detail}) in {elapsed:.2f} s (< 10 s, tol 1e-12)")


# ---- 2: weighting function ------------------------------------------------------


def test_weighting_function():
    sigma, tau = 16.0, 19
    exact = gaussian_weight(0.5 * sigma, sigma, tau) == 4 * math.exp(-0.25) == PLATEAU_WEIGHT
    grid = np.linspace(1e-6, tau, 20_001)
    w = np.array([gaussian_weight(h, sigma, tau) for h in grid])
    monotone = bool(np.all(np.diff(w) <= 0))
    beyond = all(gaussian_weight(h, sigma, tau) == 0.0 for h in (19.000001, 20, 40, 64))
    _record(2, exact and monotone and beyond,
            f"w(0.5 sigma) == 4e^-0.25 exactly: {exact}; non-increasing on (0, 19] over 20001 points: {monotone}; w(h > 19) = 0: {beyond}")


# ---- 3: set algebra --------------------------------------------------------------


def test_set_algebra():
    rng = np.random.default_rng(202)
    checked = 0
    violations = []
    for trial in range(500):
        k = int(rng.integers(1, 5))
        params = PipelineParams(top_images=k, pool_images=k + int(rng.integers(0, 5)), score_threshold=float(rng.uniform(0.3, 2.0)))
        graph, cand, _ = _random_graph_and_candidates(rng, n_feats=int(rng.integers(5, 40)), n_cand=int(rng.integers(10, 150)))
        pool, fc = score_and_partition(cand, params)
        if fc.keys() - pool.keys():
            violations.append((trial, "M_FC not in M"))
        res = run_visibility_filter(pool, fc, graph, params)
        if not res.ranking:
            continue
        m = res.matches
        vfc_or_inferred = set(zip(m.query_id[m.vfc | m.vfc_i].tolist(), m.point_id[m.vfc | m.vfc_i].tolist()))
        if not vfc_or_inferred <= res.top_k.keys() <= res.pool.keys() <= pool.keys():
            violations.append((trial, "subset chain"))
        if np.any(m.promoted < m.score):
            violations.append((trial, "E' < E"))
        if np.any(m.vfc & m.vfc_i):
            violations.append((trial, "VFC and VFC-I overlap"))
        checked += 1
    _record(3, not violations and checked >= 300,
            f"set relations held on {checked} randomized filter runs; violations: {violations[:3] or 'none'}")


# ---- 4: solvers -------------------------------------------------------------------


def _synthetic_cases(rng, n, k, pp, size):
    R = Rotation.random(n, random_state=rng).as_matrix()
    C = rng.uniform(-5, 5, (n, 3))
    f = rng.uniform(500, 2000, n)
    uv = rng.uniform([0, 0], size, (n, k, 2))
    z = rng.uniform(4, 20, (n, k))
    cam = np.concatenate([(uv - pp) / f[:, None, None] * z[..., None], z[..., None]], axis=-1)
    X = np.einsum("nki,nij->nkj", cam, R) + C[:, None]
    return R, C, f, X, uv


def test_solver_round_trips():
    rng = np.random.default_rng(303)
    pp, size = np.array([512.0, 384.0]), (1024, 768)
    start = time.perf_counter()

    # three points feed the solver; ten more check that the generating pose came back
    R, C, f, X, uv = _synthetic_cases(rng, 1000, 13, pp, size)
    Rs, Cs, valid = p3p_batch(X[:, :3], bearings(uv[:, :3], f[:, None], pp))
    p3p_err = np.full(1000, np.inf)
    for i in range(1000):
        for s in np.flatnonzero(valid[i]):
            e = batch_reprojection_errors(Rs[i, s][None], Cs[i, s][None], f[i : i + 1], pp, X[i], uv[i]).max()
            p3p_err[i] = min(p3p_err[i], e)
    p3p_ok = int((p3p_err <= 1e-6).sum())

    R, C, f, X, uv = _synthetic_cases(rng, 500, 4, pp, size)
    _, _, fs, _ = p4pf_batch(X, uv, pp, n_minima=3)
    rel = np.min(np.abs(fs - f[:, None]) / f[:, None], axis=1)
    p4p_ok = int((rel <= 1e-3).sum())
    elapsed = time.perf_counter() - start

    ok = p3p_ok == 1000 and p4p_ok == 500 and elapsed < 30
    _record(4, ok, f"P3P {p3p_ok}/1000 within 1e-6 px (worst {p3p_err.max():.1e} px); "
                   f"P4P {p4p_ok}/500 focal within 0.1% (worst {rel.max():.1e}); {elapsed:.1f} s (< 30 s)")


# ---- 5: end to end ---------------------------------------------------------------


@pytest.fixture(scope="module")
def default_scene():
    scene = generate_scene(SyntheticSceneConfig())
    return scene, scene.build_model()


def test_end_to_end_localization(default_scene):
    scene, model = default_scene
    params = PipelineParams()
    cfg = scene.config

    wrong = total = 0
    for q, t in zip(scene.queries, scene.truths):
        cand = find_candidates(q.encode(model), model, params.hamming_threshold)
        total += len(cand)
        wrong += int((t.point_ids[cand.query_id] != cand.point_id).sum())
    wrong_share = wrong / total

    est = CascadedLocalizer(random_state=0).fit(model)
    limit = 0.005 * scene.diameter
    good, times, cerr, rerr = 0, [], [], []
    for q, t in zip(scene.queries, scene.truths):
        t0 = time.perf_counter()
        res = est.localize(q)
        times.append(time.perf_counter() - t0)
        if res.localized:
            ce, re = center_error(res.pose, t.pose), rotation_error(res.pose, t.pose)
            cerr.append(ce)
            rerr.append(re)
            good += ce <= limit and re <= 1.0
    frac = good / len(scene.queries)
    ok = (cfg.num_points, cfg.num_db_images, len(scene.queries)) == (50_000, 200, 50) and wrong_share >= 0.4 and frac >= 0.9 and max(times) < 5.0
    _record(5, ok,
            f"{good}/{len(scene.queries)} queries within {limit:.3f} units (0.5% of diameter {scene.diameter:.1f}) and 1 deg; "
            f"wrong candidates {100 * wrong_share:.1f}% (>= 40%); median center error {np.median(cerr):.4f}, "
            f"max rotation error {max(rerr):.4f} deg; per query {np.mean(times):.2f} s mean, {max(times):.2f} s max (< 5 s)")


# ---- 6: ablations -----------------------------------------------------------------


def test_ablation_direction():
    scene = generate_scene(SyntheticSceneConfig(**ABLATION_SCENE))
    model = scene.build_model()
    full = PipelineParams()
    variants = {"full": full, "w/o QSR": full.ablate("qsr"), "w/o PFL": full.ablate("pfl"), "baseline voting": full.ablate("baseline-voting")}
    errors = {k: [] for k in variants}
    for q, t in zip(scene.queries, scene.truths):
        for name, params in variants.items():
            res = localize(q, model, params, seed=q.id)
            errors[name].append(center_error(res.pose, t.pose) if res.localized else math.inf)
    errors = {k: np.array(v) for k, v in errors.items()}
    localized = {k: int(np.isfinite(v).sum()) for k, v in errors.items()}
    medians = {k: float(np.median(v)) for k, v in errors.items()}

    parts, ok = [], True
    for name in ("w/o QSR", "w/o PFL"):
        wins = int((errors["full"] < errors[name]).sum())
        losses = int((errors["full"] > errors[name]).sum())
        p = binomtest(wins, wins + losses, alternative="greater").pvalue if wins + losses else 1.0
        passed = medians["full"] <= medians[name] and p < 0.05
        ok &= passed
        parts.append(f"full vs {name}: median {medians['full']:.4f} vs {medians[name]:.4f}, {wins} better / {losses} worse, sign test p={p:.4f}")
    base_ok = localized["baseline voting"] <= localized["full"]
    ok &= base_ok
    parts.append(f"localized full {localized['full']}, baseline voting {localized['baseline voting']}")
    _record(6, ok, f"{len(scene.queries)} seeded trials; " + "; ".join(parts))


# ---- 7: memory ---------------------------------------------------------------------


def test_memory_claim(default_scene, tmp_path):
    _, model = default_scene
    rep = memory_report(model)
    exact = rep.signature_bytes_per_entry == model.bits // 8 and rep.signature_payload == rep.n_entries * model.bits // 8
    first = tmp_path / "first.cpfl"
    second = tmp_path / "second.cpfl"
    write_model(model, first)
    write_model(read_model(first), second)
    same = first.read_bytes() == second.read_bytes() and to_bytes(from_bytes(first.read_bytes())) == first.read_bytes()
    ok = exact and model.bits == 64 and rep.entry_reduction >= 8 and same
    _record(7, ok, f"{rep.n_entries} entries at {rep.signature_bytes_per_entry} B signature each (B/8 = {model.bits // 8}); "
                   f"entry table {rep.entry_table} B vs baseline {rep.baseline_entry_table} B = {rep.entry_reduction:.2f}x (>= 8x); "
                   f"write/read/write identical: {same}")


# ---- 8: determinism ----------------------------------------------------------------


def test_determinism(tmp_path):
    cfg = tmp_path / "scene.yaml"
    cfg.write_text("num_points: 4000\nnum_db_images: 40\nnum_queries: 6\ncluster_count: 1000\n")
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert cli_main(["synth", "--config", str(cfg), "--words", "64", "--seed", "7", "--output", str(d)]) == 0
    scenes_same = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in ("model.cpfl", "queries.jsonl", "ground_truth.jsonl"))
    outs = []
    for i, threads in enumerate(("1", "2")):
        out = tmp_path / f"results{i}.jsonl"
        argv = ["localize", str(dirs[i] / "model.cpfl"), str(dirs[i] / "queries.jsonl"), "--seed", "5", "--threads", threads, "--output", str(out)]
        assert cli_main(argv) == 0
        outs.append(out.read_bytes())
    same = outs[0] == outs[1]
    _record(8, scenes_same and same,
            f"two synth runs byte-identical: {scenes_same}; two localize runs ({len(outs[0])} B results) byte-identical: {same}")
