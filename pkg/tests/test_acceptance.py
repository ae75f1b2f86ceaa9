"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (shown in the pytest terminal
summary) before asserting.  Run directly with ``python3 tests/test_acceptance.py``
for the lines alone.
"""

import io
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, small_records
from iirc import harness, metrics, nn
from iirc.data import RawDataset, SynthSpec, generate_synthetic
from iirc.hierarchy import Hierarchy, build_hierarchy
from iirc.learners import Learner, LearnerConfig, LearnerState, ReplayBuffer, agem_project, lucir_terms, make_targets
from iirc.rng import Xoshiro256
from iirc.stream import (
    AssignmentRule,
    CompleteView,
    SplitSpec,
    build_labeled_store,
    build_streams,
    configuration_problems,
    generate_task_configuration,
)
from oracles import central_diff, max_rel_err, set_scores

BEHAVIOR_SEEDS = (0, 1, 2, 3, 4)


def report(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _cifar_streams():
    h = Hierarchy.bundled()
    tr = generate_synthetic(SynthSpec(h, samples_per_subclass=500))
    te = generate_synthetic(SynthSpec(h, samples_per_subclass=100, pool=1, id_offset=len(tr)))
    return build_streams(tr, te, SplitSpec(0.1, 0.1), AssignmentRule(0.8, 0.4, 8), 0)


def test_01_split_counts():
    t0 = time.perf_counter()
    out = io.StringIO()
    code = harness.cmd_split(harness.ExperimentConfig(), verify=True, stream=out)
    elapsed = time.perf_counter() - t0
    rows = {r.split(",")[0]: r.split(",")[1:] for r in out.getvalue().splitlines()[1:]}
    got = (rows["train"], rows["in_task_val"])
    ok = got == (["46160", "40000"], ["5770", "5000"]) and code == 0 and elapsed < 10
    report(1, "split-count oracle", ok,
           f"train {'/'.join(got[0])}, in-task val {'/'.join(got[1])} (want 46160/40000, 5770/5000), {elapsed:.2f}s")
    assert ok


def test_02_per_class_sizes():
    s = _cifar_streams()
    got = {c: s.train.class_size(c) for c in ("bus", "vehicles", "mushroom")}
    ok = got == {"bus": 320, "vehicles": 1280, "mushroom": 400}
    report(2, "per-class size oracle", ok, f"{got} (want bus 320, vehicles 1280, mushroom 400)")
    assert ok


def test_03_cap_rule():
    h = build_hierarchy([(f"child{i}", "wide") for i in range(10)])
    labels = np.repeat(np.asarray(h.leaves), 400)
    raw = RawDataset(h, np.arange(len(labels)), np.zeros((len(labels), 2)), labels)
    size = build_labeled_store(raw, AssignmentRule(), 0).class_size("wide")
    ok = size == 1280
    report(3, "cap rule", ok, f"superclass with 10 x 400 children gets {size} (want 1280)")
    assert ok


def test_04_metric_oracle():
    rng = Xoshiro256(2024)
    worst, order_ok = 0.0, True
    for _ in range(10_000):
        n = int(rng.random(1)[0] * 8) + 1
        c = int(rng.random(1)[0] * 6) + 1
        u = rng.random(2 * n * c).reshape(2, n, c)
        truth, pred = u[0] < 0.4, u[1] < 0.4
        truth[np.arange(n), (rng.random(n) * c).astype(int)] = True
        s = metrics.scores(truth, pred)
        pairs = [(set(np.flatnonzero(t)), set(np.flatnonzero(p))) for t, p in zip(truth, pred)]
        mr, js, pw = set_scores(pairs)
        worst = max(worst, abs(s["MR"] - mr), abs(s["JS"] - js), abs(s["pwJS"] - pw))
        order_ok &= s["MR"] <= s["pwJS"] <= s["JS"]
    ok = worst <= 1e-12 and order_ok
    report(4, "metric oracle", ok, f"max |diff| {worst:.1e} over 10000 batches (tol 1e-12), MR<=pwJS<=JS {order_ok}")
    assert ok


def test_05_confusion_fractions():
    s = _cifar_streams()
    h = s.hierarchy
    cfg = generate_task_configuration(h, 10, 5, 0)
    x, truth, _ = CompleteView(s.test, cfg, len(cfg) - 1).arrays()
    norm = metrics.confusion(truth, truth).normalized()
    worst = max(abs(norm[sup, ch] - 1 / len(h.children(sup))) for sup in h.superclasses for ch in h.children(sup))
    whale = norm[h.index("aquatic mammals"), h.index("whale")]
    truck = norm[h.index("vehicles"), h.index("pickup truck")]
    ok = worst <= 1e-9
    report(5, "confusion fractions", ok,
           f"aquatic mammals->whale {whale:.3f}, vehicles->pickup truck {truck:.3f}, max dev {worst:.1e} (tol 1e-9)")
    assert ok


def _grad_error(head, seed, mode):
    rng = np.random.default_rng(seed)
    p = nn.expand_head(nn.init_params(4, (6,), head, seed), range(5), seed)
    for k in p.keys():
        p.arrays[k] = p.arrays[k] + 0.1 * rng.normal(size=p.arrays[k].shape)
    assert p.size() <= 200
    x = rng.normal(size=(7, 4))
    lab = rng.random((7, 5)) < 0.4
    snap = nn.expand_head(nn.init_params(4, (6,), head, seed + 1), range(3), seed + 1)
    algo = {"bce": "er", "distill": "icarl_cnn" if head == nn.STANDARD else "icarl_norm", "lucir": "lucir"}[mode]
    cfg = LearnerConfig(algo)
    state = LearnerState(p, ReplayBuffer(), snapshot=snap)
    from_buffer = np.arange(7) >= 4
    f_old = nn.features(snap, x)

    def lg(q):
        state.params = q
        tr = nn.forward(q, x)
        t = make_targets(algo, lab, state, np.array([3, 4]), x) if mode == "distill" else lab.astype(float)
        loss, d = nn.bce_loss(tr.scores, t, 5)
        d_feat = d_cos = None
        if mode == "lucir":
            extra, d_feat, d_cos = lucir_terms(tr, f_old, lab, from_buffer, np.array([3, 4]), 3, cfg)
            loss += extra
        return loss, nn.backward(q, tr, d, d_feat, d_cos)

    _, g = lg(p)
    analytic = np.concatenate([g[k].ravel() for k in p.keys()])

    def f(v):
        q = p.copy()
        q.set_flat(np.asarray(v))
        return lg(q)[0]

    return max_rel_err(analytic.tolist(), central_diff(f, p.flat().tolist(), h=1e-5), floor=1e-6)


def test_06_gradient_checks():
    combos = [(nn.STANDARD, "bce"), (nn.COSINE, "bce"), (nn.STANDARD, "distill"),
              (nn.COSINE, "distill"), (nn.COSINE, "lucir")]
    worst = {f"{h}/{m}": max(_grad_error(h, s, m) for s in range(10)) for h, m in combos}
    ok = max(worst.values()) < 1e-4
    report(6, "gradient checks", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (max rel err < 1e-4)")
    assert ok


def test_07_agem_projection():
    rng = Xoshiro256(7)
    worst = np.inf
    for _ in range(1000):
        d = int(rng.random(1)[0] * 50) + 2
        g, r = rng.normal(d, 3.0), rng.normal(d, 3.0)
        worst = min(worst, float(agem_project(g, r) @ r))
    example = agem_project(np.array([1.0, 0.0]), np.array([-1.0, 1.0])).tolist()
    ok = worst >= -1e-9 and example == [0.5, 0.5]
    report(7, "A-GEM projection", ok, f"min <applied, g_ref> {worst:.2e} (>= -1e-9), example -> {example}")
    assert ok


def _behavior_run(algo, seed, streams):
    h = streams.hierarchy
    cfg = generate_task_configuration(h, 4, 10, seed)
    learner = Learner(LearnerConfig(algo, hidden=(32,)), h, 16, seed)
    m = metrics.EvalMatrix(len(cfg))
    t0 = time.perf_counter()
    for t in range(len(cfg)):
        learner.train_task(t, streams.train, streams.in_task_val, cfg)
        learner.evaluate(streams.test, cfg, t, m)
    return m, time.perf_counter() - t0


@pytest.fixture(scope="module")
def behavior():
    h = build_hierarchy(small_records())
    tr = generate_synthetic(SynthSpec(h))
    te = generate_synthetic(SynthSpec(h, samples_per_subclass=100, pool=1, id_offset=len(tr)))
    streams = build_streams(tr, te, SplitSpec(), AssignmentRule(), 0)
    runs = {(a, s): _behavior_run(a, s, streams)
            for a in ("finetune", "incremental_joint", "er_infinite") for s in BEHAVIOR_SEEDS}
    runs["hierarchy"] = h
    return runs


def _current_task_only_score(h, seed):
    # pw-JS on task-0 data of a model that predicts exactly the final task's
    # classes: a sample scores 1/2 iff its subclass is in the final task
    cfg = generate_task_configuration(h, 4, 10, seed)
    final = set(cfg.tasks[-1])
    kids = [c for s in cfg.tasks[0] for c in h.children(s)]
    return 0.5 * sum(c in final for c in kids) / len(kids)


def _runs(behavior):
    return [(k, v) for k, v in behavior.items() if k != "hierarchy"]


def test_08a_finetune_forgets_joint_retains(behavior):
    rows = []
    ok = True
    for s in BEHAVIOR_SEEDS:
        ft, _ = behavior[("finetune", s)]
        ij, _ = behavior[("incremental_joint", s)]
        f0, j0 = ft.R[-1, 0], ij.R[-1, 0]
        ok &= f0 < 0.2 and j0 > 0.6
        floor = _current_task_only_score(behavior["hierarchy"], s)
        rows.append(f"seed {s}: finetune {f0:.3f} (ideal current-task-only model {floor:.3f}) joint {j0:.3f}")
    slow = max(t for k, (_, t) in _runs(behavior))
    ok &= slow < 60
    report("8a", "finetune R_final,0 < 0.2, incremental-joint > 0.6", ok,
           "; ".join(rows) + f"; slowest run {slow:.1f}s")
    assert ok


def test_08b_joint_beats_er_infinite(behavior):
    wins, rows = 0, []
    for s in BEHAVIOR_SEEDS:
        ij = behavior[("incremental_joint", s)][0].avg[-1]
        er = behavior[("er_infinite", s)][0].avg[-1]
        wins += ij > er
        rows.append(f"{ij:.3f}>{er:.3f}" if ij > er else f"{ij:.3f}<={er:.3f}")
    slow = max(t for k, (_, t) in _runs(behavior))
    ok = wins >= 4 and slow < 60
    report("8b", "incremental-joint > ER-infinite", ok, f"{wins}/5 seeds ({', '.join(rows)}), slowest run {slow:.1f}s")
    assert ok


def test_09_determinism(tmp_path):
    trees = []
    for name in ("a", "b"):
        code = harness.main(["run", "--learner", "er", "--seed", "0", "--out", str(tmp_path / name)])
        assert code == 0
        root = tmp_path / name
        trees.append({str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()})
    ok = trees[0] == trees[1] and len(trees[0]) > 0
    report(9, "determinism", ok, f"{len(trees[0])} output files byte-identical across two runs: {ok}")
    assert ok


def test_10_configuration_validity():
    h = Hierarchy.bundled()
    bad = [s for s in range(1000)
           if configuration_problems(h, generate_task_configuration(h, 10, 5, s), 10, 5, superclasses_only=True)]
    ok = not bad
    report(10, "task-configuration validity", ok, f"{1000 - len(bad)}/1000 configurations valid")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-s", "-p", "no:cacheprovider"]))
