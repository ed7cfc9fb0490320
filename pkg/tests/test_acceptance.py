"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``. Criteria 4-6 run
the full benchmark experiments and take a few minutes in total.
"""

import statistics
import time
from pathlib import Path

import numpy as np

from trsearch.baselines import random_search
from trsearch.benchmarks import (
    HARDEST_CORNER,
    opamp_problem,
    opamp_pvt_problem,
    ported_opamp_problem,
)
from trsearch.cli import main
from trsearch.environment import SyntheticOpamp
from trsearch.explorer import resume_from, search
from trsearch.problem import space_size
from trsearch.runner import verify_solution
from trsearch.surrogate import SurrogateModel, TrainBatch, loss, loss_and_gradient, train
from trsearch.trust_region import (
    TrustRegionConfig,
    TrustRegionState,
    focus_values,
    ratio,
    sample_region,
    solve_subproblem,
    update,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# Standalone epoch budget for the surrogate-fit criterion. The explorer itself
# trains 200 epochs per iteration, warm-started from the previous weights.
FIT_EPOCHS = 1000

SATISFIED = []  # (problem, report) from every acceptance run, re-verified by criterion 8
VERDICTS = []  # printed again in the terminal summary by conftest.py


def verdict(n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    print("\n" + line)
    VERDICTS.append(line)
    assert ok, line


def collect(problem, report):
    if report.satisfied:
        SATISFIED.append((problem, report))
    return report


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, checked = 0.0, 0
    for _ in range(120):
        n_in, n_out, m = (int(x) for x in rng.integers(1, 5, size=3))
        hidden = tuple(int(h) for h in rng.integers(1, 7, size=int(rng.integers(0, 3))))
        model = SurrogateModel(n_in, [f"y{i}" for i in range(n_out)], hidden=hidden, seed=rng)
        for b in model.biases:
            b[:] = rng.normal(scale=0.3, size=b.shape)
        batch = TrainBatch(rng.random((m, n_in)), rng.normal(size=(m, n_out)))
        _, grads = loss_and_gradient(model, batch)
        for p, g in zip(model.params(), grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + 1e-5
                up = loss(model, batch)
                p[idx] = old - 1e-5
                down = loss(model, batch)
                p[idx] = old
                fd = (up - down) / 2e-5
                scale = max(abs(fd), abs(g[idx]))
                if scale > 1e-7:
                    worst = max(worst, abs(fd - g[idx]) / scale)
                checked += 1
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-4 and dt < 30,
            f"120 nets, {checked} weights, max relative error {worst:.2e} (<= 1e-4), {dt:.1f} s (< 30 s)")


def test_criterion_2_surrogate_fit():
    def smooth(u):
        return (np.sin(3 * u[:, 0]) + u[:, 1] * u[:, 2]
                + np.exp(-4 * ((u[:, 3] - 0.5) ** 2 + (u[:, 4] - 0.3) ** 2))
                - 0.5 * np.cos(2 * u[:, 5]))

    t0 = time.perf_counter()
    ratios = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        x = rng.random((200, 6))
        model = train(SurrogateModel(6, ["y"], seed=seed), x, smooth(x)[:, None], epochs=FIT_EPOCHS)
        ratios.append(model.last_final_loss / model.last_initial_loss)
    dt = time.perf_counter() - t0
    verdict(2, max(ratios) <= 0.01 and dt < 10,
            f"final/initial MSE {[round(r, 4) for r in ratios]} (<= 0.01) after {FIT_EPOCHS} epochs, {dt:.1f} s (< 10 s)")


def test_criterion_3_trust_region_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    sizes = np.array([15, 100, 8, 40])
    from trsearch.problem import ConstraintSpec

    cons = {"a": [ConstraintSpec("y0", "at_least", 0.5), ConstraintSpec("y1", "at_most", -0.2)],
            "b": [ConstraintSpec("y0", "at_least", 0.8), ConstraintSpec("y1", "at_most", 0.0)]}
    models = {c: SurrogateModel(4, ["y0", "y1"], hidden=(12, 12), seed=k) for k, c in enumerate("ab")}
    failures = []
    steps = 0
    for seq in range(1000):
        cfg = TrustRegionConfig(radius_init=float(rng.uniform(0.05, 0.5)), radius_min=0.01,
                                radius_max=float(rng.uniform(0.5, 1.0)))
        st = TrustRegionState.start(rng.integers(0, sizes) / (sizes - 1), -float(rng.random() * 3), cfg)
        focus = ["a"] if seq % 2 else ["a", "b"]
        for _ in range(15):
            steps += 1
            seed = int(rng.integers(2**32))
            cand, pred = solve_subproblem(st, models, focus, cons, 64, np.random.default_rng(seed), sizes)
            pts = sample_region(st, 64, np.random.default_rng(seed), sizes)
            scores = focus_values(pts, models, focus, cons)
            best = max(range(len(pts)), key=lambda k: (scores[k], -k))
            if cand != tuple(int(i) for i in np.round(pts[best] * (sizes - 1))) or pred != scores[best]:
                failures.append(f"argmax mismatch in sequence {seq}")
            trial = np.array(cand) / (sizes - 1)
            true = pred + float(rng.normal(scale=0.3))
            rho = ratio(st, pred, true)
            before_c, before_v = st.center.tobytes(), np.float64(st.incumbent_value).tobytes()
            ok, new = update(st, rho, trial, true)
            if not cfg.radius_min <= new.radius <= cfg.radius_max:
                failures.append(f"radius {new.radius} out of bounds")
            if ok and new.incumbent_value < st.incumbent_value:
                failures.append("incumbent decreased on accept")
            if not ok and (new.center.tobytes() != before_c
                           or np.float64(new.incumbent_value).tobytes() != before_v):
                failures.append("rejected step changed the state")
            st = new
    dt = time.perf_counter() - t0
    verdict(3, not failures and dt < 30,
            f"1000 sequences, {steps} steps, {len(failures)} violations, {dt:.1f} s (< 30 s)")


def test_criterion_4_single_corner_vs_random():
    t0 = time.perf_counter()
    problem = opamp_problem(budget=10_000)
    env = SyntheticOpamp(problem)
    probe = np.random.default_rng(0).integers(0, 100, size=(200_000, 6))
    from trsearch.value import satisfied

    feasible = sum(satisfied(env.simulate(tuple(s), problem.corners[0]), problem.constraints["tt_nv"])
                   for s in probe) / len(probe)
    tr, rs = [], []
    for seed in range(20):
        tr.append(collect(problem, search(problem, SyntheticOpamp(problem), seed=seed)))
        rs.append(collect(problem, random_search(problem, SyntheticOpamp(problem), seed=seed)))
    tr_mean = statistics.fmean(r.total_evaluations for r in tr)
    rs_mean = statistics.fmean(r.total_evaluations for r in rs)
    tr_ok = all(r.satisfied for r in tr)
    dt = time.perf_counter() - t0
    ok = (space_size(problem) >= 10**12 and 1e-5 <= feasible <= 1e-2 and tr_ok
          and tr_mean <= rs_mean / 5 and dt < 600)
    verdict(4, ok,
            f"space {space_size(problem):.1e}, feasible fraction {feasible:.1e}; trust region "
            f"{sum(r.satisfied for r in tr)}/20 solved, mean {tr_mean:.1f} evals; random "
            f"{sum(r.satisfied for r in rs)}/20 solved, mean {rs_mean:.1f} evals; "
            f"ratio {rs_mean / tr_mean:.1f}x (>= 5x); {dt:.0f} s (< 600 s)")


def test_criterion_5_pvt_strategies():
    t0 = time.perf_counter()
    stats = {}
    for strategy in ("progressive_random", "progressive_hardest", "brute_force"):
        problem = opamp_pvt_problem(strategy=strategy, hardest_corner=HARDEST_CORNER)
        reports = [collect(problem, search(problem, SyntheticOpamp(problem), seed=s)) for s in range(20)]
        stats[strategy] = (
            sum(r.satisfied for r in reports),
            statistics.fmean(r.total_evaluations for r in reports),
        )
    dt = time.perf_counter() - t0
    (nr, mr), (nh, mh), (nb, mb) = (stats[k] for k in ("progressive_random", "progressive_hardest", "brute_force"))
    ok = nr == nh == nb == 20 and mr <= mb / 2 and mh <= mr and dt < 1200
    verdict(5, ok,
            f"9 corners, 20 seeds: random-start {nr}/20 mean {mr:.1f}; hardest-start {nh}/20 mean {mh:.1f}; "
            f"brute force {nb}/20 mean {mb:.1f}; brute/random {mb / mr:.2f}x (>= 2x); {dt:.0f} s (< 1200 s)")


def test_criterion_6_process_porting():
    t0 = time.perf_counter()
    source = opamp_problem()
    target = ported_opamp_problem(scale=0.8)
    cold, point, both = [], [], []
    for seed in range(30):
        origin = collect(source, search(source, SyntheticOpamp(source), seed=seed))
        assert origin.satisfied
        cold.append(collect(target, search(target, SyntheticOpamp(target), seed=seed)))
        point.append(collect(target, search(target, SyntheticOpamp(target), seed=seed,
                                            warm=resume_from(origin, "point_only"))))
        both.append(collect(target, search(target, SyntheticOpamp(target), seed=seed,
                                           warm=resume_from(origin, "weights_and_point"))))
    mean = {k: statistics.fmean(r.total_evaluations for r in v)
            for k, v in (("cold", cold), ("point", point), ("both", both))}
    dt = time.perf_counter() - t0
    ok = mean["point"] < mean["cold"] and all(r.satisfied for r in both) and dt < 600
    verdict(6, ok,
            f"kp x0.8, 30 paired seeds: cold mean {mean['cold']:.1f}, point_only mean {mean['point']:.1f}, "
            f"weights_and_point mean {mean['both']:.1f} with {sum(r.satisfied for r in both)}/30 solved; {dt:.0f} s")


def test_criterion_7_cli_determinism(tmp_path, capsys):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = main(["bench", "--config", str(CONFIGS / "opamp_pvt.toml"), "--repeats", "3", "--seed", "0",
                     "--deterministic", "--out", str(out)])
        assert code == 0
        outs.append(out)
    capsys.readouterr()
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.suffix in (".csv", ".json"))
    same = [f for f in files if (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()]
    csvs = sum(f.suffix == ".csv" for f in files)
    verdict(7, len(same) == len(files) and csvs == 3 and Path("summary.json") in files,
            f"{len(same)}/{len(files)} output files byte-identical ({csvs} trajectory CSVs + summary JSON)")


def test_criterion_8_solution_validity():
    if not SATISFIED:  # running this criterion on its own
        problem = opamp_pvt_problem()
        for seed in range(5):
            collect(problem, search(problem, SyntheticOpamp(problem), seed=seed))
    bad = [r.seed for p, r in SATISFIED if not verify_solution(p, r)]
    verdict(8, not bad, f"{len(SATISFIED)} satisfied reports re-verified on every pool corner, "
                        f"{len(bad)} violations")
