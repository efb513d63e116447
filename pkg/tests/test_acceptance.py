"""Acceptance criteria, one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v`` (add -s to see the
verdict lines of passing criteria too).
"""
import time

import numpy as np
import pytest

import gridlstm as gl
from gridlstm.core import rollout
from gridlstm.grid import GridConfig, GridModel, ModelConfig, head_forward, model_to_bytes
from gridlstm.kernels import make_rng
from gridlstm.metrics import auc_score
from gridlstm.train import analytic_grads, finite_difference_grads, relative_error


def verdict(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


class TestGradientCorrectness:
    def test_full_network_gradients_match_finite_differences(self):
        # 12 fixed combinations + 8 random fills = 20 configs
        t0 = time.perf_counter()
        rng = make_rng(20240)
        combos = [(grid, direction, aggregation)
                  for grid in ((1, 1), (2, 2), (3, 4))
                  for direction in ("unidirectional", "bidirectional")
                  for aggregation in ("full-hidden", "last-unit-only")]
        while len(combos) < 20:
            combos.append((
                (int(rng.integers(1, 4)), int(rng.integers(1, 5))),
                ("unidirectional", "bidirectional")[int(rng.integers(0, 2))],
                ("full-hidden", "last-unit-only")[int(rng.integers(0, 2))],
            ))
        worst = 0.0
        for (rows, cols), direction, aggregation in combos:
            hidden = int(rng.integers(2, 5))
            cfg = GridConfig(rows=rows, cols=cols,
                             input_dim=int(rng.integers(1, 3)), hidden_dim=hidden,
                             neighbor_outputs=int(rng.integers(1, hidden + 1)),
                             direction=direction, aggregation=aggregation)
            model = GridModel.random(cfg, ff_dim=int(rng.integers(2, 6)),
                                     classes=int(rng.integers(2, 4)), rng=rng)
            steps = int(rng.integers(2, 6))
            values = rng.normal(size=(rows, cols, steps, cfg.input_dim))
            y = np.zeros(model.classes)
            y[int(rng.integers(0, model.classes))] = 1.0
            ana = analytic_grads(model, values, y)
            num = finite_difference_grads(model, values, y, eps=1e-6)
            worst = max(worst, max(relative_error(ana[k], num[k]) for k in ana))
        elapsed = time.perf_counter() - t0
        verdict("gradient-correctness",
                worst < 1e-5 and elapsed < 120.0,
                f"20 configs, worst relative error {worst:.2e} (tol 1e-5), "
                f"{elapsed:.1f}s (limit 120s)")


class TestWeightSharing:
    def test_cell_census_constant_across_grid_sizes(self):
        counts = []
        for rows, cols in ((1, 1), (2, 2), (4, 5), (5, 8)):
            cfg = GridConfig(rows=rows, cols=cols, input_dim=1, hidden_dim=5)
            model = GridModel.random(cfg, ff_dim=100, classes=5, rng=make_rng(1))
            counts.append(gl.count_params(model).cell_params)
        verdict("weight-sharing-invariant",
                len(set(counts)) == 1,
                f"cell params across 1x1/2x2/4x5/5x8 grids: {counts}")


class TestReductionOracle:
    def test_one_by_one_grid_equals_standalone_lstm(self):
        rng = make_rng(3001)
        all_equal = True
        for _ in range(100):
            g = int(rng.integers(1, 6))
            m = int(rng.integers(1, 4))
            steps = int(rng.integers(1, 9))
            aggregation = ("full-hidden", "last-unit-only")[int(rng.integers(0, 2))]
            cfg = GridConfig(rows=1, cols=1, input_dim=m, hidden_dim=g,
                             neighbor_outputs=int(rng.integers(1, g + 1)),
                             aggregation=aggregation)
            model = GridModel.random(cfg, ff_dim=int(rng.integers(2, 6)),
                                     classes=int(rng.integers(2, 5)), rng=rng)
            values = rng.normal(size=(1, 1, steps, m))
            y_grid, _ = gl.forward(model, values)
            state, _ = rollout(model.cores[0], values[0, 0])
            aggregated = state.h if aggregation == "full-hidden" else state.h[-1:]
            _, y_plain = head_forward(model.head, aggregated)
            all_equal &= bool(np.array_equal(y_grid, y_plain))
        verdict("reduction-oracle", all_equal,
                "1x1-grid output bit-identical to standalone LSTM + head "
                "on 100 random sequences")


class TestLocality:
    def test_perturbation_respects_manhattan_distance(self):
        rng = make_rng(4001)
        trials, hits, exact_outside = 60, 0, True
        for _ in range(trials):
            cfg = GridConfig(rows=4, cols=5, input_dim=1,
                             hidden_dim=int(rng.integers(2, 6)))
            model = GridModel.random(cfg, ff_dim=3, classes=2, rng=rng)
            values = rng.normal(size=(4, 5, 9, 1))
            src = (int(rng.integers(0, 4)), int(rng.integers(0, 5)))
            dst = (int(rng.integers(0, 4)), int(rng.integers(0, 5)))
            distance = abs(src[0] - dst[0]) + abs(src[1] - dst[1])
            first = gl.receptive_field_probe(model, values, src, dst,
                                             delta=0.5, threshold=0.0)
            # threshold 0.0: any nonzero difference counts, so first >= distance
            # asserts the exact-zero property for all t < distance
            if first is not None and first < distance:
                exact_outside = False
            if first == distance:
                hits += 1
        rate = hits / trials
        verdict("locality",
                exact_outside and rate >= 0.95,
                f"zero change before Manhattan distance (exact), change at "
                f"distance in {rate:.0%} of {trials} trials (need >=95%)")


class TestEfficiencyClaim:
    def test_recurrent_param_ratio_vs_monolithic(self, capsys):
        import pathlib
        from gridlstm.cli import main
        cfg = pathlib.Path(__file__).resolve().parent.parent / "configs" / "machine_5x8.cfg"
        rc = main(["params", "--config", str(cfg), "--compare-units", "256"])
        out = capsys.readouterr().out
        assert rc == 0
        table = dict(line.split("\t") for line in out.strip().splitlines()[1:])
        cell = int(table["cell_params_exact"])
        mono = int(table["monolithic_recurrent_exact[256]"])
        printed_estimates = ("cellular_estimate" in table
                             and "monolithic_estimate[256]" in table)
        verdict("efficiency-claim",
                mono >= 100 * cell and printed_estimates,
                f"monolithic 256-unit recurrent params {mono} vs shared-cell {cell} "
                f"({mono / cell:.0f}x, need >=100x); formula values printed")


class TestLearning:
    def test_five_fold_cv_on_default_synthetic(self):
        t0 = time.perf_counter()
        dataset = gl.synth_dataset(4, 5, 64, 4, 100, seed=42)
        model_cfg = ModelConfig(
            grid=GridConfig(rows=4, cols=5, input_dim=1, hidden_dim=5,
                            direction="unidirectional", aggregation="full-hidden"),
            ff_dim=100, classes=4)
        cfg = gl.TrainConfig(learning_rate=0.5, epochs=120, batch_size=10,
                             seed=7, folds=5)
        results, summary = gl.kfold(model_cfg, dataset, cfg)
        elapsed = time.perf_counter() - t0
        mean, std = summary["overall_accuracy"]
        folds = " ".join(f"{r.metrics['overall_accuracy']:.3f}" for r in results)
        verdict("learning",
                mean >= 0.90 and elapsed < 600.0,
                f"5-fold CV mean accuracy {mean:.3f} ± {std:.3f} (need >=0.90, "
                f"chance 0.25), folds [{folds}], {elapsed:.0f}s (limit 600s)")


class TestMetricOracles:
    def test_metrics_match_recount_and_auc_matches_pairwise(self):
        rng = make_rng(6001)
        metrics_ok = True
        for _ in range(50):
            classes = int(rng.integers(2, 6))
            n = int(rng.integers(5, 80))
            labels = rng.integers(0, classes, size=n)
            preds = rng.integers(0, classes, size=n)
            counts = gl.ConfusionCounts.from_pairs(labels, preds, classes)
            for c in range(classes):
                tp = int(np.sum((labels == c) & (preds == c)))
                fp = int(np.sum((labels != c) & (preds == c)))
                fn = int(np.sum((labels == c) & (preds != c)))
                tn = n - tp - fp - fn
                if (counts.tp[c], counts.fp[c], counts.tn[c], counts.fn[c]) != (tp, fp, tn, fn):
                    metrics_ok = False
        worst_auc = 0.0
        checked = 0
        while checked < 100:
            n = int(rng.integers(4, 40))
            scores = np.round(rng.uniform(size=n), 2)
            positives = rng.uniform(size=n) < 0.5
            if positives.all() or not positives.any():
                continue
            checked += 1
            pos = np.flatnonzero(positives)
            neg = np.flatnonzero(~positives)
            wins = sum(1.0 if scores[i] > scores[j] else (0.5 if scores[i] == scores[j] else 0.0)
                       for i in pos for j in neg)
            pairwise = wins / (len(pos) * len(neg))
            worst_auc = max(worst_auc, abs(auc_score(scores, positives) - pairwise))
        verdict("metric-oracles",
                metrics_ok and worst_auc <= 1e-12,
                f"confusion recount exact on 50 tables; AUC vs O(n^2) pairwise "
                f"oracle max diff {worst_auc:.1e} over 100 score sets (tol 1e-12)")


class TestDecimationArithmetic:
    def test_fault_scale_decimation(self):
        out = gl.decimate(np.zeros(8196), 20)
        verdict("decimation-arithmetic",
                out.shape[-1] == 410,
                f"8196 samples at factor 20 -> {out.shape[-1]} (need exactly 410)")


class TestTrainDeterminism:
    def test_cli_train_bit_identical(self, tmp_path, capsys):
        from gridlstm.cli import main
        data_dir = tmp_path / "data"
        main(["synth", "--grid", "3x3", "--time", "16", "--classes", "2",
              "--per-class", "8", "--seed", "5", "--out", str(data_dir)])
        (tmp_path / "model.cfg").write_text(
            "grid 3x3\nhidden 3\nff-neurons 8\nclasses 2\n")
        blobs = []
        for name in ("one", "two"):
            out = tmp_path / name
            rc = main(["train", "--config", str(tmp_path / "model.cfg"),
                       "--data", str(data_dir), "--out", str(out),
                       "--epochs", "4", "--lr", "0.5", "--batch", "4", "--seed", "9"])
            assert rc == 0
            blobs.append((out / "model.bin").read_bytes())
        capsys.readouterr()
        verdict("train-determinism",
                blobs[0] == blobs[1] and len(blobs[0]) > 0,
                f"two identical-flag train runs wrote bit-identical "
                f"{len(blobs[0])}-byte model files")
