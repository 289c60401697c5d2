"""Dataset loading, WRENCH import, and synthetic generation."""

import json

import numpy as np
import pytest

from polar.dataset import (
    ClassSpace,
    Dataset,
    DatasetError,
    Instance,
    SourceLabelMatrix,
    SynthConfig,
    datasets_equal,
    generate_synthetic,
    generate_synthetic_splits,
    import_wrench,
    load_dataset,
    save_dataset,
)


def write_jsonl(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")


HEADER = {"schema": "polar-v1", "k": 2, "d": 2, "m": 2, "labels": ["neg", "pos"]}


def make_rows():
    return [
        {"id": "a", "features": [0.0, 1.0], "gold": 0, "llm": 1, "sources": [0, None]},
        {"id": "b", "features": [1.0, 0.5], "llm": None, "sources": [None, 1]},
        {"id": "c", "features": [0.5, 0.5], "gold": 1, "llm": 0, "sources": [1, 0]},
    ]


class TestLoad:
    def test_three_valid_lines(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, HEADER, make_rows())
        ds = load_dataset(path, "test")
        assert ds.n == 3 and ds.k == 2 and ds.m == 2 and ds.d == 2
        assert [inst.id for inst in ds.instances] == ["a", "b", "c"]
        assert ds.labels.llm_answer(0) == 1
        assert ds.labels.llm_answer(1) is None
        assert ds.labels.source_answer(0, 2) is None

    def test_label_out_of_range_names_line(self, tmp_path):
        rows = make_rows()
        rows[1]["sources"] = [5, None]
        path = tmp_path / "d.jsonl"
        write_jsonl(path, HEADER, rows)
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(path, "test")

    def test_inconsistent_feature_dimension(self, tmp_path):
        rows = make_rows()
        rows[2]["features"] = [0.1, 0.2, 0.3]
        path = tmp_path / "d.jsonl"
        write_jsonl(path, HEADER, rows)
        with pytest.raises(DatasetError, match="dimension"):
            load_dataset(path, "test")

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps(HEADER) + "\n")
            fh.write("{not json\n")
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path, "test")

    def test_train_split_erases_gold(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, HEADER, make_rows())
        ds = load_dataset(path, "train")
        assert not ds.has_gold()
        kept = load_dataset(path, "train", erase_gold=False)
        assert kept.has_gold()

    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, HEADER, make_rows())
        ds = load_dataset(path, "test")
        out = tmp_path / "copy.jsonl"
        save_dataset(ds, out)
        again = load_dataset(out, "test")
        assert datasets_equal(ds, again)

    def test_round_trip_synthetic(self, tmp_path):
        ds = generate_synthetic(SynthConfig(n=50), seed=3, split="dev")
        path = tmp_path / "s.jsonl"
        save_dataset(ds, path)
        again = load_dataset(path, "dev")
        ds.meta = {}
        assert datasets_equal(ds, again)


class TestTypes:
    def test_class_space_invariants(self):
        with pytest.raises(DatasetError):
            ClassSpace(("only",))
        with pytest.raises(DatasetError):
            ClassSpace(("a", "a"))
        with pytest.raises(DatasetError):
            ClassSpace(("a", ""))
        assert ClassSpace.default(3).k == 3

    def test_instance_rejects_non_finite(self):
        with pytest.raises(DatasetError):
            Instance("x", np.array([1.0, np.nan]))

    def test_matrix_row_view(self):
        m = SourceLabelMatrix.from_columns([1, None], [[0, None], [None, 1]])
        row = m.row(0)
        assert row.llm == 1 and row.answers == (1, 0, None)
        assert row.triggered() == (True, True, False)
        assert m.row(1).answers == (None, None, 1)

    def test_matrix_rejects_bad_label(self):
        m = SourceLabelMatrix.from_columns([1], [[3]])
        with pytest.raises(DatasetError, match="out of range"):
            m.validate(2)

    def test_subset_slices_meta(self):
        ds = generate_synthetic(SynthConfig(n=10), seed=0)
        sub = ds.subset([2, 5, 7], "dev")
        assert sub.n == 3 and sub.split == "dev"
        assert sub.meta["true_llm_error_prob"] == [
            ds.meta["true_llm_error_prob"][i] for i in (2, 5, 7)
        ]


class TestWrench:
    def build(self, tmp_path, drop_llm_for=()):
        examples = {
            "e1": {"label": 0, "weak_labels": [-1, 1], "data": {"text": "t1"}},
            "e2": {"label": 1, "weak_labels": [0, -1], "data": {"text": "t2"}},
            "e3": {"label": 1, "weak_labels": [1, 1], "data": {"text": "t3"}},
        }
        (tmp_path / "train.json").write_text(json.dumps(examples))
        with open(tmp_path / "features.jsonl", "w") as fh:
            for i, ex in enumerate(examples):
                fh.write(json.dumps({"id": ex, "features": [float(i), 1.0]}) + "\n")
        with open(tmp_path / "llm_answers.jsonl", "w") as fh:
            for ex in examples:
                if ex not in drop_llm_for:
                    fh.write(json.dumps({"id": ex, "llm": 1}) + "\n")
        return tmp_path

    def test_minus_one_maps_to_absent(self, tmp_path):
        ds = import_wrench(self.build(tmp_path), "train")
        assert ds.labels.source_answer(0, 1) is None
        assert ds.labels.source_answer(0, 2) == 1
        assert ds.labels.source_answer(1, 1) == 0

    def test_missing_llm_record_flagged(self, tmp_path):
        ds = import_wrench(self.build(tmp_path, drop_llm_for=("e2",)), "train")
        # one-pass scan oracle over the rows
        absent = sum(1 for i in range(ds.n) if ds.labels.llm_answer(i) is None)
        assert ds.meta["import_summary"]["llm_missing"] == 1
        assert absent == 1

    def test_missing_sidecar_errors(self, tmp_path):
        root = self.build(tmp_path)
        (root / "llm_answers.jsonl").unlink()
        with pytest.raises(DatasetError, match="sidecar"):
            import_wrench(root, "train")

    def test_unknown_weak_label_value(self, tmp_path):
        root = self.build(tmp_path)
        examples = json.loads((root / "train.json").read_text())
        examples["e1"]["weak_labels"] = [-2, 1]
        (root / "train.json").write_text(json.dumps(examples))
        with pytest.raises(DatasetError, match="weak label"):
            import_wrench(root, "train")

    def test_train_gold_erased(self, tmp_path):
        ds = import_wrench(self.build(tmp_path), "train")
        assert not ds.has_gold()
        ds_test = self.build(tmp_path)
        (ds_test / "test.json").write_text((tmp_path / "train.json").read_text())
        assert import_wrench(ds_test, "test").has_gold()


class TestSynthetic:
    def test_perfect_sources_equal_gold(self):
        cfg = SynthConfig(
            n=200, m=2, source_accuracy=(1.0, 1.0), source_coverage=(1.0, 1.0)
        )
        ds = generate_synthetic(cfg, seed=0)
        gold = ds.gold_array()
        for j in (1, 2):
            col = ds.labels.answers[:, j]
            assert np.all(col == gold)

    def test_determinism_byte_identical(self, tmp_path):
        cfg = SynthConfig(n=100)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(generate_synthetic(cfg, seed=9), a)
        save_dataset(generate_synthetic(cfg, seed=9), b)
        assert a.read_bytes() == b.read_bytes()

    def test_source_accuracy_converges(self):
        acc = (0.85, 0.75, 0.7)
        cov = (0.9, 0.6, 0.5)
        cfg = SynthConfig(n=10000, m=3, source_accuracy=acc, source_coverage=cov)
        ds = generate_synthetic(cfg, seed=1)
        gold = ds.gold_array()
        for j, a in enumerate(acc, start=1):
            mask = ds.labels.present[:, j]
            hits = (ds.labels.answers[mask, j] == gold[mask]).mean()
            n_trig = mask.sum()
            assert abs(hits - a) <= max(0.02, 3 * np.sqrt(a * (1 - a) / n_trig))

    def test_coverage_converges(self):
        cov = (0.9, 0.6, 0.5)
        cfg = SynthConfig(n=10000, source_coverage=cov)
        ds = generate_synthetic(cfg, seed=2)
        for j, c in enumerate(cov, start=1):
            assert abs(ds.labels.present[:, j].mean() - c) < 0.02

    def test_recorded_error_prob_matches_empirical(self):
        ds = generate_synthetic(SynthConfig(n=20000), seed=4)
        gold = ds.gold_array()
        err = ds.labels.answers[:, 0] != gold
        recorded = np.array(ds.meta["true_llm_error_prob"])
        assert abs(err.mean() - recorded.mean()) < 0.02
        # binned agreement between recorded probability and realized errors
        order = np.argsort(recorded)
        for chunk in np.array_split(order, 5):
            assert abs(err[chunk].mean() - recorded[chunk].mean()) < 0.04

    def test_gold_copier_mode(self):
        cfg = SynthConfig(n=20000, llm_mode="gold_copier", llm_alpha=1.0, llm_beta=3.0)
        ds = generate_synthetic(cfg, seed=5)
        gold = ds.gold_array()
        err = ds.labels.answers[:, 0] != gold
        recorded = np.array(ds.meta["true_llm_error_prob"])
        assert abs(err.mean() - recorded.mean()) < 0.02

    def test_rejects_chance_accuracy(self):
        with pytest.raises(DatasetError, match="chance"):
            SynthConfig(m=1, source_accuracy=(0.5,), source_coverage=(1.0,))

    def test_llm_coverage(self):
        cfg = SynthConfig(n=5000, llm_coverage=0.7)
        ds = generate_synthetic(cfg, seed=6)
        assert abs(ds.labels.present[:, 0].mean() - 0.7) < 0.03

    def test_splits_share_world_and_strip_gold(self):
        cfg = SynthConfig(n=10)
        tr, dev, te = generate_synthetic_splits(cfg, 0, 300, 100, 200)
        assert (tr.n, dev.n, te.n) == (300, 100, 200)
        assert not tr.has_gold() and not dev.has_gold() and te.has_gold()
        ids = {i.id for i in tr.instances} | {i.id for i in dev.instances} | {i.id for i in te.instances}
        assert len(ids) == 600

    def test_config_round_trip(self):
        cfg = SynthConfig(n=50, class_balance=(0.7, 0.3), labels=("a", "b"))
        again = SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
