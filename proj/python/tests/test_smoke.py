import filecmp
from pathlib import Path

import numpy as np
import pytest

import fttab

FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"
TINY = {"model.d": 16, "model.layers": 1, "model.ff_dim": 32, "pretrain.heldout_tasks": 4}


def test_auc_matches_pairwise_definition():
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(3), size=40)
    labels = rng.integers(0, 3, size=40)
    aucs = []
    for a in range(3):
        for b in range(a + 1, 3):
            vals = []
            for pos, neg in ((a, b), (b, a)):
                p = probs[labels == pos, pos]
                n = probs[labels == neg, pos]
                diff = p[:, None] - n[None, :]
                vals.append(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)
            aucs.append(np.mean(vals))
    assert fttab.roc_auc_ovo(probs, labels.tolist()) == pytest.approx(np.mean(aucs), abs=1e-15)


def test_auc_single_class_raises():
    with pytest.raises(fttab.UndefinedMetricError):
        fttab.roc_auc_ovo(np.full((3, 2), 0.5), [1, 1, 1])
    assert issubclass(fttab.UndefinedMetricError, fttab.NumericError)


def test_sample_task_is_deterministic():
    a = fttab.sample_task(17, "linear")
    b = fttab.sample_task(17, "linear")
    assert a["family"] == "linear"
    np.testing.assert_array_equal(a["numerical"], b["numerical"])
    np.testing.assert_array_equal(a["labels"], b["labels"])
    assert set(np.unique(a["labels"])) == set(range(a["num_classes"]))


def test_unknown_config_key():
    with pytest.raises(fttab.ConfigError):
        fttab.resolve_config({"model.width": 3})
    assert "model.d = 12" in fttab.resolve_config({"model.d": 12})


def test_grad_check_passes_and_negative_control_fails(tmp_path):
    ok = fttab.grad_check({"output_dir": tmp_path / "ok"})
    assert ok["passed"]
    assert {c["component"] for c in ok["components"]} == {"ft_layer", "encoder", "label_embedder", "total_loss"}
    bad = fttab.grad_check({"output_dir": tmp_path / "bad", "gradcheck.flip_sign": True})
    assert not bad["passed"]


def test_pretrain_finetune_evaluate_roundtrip(tmp_path):
    pt = fttab.pretrain({**TINY, "output_dir": tmp_path / "pt", "pretrain.episodes": 60})
    assert fttab.checkpoint_kind(pt["checkpoint"]) == "backbone"
    assert len(pt["losses"]) == 60

    again = fttab.pretrain({**TINY, "output_dir": tmp_path / "pt2", "pretrain.episodes": 60})
    assert filecmp.cmp(pt["checkpoint"], again["checkpoint"], shallow=False)

    ev = fttab.evaluate({"output_dir": tmp_path / "ev", "checkpoint": pt["checkpoint"], "evaluate.tasks": 5})
    assert ev["kind"] == "in_context" and 0.0 <= ev["accuracy"] <= 1.0

    reports = fttab.finetune({
        "output_dir": tmp_path / "ft",
        "checkpoint": pt["checkpoint"],
        "dataset": FIXTURES / "mixed.dataset",
        "finetune.epochs": 2,
        "finetune.seeds": [0, 1],
    })
    assert len(reports) == 1 and len(reports[0]["seeds"]) == 2
    ckpt = tmp_path / "ft" / "finetuned_full_seed0.ckpt"
    gram = fttab.category_gram(ckpt)
    assert gram.shape[0] == gram.shape[1]
    cos = fttab.identifier_cosine(ckpt)
    np.testing.assert_allclose(np.diag(cos), 1.0, atol=1e-12)
    assert fttab.mean_abs_offdiag(cos) >= 0.0


def test_missing_dataset_is_reported(tmp_path):
    with pytest.raises(fttab.Error):
        fttab.finetune({"output_dir": tmp_path, "checkpoint": tmp_path / "none.ckpt", "dataset": tmp_path / "x.dataset"})
