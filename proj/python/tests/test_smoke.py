# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import vittle

TINY = (
    '{"model":{"d":16,"heads":2,"max_visual":4,"max_text":8,"max_response":2,"steps":6},'
    '"train":{"batch_size":4},"task":{"segments":4,"segment_len":2}}'
)


def tiny():
    return vittle.RunConfig.from_json(TINY)


def test_config_round_trip_and_errors():
    c = tiny()
    assert c.d == 16
    assert vittle.RunConfig.from_json(c.to_json()) == c
    with pytest.raises(vittle.ConfigError, match="model.depth"):
        vittle.RunConfig.from_json('{"model":{"depth":2}}')
    with pytest.raises(ValueError):
        vittle.RunConfig.from_json('{"model":{"d":"wide"}}')


def test_training_is_deterministic_and_checkpoints(tmp_path):
    t1, rows1 = vittle.train(tiny(), "vittle-f", 3)
    t2, rows2 = vittle.train(tiny(), "vittle-f", 3)
    assert rows1 == rows2
    assert len(rows1) == 6
    beta = t1.beta
    for r in rows1:
        assert r["total"] == pytest.approx(r["nll"] + beta * (r["kld_v"] + r["kld_t"]), rel=1e-14)
    path = str(tmp_path / "ck.bin")
    t1.save(path)
    back = vittle.Trainer.load(path)
    assert back.step == 6 and back.finished and back.variant == "vittle-f"
    with pytest.raises(ValueError):
        vittle.Trainer(tiny(), "vittle", 1)


def test_evaluation_and_suite():
    c = tiny()
    trainer, _ = vittle.train(c, "baseline", 1)
    data = vittle.eval_dataset(c, 1, 20)
    assert all(s.response == vittle.keyed_copy_answer(c, s) for s in data)
    acc, preds = trainer.evaluate(data)
    assert 0.0 <= acc <= 1.0 and len(preds) == 20
    for s, p in zip(data, preds):
        s.response = p
    assert trainer.evaluate(data)[0] == 1.0

    suite = vittle.build_suite(data, c, 7)
    assert len(suite) == 28
    assert sum(k.startswith("visual/") for k in suite) == 9
    assert sum(k.startswith("joint/") for k in suite) == 9

    reps = trainer.representations(data, 3)
    assert reps.shape == (20, 16)
    assert vittle.repr_jsd(reps, reps) == 0.0
    assert np.allclose(vittle.cosine_distances(reps, reps), 0.0, atol=1e-12)
    coords, explained = vittle.pca2(reps)
    assert coords.shape == (20, 2)
    assert explained[0] >= explained[1] >= 0.0


def test_information_measures():
    assert vittle.entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)
    assert vittle.jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(math.log(2), abs=1e-12)
    assert vittle.kl(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert vittle.mutual_information(joint) == pytest.approx(math.log(2), abs=1e-12)
    rng = np.random.default_rng(0)
    a, b = rng.random(3), rng.random(5)
    assert abs(vittle.mutual_information(np.outer(a / a.sum(), b / b.sum()))) < 1e-12

    s = vittle.verify_bound(50, seed=3)
    assert s["instances"] == 50 and s["violations"] == 0
    assert s["max_chain_residual"] < 1e-10
    assert all(r["emid"] <= r["bound"] for r in s["reports"])


def test_gradcheck_binding():
    c = tiny()
    t = vittle.Trainer(c, "vittle-l", 2)
    batch = vittle.keyed_copy_dataset(c, 2, 5)
    errors = t.gradcheck(batch)
    assert "prior.visual" in errors
    assert max(errors.values()) < 1e-4
