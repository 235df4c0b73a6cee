"""Smoke test for the smilegan Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o /tmp/wheels
    pip install /tmp/wheels/smilegan-*.whl
"""

import os
import tempfile

import smilegan


def main():
    table, truth = smilegan.simulate(seed=3, preset="semi-synthetic", n_cn=60, n_pt=60, n_features=110)
    assert len(table) == 120
    assert sum(t is None for t in truth) == 60

    normalized, stats_json = smilegan.preprocess(table)
    cn = normalized.cn_rows()
    for j in range(3):
        col = [row[j] for row in cn]
        mean = sum(col) / len(col)
        assert abs(mean - 1.0) < 1e-9, mean

    config = smilegan.TrainingConfig(m=3, max_epoch=5, stop={"warmup_epochs": 2})
    model, monitor = smilegan.train(table, config, seed=1)
    assert model.epoch == len(monitor) == 5
    assert model.max_abs_box_param() <= 0.5

    probs = model.assign(table.pt_rows())
    assert len(probs) == 60 and all(abs(sum(p) - 1.0) < 1e-12 for p in probs)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = smilegan.Model.load(path)
        assert again.assign(table.pt_rows()) == probs
        assert again.to_checkpoint_string() == model.to_checkpoint_string()

    labels = [max(range(3), key=p.__getitem__) for p in probs]
    assert smilegan.ari(labels, labels) == 1.0
    acc, perm = smilegan.match_accuracy([0, 0, 1, 1], [1, 1, 0, 0])
    assert acc == 1.0 and perm == [1, 0]

    other, _ = smilegan.train(table, config, seed=2)
    template, perms, consensus = smilegan.consensus([model, other], table.pt_rows())
    assert template in (0, 1) and len(perms) == 2 and len(consensus) == 60

    print("smilegan smoke test passed")


if __name__ == "__main__":
    main()
