"""Quick check of the Python bindings: parse, distances, FCM, silhouette, pipeline."""

import json
import pathlib

import setplay

LISTING = pathlib.Path(__file__).resolve().parent.parent / "crates/core/fixtures/listing.sp"


def main():
    sp = setplay.Setplay.parse(LISTING.read_text())
    assert sp.our_players_number >= 4, sp
    assert setplay.validate(LISTING.read_text()) == []
    assert setplay.validate("(setplay") != []

    plans = [setplay.Setplay.parse(text) for _, text in setplay.generate_corpus(seed=3)]
    assert len(plans) == 18
    a, b = plans[0], plans[-1]
    assert setplay.level1_distance(a, a) == 0.0
    assert setplay.level1_distance(a, b) == setplay.level1_distance(b, a) > 0
    assert setplay.level2_distance(a, b) >= setplay.level1_distance(a, b)
    assert setplay.Setplay.from_json(a.to_json()).to_json() == a.to_json()

    run = setplay.fcm_euclidean([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]], clusters=2, seed=1)
    assert run.converged
    for col in zip(*run.partition):
        assert abs(sum(col) - 1.0) < 1e-9
    labels = [max(range(2), key=lambda i: col[i]) for col in zip(*run.partition)]
    assert labels[:3] == [labels[0]] * 3 and labels[3:] == [1 - labels[0]] * 3

    pts = [0.0, 0.1, 5.0, 5.1]
    dist = [[abs(x - y) for y in pts] for x in pts]
    crisp = [[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]
    assert setplay.fuzzy_silhouette(crisp, dist) > 0.9
    assert setplay.assign_members([[0.9, 0.6, 0.2], [0.1, 0.4, 0.8]], 0.5) == [[0, 1], [1, 2]]

    report = json.loads(setplay.run_pipeline(plans, json.dumps({"restarts": 3})))
    assert len(report["stage1"]["fs_curve"]) == 7
    assert 2 <= report["stage1"]["best_c"] <= 8
    print("smoke test ok: best_c =", report["stage1"]["best_c"])


if __name__ == "__main__":
    main()
