import math

import numpy as np
import pytest

from llana.space import (
    Configuration,
    Observation,
    ParamSpec,
    SearchSpace,
    SizeError,
    Trajectory,
    ValidationError,
    check,
    decode_unit,
    dump_space,
    encode_unit,
    load_space,
    read_dataset_csv,
    sample_uniform,
    split_dataset,
    validate,
    weight_space,
    write_dataset_csv,
)


def test_paramspec_rejects_bad_bounds():
    with pytest.raises(ValueError):
        ParamSpec("a", "continuous", 1.0, 1.0)
    with pytest.raises(ValueError):
        ParamSpec("a", "categorical", categories=("x", "x"))
    with pytest.raises(ValueError):
        ParamSpec("a", "continuous", 0.0, 1.0, log_scale=True)


def test_space_rejects_duplicate_names():
    with pytest.raises(ValueError):
        SearchSpace((ParamSpec("a", "continuous", 0, 1), ParamSpec("a", "continuous", 0, 1)))


def test_validate_in_bounds(space14):
    cfg = {f"w{i}": 1.0 for i in range(1, 15)}
    assert validate(cfg, space14) == []


def test_validate_names_the_breach(space14):
    cfg = {f"w{i}": 1.0 for i in range(1, 15)}
    cfg["w3"] = -1.0
    report = validate(cfg, space14)
    assert [v.name for v in report] == ["w3"]
    with pytest.raises(ValidationError):
        check(cfg, space14)


def test_validate_missing_key(space14):
    cfg = {f"w{i}": 1.0 for i in range(1, 14)}
    report = validate(cfg, space14)
    assert [(v.name, v.reason) for v in report] == [("w14", "missing")]


def test_sample_uniform_mean_and_bounds():
    space = SearchSpace((ParamSpec("x", "continuous", 0.0, 1.0),))
    xs = np.array([c["x"] for c in sample_uniform(space, 3, 1000)])
    assert xs.min() >= 0 and xs.max() <= 1
    assert abs(xs.mean() - 0.5) < 0.05


def test_sample_uniform_categorical_frequencies():
    space = SearchSpace((ParamSpec("c", "categorical", categories=("a", "b")),))
    vals = [c["c"] for c in sample_uniform(space, 11, 2000)]
    assert 0.45 <= vals.count("a") / 2000 <= 0.55


def test_sample_uniform_deterministic_and_valid(mixed_space):
    a = sample_uniform(mixed_space, 5, 200)
    assert a == sample_uniform(mixed_space, 5, 200)
    assert all(validate(c, mixed_space) == [] for c in a)


def test_log_scale_samples_are_uniform_in_log10(space14):
    logs = np.log10([c["w1"] for c in sample_uniform(space14, 0, 4000)])
    assert abs(np.mean(logs)) < 0.05
    assert abs(np.mean(logs < 0) - 0.5) < 0.03


def test_encode_examples():
    space = SearchSpace(
        (ParamSpec("a", "continuous", 2.0, 6.0), ParamSpec("b", "continuous", 0.1, 10.0, log_scale=True))
    )
    assert encode_unit({"a": 2.0, "b": 0.1}, space).tolist() == [0.0, 0.0]
    u = encode_unit({"a": 4.0, "b": 1.0}, space)
    assert u[0] == 0.5
    assert abs(u[1] - 0.5) < 1e-15


def test_encode_categorical_index_scaling(mixed_space):
    cfg = {"lr": 0.01, "depth": 3, "frac": 0.2, "crit": "log_loss"}
    assert encode_unit(cfg, mixed_space)[3] == 1.0
    single = SearchSpace((ParamSpec("c", "categorical", categories=("only",)),))
    assert encode_unit({"c": "only"}, single).tolist() == [0.0]


def test_encode_decode_round_trip(mixed_space):
    for cfg in sample_uniform(mixed_space, 9, 300):
        back = decode_unit(encode_unit(cfg, mixed_space), mixed_space)
        assert back["depth"] == cfg["depth"] and back["crit"] == cfg["crit"]
        assert abs(back["lr"] - cfg["lr"]) <= 1e-12 * max(1.0, abs(cfg["lr"]))
        assert abs(back["frac"] - cfg["frac"]) <= 1e-12


def test_integer_decode_rounds_half_up():
    space = SearchSpace((ParamSpec("k", "integer", 0, 4),))
    assert decode_unit([0.125], space)["k"] == 1  # 0.5 rounds up
    assert decode_unit([0.12], space)["k"] == 0


def test_encode_rejects_invalid(space14):
    with pytest.raises(ValidationError):
        encode_unit({"w1": 1.0}, space14)


def test_configuration_is_hashable_mapping():
    a = Configuration({"x": 1.0, "y": "b"})
    b = Configuration([("y", "b"), ("x", 1.0)])
    assert a == b and hash(a) == hash(b)
    assert {a: 1}[b] == 1


def test_split_dataset_examples():
    obs = [Observation(Configuration({"x": float(i)}), (float(i),), i) for i in range(500)]
    split = split_dataset(obs, 400, 100, 7)
    assert (len(split.train), len(split.test)) == (400, 100)
    assert not {o.trial_index for o in split.train} & {o.trial_index for o in split.test}
    assert split == split_dataset(obs, 400, 100, 7)
    small = split_dataset(obs[:10], 10, 0, 1)
    assert len(small.train) == 10 and small.test == ()
    with pytest.raises(SizeError):
        split_dataset(obs[:5], 4, 2, 0)


def test_trajectory_negates_maximize_objectives():
    space = SearchSpace((ParamSpec("x", "continuous", 0, 1),))
    traj = Trajectory(space, ("acc", "loss"), ("maximize", "minimize"))
    traj = traj.append(Configuration({"x": 0.5}), (0.9, 0.3))
    assert traj.scores().tolist() == [[-0.9, 0.3]]
    assert traj.observations[0].trial_index == 0
    assert len(traj.append(Configuration({"x": 0.1}), (0.1, 0.1))) == 2
    assert len(traj) == 1


def test_dataset_csv_round_trip(tmp_path, space14):
    configs = sample_uniform(space14, 2, 20)
    obs = [Observation(c, (math.sin(i), float(i)), i) for i, c in enumerate(configs)]
    path = write_dataset_csv(tmp_path / "d.csv", obs, space14, ("a", "b"))
    header = path.read_text().splitlines()[0]
    assert header == ",".join([f"w{i}" for i in range(1, 15)] + ["a", "b"])
    back, names = read_dataset_csv(path, space14)
    assert names == ("a", "b")
    assert [o.config for o in back] == configs
    assert [o.scores for o in back] == [o.scores for o in obs]


def test_space_json_round_trip(tmp_path, mixed_space):
    dump_space(mixed_space, tmp_path / "s.json")
    assert load_space(tmp_path / "s.json") == mixed_space


def test_weight_space_shape():
    space = weight_space()
    assert space.dimension == 14
    assert all(p.log_scale and p.lower == 0.1 and p.upper == 10 for p in space)
