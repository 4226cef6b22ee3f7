from pathlib import Path

import pytest

from minimax_lab.core.config_builder import (
    ConfigError,
    build_experiment_config,
    build_family,
    load_config,
    parse_config_text,
)
from minimax_lab.core.weighting import Balancer

SAMPLE = """
# two tasks in the plane
study = compare-init
seed = 7
family.kind = quadratic
family.centers = 0, 0; 1, 0.5
family.curvatures = 1, 4
alpha.mode = constant
alpha.value = 20
step.mode = constant
step.eta = 0.01
methods = minimax, none
lambda = 0.25, 0.75
"""


def test_parse_nests_dotted_keys():
    raw = parse_config_text(SAMPLE)
    assert raw["family"]["kind"] == "quadratic"
    assert raw["family"]["centers"] == [["0", "0"], ["1", "0.5"]]
    assert raw["methods"] == ["minimax", "none"]
    assert raw["seed"] == "7"


def test_build_config_from_text():
    config = build_experiment_config(parse_config_text(SAMPLE))
    assert config.study == "compare-init"
    assert config.seed == 7
    assert config.family.centers == [[0.0, 0.0], [1.0, 0.5]]
    assert config.family.curvatures == [1.0, 4.0]
    assert config.alpha.value == 20.0
    assert config.step.eta == 0.01
    assert config.methods == [Balancer.MINIMAX, Balancer.NONE]
    assert config.lambda_ == [0.25, 0.75]

    family = build_family(config.family)
    assert family.T == 2 and family.dim == 2


def test_scalars_are_wrapped():
    config = build_experiment_config(parse_config_text("K_list = 100\ntheta0 = 0.5\nfamily.kind = gap\nfamily.T = 8"))
    assert config.K_list == [100]
    assert config.theta0 == [0.5]
    assert build_family(config.family).name == "gap-8"


def test_one_dimensional_centers():
    config = build_experiment_config(
        parse_config_text("family.kind = quadratic\nfamily.centers = 0, 1\nfamily.curvatures = 1, 1")
    )
    assert config.family.centers == [[0.0], [1.0]]
    single = build_experiment_config(
        parse_config_text("family.kind = quadratic\nfamily.centers = 0, 1;\nfamily.curvatures = 2")
    )
    assert single.family.centers == [[0.0, 1.0]]


@pytest.mark.parametrize(
    "text, key",
    [
        ("family.bogus = 1", "family.bogus"),
        ("colour = red", "colour"),
        ("eps = 1.5", "eps"),
        ("trials = 0", "trials"),
        ("balancer = adam", "balancer"),
        ("step.mode = constant", "step"),
        ("family.kind = quadratic\nfamily.centers = 0, 1\nfamily.curvatures = 1", "family"),
        ("seed = 1\nseed = 2", "seed"),
        ("family = gap\nfamily.T = 3", "family"),
    ],
)
def test_bad_configs_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        build_experiment_config(parse_config_text(text))
    assert info.value.key == key


def test_line_without_equals_is_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("just words")


def test_overrides_replace_config_values(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\nK = 50\n", encoding="utf-8")
    assert load_config(path).seed == 3
    assert load_config(path, overrides={"seed": 11}).seed == 11
    assert load_config(path, overrides={"seed": None}).seed == 3


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_config("does/not/exist.cfg")


def test_shipped_configs_load():
    paths = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.cfg"))
    assert paths
    for path in paths:
        config = load_config(path)
        build_family(config.family, seed=config.seed)
