import numpy as np
import pytest

from app.gp.evolution import (EvolutionTrace, Individual, as_regressor, build_program, crossover, evolve,
                              init_population, point_mutation, raw_fitness, tournament)
from app.gp.primitives import PRIMITIVES, VALUE_CAP, execute, program_depth, subtree_end, to_expression
from app.models.ConfigModels import GpConfig
from app.symbolic.evaluator import evaluate_batch
from app.utils.exceptions import MalformedDataError
from app.utils.file_utils import FileUtils


def small_config(**overrides):
    settings = dict(population_size=64, tournament_size=4, generations=5, seed=3)
    settings.update(overrides)
    return GpConfig(**settings)


def test_protected_primitives_stay_finite():
    rng = np.random.default_rng(0)
    left = rng.choice([-1e90, -1e3, -1.0, -1e-9, 0.0, 1e-9, 1.0, 1e3, 1e90], size=100000) * rng.uniform(0.5, 1.5, 100000)
    X = np.stack([left, rng.permutation(left)], axis=1)
    for name, primitive in PRIMITIVES.items():
        values = execute([name, 0, 1][:primitive.arity + 1], X)
        assert np.all(np.isfinite(values)), name
        assert np.all(np.abs(values) <= VALUE_CAP), name


def test_protected_division_and_log_near_zero():
    X = np.array([[3.0, 0.0], [3.0, 1e-8]])
    np.testing.assert_array_equal(execute(["div", 0, 1], X), [1.0, 1.0])
    np.testing.assert_array_equal(execute(["log", 1], X), [0.0, 0.0])
    np.testing.assert_allclose(execute(["sqrt", "neg", 0], X), np.sqrt(3.0))


def test_program_structure_helpers():
    program = ["add", "mul", 0, 1.5, "sin", 1]
    assert subtree_end(program, 1) == 4
    assert subtree_end(program, 4) == 6
    assert program_depth(program) == 3
    assert program_depth([0]) == 1
    X = np.array([[2.0, 0.0]])
    np.testing.assert_allclose(execute(program, X), [3.0])


def test_to_expression_matches_execution():
    program = ["add", "mul", 0, 1.5, "sin", 1]
    X = np.random.default_rng(1).uniform(-2.0, 2.0, size=(40, 2))
    padded = np.zeros((40, 3))
    padded[:, :2] = X
    np.testing.assert_allclose(evaluate_batch(to_expression(program), padded), execute(program, X))
    with pytest.raises(ValueError):
        to_expression([0, 1])


def test_initial_population_respects_depth_and_constant_range():
    cfg = small_config(population_size=200)
    population = init_population(cfg, np.random.default_rng(2), n_features=2)
    assert len(population) == 200
    low, high = cfg.constant_range
    for individual in population:
        assert 2 <= individual.depth <= cfg.init_depth[1]
        constants = [node for node in individual.program if isinstance(node, float)]
        assert all(low <= value <= high for value in constants)
        features = [node for node in individual.program if isinstance(node, int)]
        assert all(0 <= feature < 2 for feature in features)
    # full 方法总是长到指定深度 | The full method always reaches the requested depth
    full = build_program(cfg, 1, np.random.default_rng(3), method="full", depth=4)
    assert program_depth(full) == 4


def test_variation_keeps_programs_well_formed():
    cfg = small_config()
    rng = np.random.default_rng(4)
    for _ in range(200):
        parent, donor = build_program(cfg, 2, rng), build_program(cfg, 2, rng)
        for child in (crossover(parent, donor, rng), point_mutation(parent, cfg, 2, rng)):
            assert subtree_end(child, 0) == len(child)
    mutated = point_mutation(["add", 0, 1], cfg, 2, np.random.default_rng(5))
    assert len(mutated) == 3


def test_full_tournament_picks_the_best():
    cfg = small_config(population_size=8, tournament_size=8, parsimony_coefficient=0.0)
    population = [Individual([0], fitness=float(value)) for value in (5, 3, 9, 1, 7, 2, 8, 6)]
    assert tournament(population, cfg, np.random.default_rng(6)).fitness == 1.0


def test_raw_fitness_metrics():
    X = np.array([[1.0], [2.0]])
    Y = np.array([2.0, 4.0])
    assert raw_fitness([0], X, Y, "mae") == 1.5
    assert raw_fitness([0], X, Y, "mse") == 2.5


def test_evolution_is_deterministic_and_traced(tmp_path):
    rng = np.random.default_rng(7)
    X = rng.uniform(-1.0, 1.0, size=(30, 1))
    Y = X[:, 0] ** 2 + 0.5
    cfg = small_config()
    trace = EvolutionTrace()
    first = evolve(cfg, X, Y, np.random.default_rng(8), workers=2, trace=trace)
    second = evolve(cfg, X, Y, np.random.default_rng(8), workers=1)
    assert first.program == second.program
    assert first.fitness == second.fitness
    generations = [row[0] for row in trace.rows]
    assert generations == list(range(len(generations)))
    best = [row[1] for row in trace.rows]
    assert best == sorted(best, reverse=True)
    assert trace.write(FileUtils(str(tmp_path))).endswith("gp_trace.csv")


def test_zero_generations_return_the_best_initial_individual():
    X = np.linspace(0.0, 1.0, 20).reshape(-1, 1)
    best = evolve(small_config(generations=0), X, X[:, 0], np.random.default_rng(9))
    assert np.isfinite(best.fitness)


def test_evolve_rejects_bad_data():
    with pytest.raises(MalformedDataError):
        evolve(small_config(), np.zeros((3, 1)), np.zeros(2), np.random.default_rng(0))
    with pytest.raises(MalformedDataError):
        evolve(small_config(), np.array([[np.inf]]), np.zeros(1), np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ValueError):
        GpConfig(mutation_prob=0.2, crossover_prob=0.9)
    with pytest.raises(ValueError):
        GpConfig(population_size=10, tournament_size=20)
    with pytest.raises(ValueError):
        GpConfig(function_set=("add", "gamma"))
    with pytest.raises(ValueError):
        GpConfig(function_set=("add", "tan"))


def test_regressor_returns_an_expression():
    X = np.linspace(-1.0, 1.0, 25).reshape(-1, 1)
    expression = as_regressor(small_config(generations=2))(X, 2.0 * X[:, 0])
    padded = np.zeros((25, 3))
    padded[:, 0] = X[:, 0]
    assert evaluate_batch(expression, padded).shape == (25,)


@pytest.mark.slow
def test_gp_recovers_a_simple_sum():
    rng = np.random.default_rng(10)
    X = rng.uniform(-1.0, 1.0, size=(100, 2))
    Y = X[:, 0] + X[:, 1]
    cfg = GpConfig(population_size=500, generations=20, function_set=("add", "sub", "mul"), seed=1)
    best = evolve(cfg, X, Y, np.random.default_rng(cfg.seed))
    assert best.fitness < 0.05
    assert to_expression(best.program).variables_used() == {1, 2}
