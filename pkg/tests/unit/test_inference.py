from types import SimpleNamespace

import numpy as np
import pytest
import torch

import app.inference.regressor as regressor_module
from app.inference.beam import BeamResult, Candidate, beam_search
from app.inference.fitting import fit_candidate, mean_squared_error, select_best
from app.inference.regressor import prepare_inputs, regress
from app.model.networks import build_model
from app.models.ConfigModels import BfgsConfig, InferenceConfig
from app.optim.bfgs import BfgsStatus, minimize, numeric_grad
from app.symbolic import tokens
from app.symbolic.evaluator import evaluate_batch
from app.symbolic.expression import Expression, mul, unary, var
from app.symbolic.skeleton import Skeleton
from app.utils.exceptions import MalformedDataError, NoValidCandidateError, TooManyVariablesError
from app.utils.file_utils import FileUtils, read_jsonl
from config.settings import Settings


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def rosenbrock_grad(x):
    return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])


def test_bfgs_minimizes_a_quadratic():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    result = minimize(lambda x: 0.5 * x @ A @ x - b @ x, lambda x: A @ x - b, np.zeros(2), debug=True)
    assert result.status is BfgsStatus.converged
    np.testing.assert_allclose(result.minimizer, np.linalg.solve(A, b), atol=1e-7)


def test_bfgs_solves_rosenbrock_with_wolfe_checks():
    result = minimize(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]), BfgsConfig(max_iterations=500), debug=True)
    assert result.status is BfgsStatus.converged
    np.testing.assert_allclose(result.minimizer, [1.0, 1.0], atol=1e-6)


def test_bfgs_on_a_kink_stays_finite():
    result = minimize(lambda x: float(np.abs(x).sum()), lambda x: np.sign(x), np.array([2.5]))
    assert np.all(np.isfinite(result.minimizer))
    assert result.objective_value <= 2.5


def test_bfgs_reports_a_non_finite_start():
    result = minimize(lambda x: float("nan"), lambda x: np.zeros_like(x), np.ones(2))
    assert result.status is BfgsStatus.non_finite_objective
    assert result.failed
    assert result.iterations == 0


def test_numeric_grad_matches_the_analytic_gradient():
    point = np.array([0.3, -0.7])
    np.testing.assert_allclose(numeric_grad(rosenbrock, point), rosenbrock_grad(point), rtol=1e-6)


def test_mean_squared_error_is_inf_for_non_finite_predictions():
    assert mean_squared_error(np.ones(3), np.array([1.0, np.nan, 1.0])) == np.inf
    assert mean_squared_error(np.ones(2), np.array([2.0, 0.0])) == 1.0


def line_data(rng, slope=2.0, count=64):
    X = np.zeros((count, 3))
    X[:, 0] = rng.uniform(-3.0, 3.0, size=count)
    return X, slope * X[:, 0]


def test_fit_candidate_recovers_a_linear_constant(rng):
    X, Y = line_data(rng)
    cand = Candidate(skeleton=Skeleton.from_expression(mul(Expression.placeholder(), var(1))), log_likelihood=-1.0)
    fitted = fit_candidate(cand, X, Y, InferenceConfig(bfgs_restarts=2), rng)
    assert fitted.is_fitted
    assert fitted.mse < 1e-10
    np.testing.assert_allclose(evaluate_batch(fitted.fitted, X), Y, atol=1e-4)
    assert fitted.score == pytest.approx(fitted.mse + 1e-14 * fitted.length)


def test_candidate_without_placeholders_is_scored_directly(rng):
    X, Y = line_data(rng)
    cand = Candidate(skeleton=Skeleton.from_expression(var(1)), log_likelihood=-1.0)
    fitted = fit_candidate(cand, X, Y, InferenceConfig(bfgs_restarts=2), rng)
    assert fitted.fitted == var(1)
    assert fitted.constants.size == 0
    assert fitted.mse == pytest.approx(float(np.mean(X[:, 0] ** 2)))
    exact = fit_candidate(cand, X, X[:, 0], InferenceConfig(), rng)
    assert exact.mse == 0.0


def fitted_candidate(expr, mse, log_likelihood, penalty=1e-14):
    skel = Skeleton.from_expression(expr)
    cand = Candidate(skeleton=skel, log_likelihood=log_likelihood, fitted=expr, mse=mse)
    cand.score = mse + penalty * cand.length
    return cand


def test_select_best_breaks_ties_by_length_then_likelihood():
    short = fitted_candidate(var(1), 0.5, -3.0)
    long = fitted_candidate(unary("sin", unary("cos", var(1))), 0.5, -1.0)
    assert select_best([long, short]) is short
    likely = fitted_candidate(var(1), 0.5, -0.5)
    assert select_best([short, likely]) is likely
    better = fitted_candidate(unary("sin", unary("cos", var(1))), 0.1, -9.0)
    assert select_best([short, better]) is better


def test_select_best_without_fitted_candidates():
    with pytest.raises(NoValidCandidateError):
        select_best([Candidate(skeleton=Skeleton.from_expression(var(1)), log_likelihood=0.0)])


class TableModel:
    """
    按前缀长度查表给出 logits 的假模型 | Fake model whose logits depend on the prefix length only
    """

    def __init__(self, preferred, max_target_len=12):
        self.preferred = preferred
        self.config = SimpleNamespace(max_target_len=max_target_len)

    def decode_logits(self, latent, prefix):
        batch, length = prefix.shape
        logits = torch.zeros(batch, length, tokens.VOCAB_SIZE)
        for position in range(length):
            logits[:, position, self.preferred[min(position, len(self.preferred) - 1)]] = 6.0
        return logits


PREFERRED = [tokens.MUL, tokens.PLACEHOLDER, tokens.X1, tokens.EOS]


def test_beam_search_finds_the_preferred_sequence():
    latent = torch.zeros(1, 2, 4)
    wide = beam_search(TableModel(PREFERRED), latent, InferenceConfig(beam_size=4))
    assert wide.candidates[0].prefix == PREFERRED[:-1]
    scores = [cand.log_likelihood for cand in wide.candidates]
    assert scores == sorted(scores, reverse=True)
    assert len(wide.candidates) <= 4


def test_beam_of_one_is_greedy_decoding():
    greedy = beam_search(TableModel(PREFERRED), torch.zeros(1, 2, 4), InferenceConfig(beam_size=1))
    assert [cand.prefix for cand in greedy.candidates] == [PREFERRED[:-1]]


@pytest.mark.parametrize("preferred", [
    PREFERRED,
    [tokens.ADD, tokens.X1, tokens.X2, tokens.EOS],
    [tokens.SIN, tokens.MUL, tokens.PLACEHOLDER, tokens.X1, tokens.EOS],
])
def test_greedy_candidate_survives_wider_beams(preferred):
    latent = torch.zeros(1, 2, 4)
    greedy = beam_search(TableModel(preferred), latent, InferenceConfig(beam_size=1)).candidates[0].prefix
    assert greedy == preferred[:-1]
    for width in (2, 4, 8, 32):
        result = beam_search(TableModel(preferred), latent, InferenceConfig(beam_size=width))
        assert greedy in [cand.prefix for cand in result.candidates], width


def test_beam_search_without_a_parsable_sequence():
    # 立即结束的空序列无法解析 | The empty sequence that ends at once cannot be parsed
    with pytest.raises(NoValidCandidateError):
        beam_search(TableModel([tokens.EOS]), torch.zeros(1, 2, 4), InferenceConfig(beam_size=1))


def test_prepare_inputs_pads_and_validates():
    X, Y = prepare_inputs(np.array([1.0, 2.0]), np.array([3.0, 4.0]), dim_x=3)
    assert X.shape == (2, 3)
    assert np.all(X[:, 1:] == 0.0)
    with pytest.raises(TooManyVariablesError):
        prepare_inputs(np.zeros((2, 3)), np.zeros(2), dim_x=2)
    with pytest.raises(MalformedDataError):
        prepare_inputs(np.zeros((3, 1)), np.zeros(2), dim_x=3)
    with pytest.raises(MalformedDataError):
        prepare_inputs(np.array([[np.nan]]), np.zeros(1), dim_x=3)


def test_regress_fits_and_ranks_decoded_candidates(monkeypatch, tmp_path, rng, tiny_model_config):
    skeletons = [var(1), mul(Expression.placeholder(), var(1)), unary("sin", var(1))]
    decoded = BeamResult(candidates=[Candidate(skeleton=Skeleton.from_expression(expr), log_likelihood=-float(rank),
                                               prefix=[]) for rank, expr in enumerate(skeletons)],
                         invalid_count=2)
    monkeypatch.setattr(regressor_module, "beam_search", lambda model, latent, config: decoded)
    X = rng.uniform(-3.0, 3.0, size=(50, 1))
    result = regress(build_model(tiny_model_config), X, 2.0 * X[:, 0], InferenceConfig(bfgs_restarts=2), workers=2)
    np.testing.assert_allclose(evaluate_batch(result.expression, X), 2.0 * X[:, 0], atol=1e-4)
    assert result.invalid_count == 2
    assert result.failed_count == 0
    assert [cand.score for cand in result.candidates] == sorted(cand.score for cand in result.candidates)
    assert {"encode_seconds", "beam_seconds", "fit_seconds", "total_seconds"} <= set(result.timings)

    path = result.write_report(FileUtils(str(tmp_path)))
    records = read_jsonl(path, Settings.FileSettings.report_header)
    assert [record["rank"] for record in records] == [1, 2, 3]
