import numpy as np
import pytest

from sparsoc.config import eval_expression, load_config, parse_config
from sparsoc.errors import ConfigError
from sparsoc.fnspace import GridFunction, GridSpec, write_csv
from sparsoc.sparsity import SparsityKind


def test_defaults():
    run = parse_config("")
    p = run.problem
    assert p.kind is SparsityKind.J1
    assert p.mu == 0.01 and p.box == (-1.0, 1.0) and p.nu == 1.0
    assert p.spec.shape == (32, 32)
    assert run.analysis.growth_samples == 500
    assert load_config(None).problem.spec == p.spec


def test_fields_exact():
    run = parse_config("[problem]\nmu = 0.1\nalpha = -0.3\n[pde]\nkappa = 0.7\n")
    assert run.problem.mu == 0.1 and run.problem.alpha == -0.3 and run.problem.pde.kappa == 0.7


@pytest.mark.parametrize("alpha,beta", [("0", "1"), ("0.5", "1"), ("-1", "0"), ("-1", "-0.5")])
def test_box_validation(alpha, beta):
    with pytest.raises(ConfigError, match="α < 0 < β"):
        parse_config(f"[problem]\nalpha = {alpha}\nbeta = {beta}\n")


@pytest.mark.parametrize("text", [
    "[mystery]\na = 1\n",
    "[problem]\nlambda = 3\n",
    "[problem]\nkind = j4\n",
    "[problem]\nmu = abc\n",
    "[problem]\nmu = -1\n",
    "[problem]\nnu = -1\n",
    "[pde]\nkappa = 0\n",
    "[pde]\nnonlinearity = exp\n",
    "[grid]\ndim = 3\n",
    "[grid]\nn_space = 0\n",
    "[pde]\ny_d = log(x - 1)\n",
    "[pde]\ny_d = missing.csv\n",
    "not an ini file",
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("expr", [
    "__import__('os').system('true')",
    "x.__class__",
    "(lambda: 1)()",
    "open('f')",
    "[i for i in x]",
    "x if t else t",
])
def test_unsafe_expressions(expr):
    with pytest.raises(ConfigError):
        eval_expression(expr, {"x": np.zeros(2), "t": np.zeros(2)})


def test_expression_values():
    run = parse_config("[grid]\nn_space = 4\nn_time = 2\n[pde]\ny_d = x + 10*t\ny0 = 2*x\n")
    spec = run.problem.spec
    x = spec.space_centers()[:, 0]
    np.testing.assert_allclose(run.problem.pde.y_d.values, x[:, None] + 10 * spec.time_centers()[None, :])
    np.testing.assert_allclose(run.problem.pde.y0, 2 * x)


def test_two_dimensional():
    run = parse_config("[grid]\ndim = 2\nn_space = 3\nn_time = 2\n[pde]\ny_d = x1 * x2\n")
    assert run.problem.spec.shape == (9, 2)
    c = run.problem.spec.space_centers()
    np.testing.assert_allclose(run.problem.pde.y_d.values[:, 0], c[:, 0] * c[:, 1])


def test_csv_fields(tmp_path):
    spec = GridSpec.uniform(4, 3)
    target = GridFunction(spec, np.arange(12.0).reshape(4, 3))
    write_csv(target, tmp_path / "yd.csv")
    np.savetxt(tmp_path / "y0.csv", np.array([1.0, 2.0, 3.0, 4.0]), delimiter=",")
    cfg = tmp_path / "run.ini"
    cfg.write_text("[grid]\nn_space = 4\nn_time = 3\n[pde]\ny_d = yd.csv\ny0 = y0.csv\n")
    run = load_config(cfg)
    np.testing.assert_array_equal(run.problem.pde.y_d.values, target.values)
    np.testing.assert_array_equal(run.problem.pde.y0, [1.0, 2.0, 3.0, 4.0])
    np.savetxt(tmp_path / "y0.csv", np.array([1.0, 2.0]), delimiter=",")
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_empty_file(tmp_path):
    (tmp_path / "empty.ini").write_text("")
    assert load_config(tmp_path / "empty.ini").problem.mu == 0.01
