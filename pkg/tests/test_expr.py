import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crindex.errors import DomainError, ExprError, ParseError
from crindex.expr import (Binary, Imag, Num, Param, Pow, Unary, Var, UNARY_FUNCS, depends_on_z,
                          eval_expr, parse, substitute, to_source, validate_real)

N = 2
PARAMS = ("a", "b")


def nodes():
    leaves = st.one_of(
        st.floats(0, 1e6, allow_nan=False).map(Num),
        st.just(Imag()),
        st.integers(1, N).map(Var),
        st.sampled_from(PARAMS).map(Param),
    )

    def extend(sub):
        return st.one_of(
            st.tuples(st.sampled_from(("neg",) + UNARY_FUNCS), sub).map(lambda t: Unary(*t)),
            st.tuples(st.sampled_from(("add", "sub", "mul", "div")), sub, sub)
            .map(lambda t: Binary(*t)),
            st.tuples(sub, st.integers(-3, 4)).map(lambda t: Pow(*t)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@given(nodes())
@settings(max_examples=300, deadline=None)
def test_print_parse_round_trip(node):
    assert parse(to_source(node), N, PARAMS).root == node


@given(st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2),
       st.sampled_from(["z1*z2 + exp(I*z1)", "abs2(z1) - re(z2)*im(z1)", "sin(z1)/(3 + z2^2)",
                        "conj(z1)*z2^3 + cos(conj(z2))", "pow(z1 - 2*I, -2)"]))
@settings(max_examples=100, deadline=None)
def test_eval_commutes_with_conj(z1, z2, src):
    z = np.array([z1, z2])
    e = parse(src, N)
    c = parse(f"conj({src})", N)
    a, b = eval_expr(c, z), np.conj(eval_expr(e, z))
    assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


def test_eval_is_deterministic():
    e = parse("exp(z1) * log(2 + abs2(z2)) + a", N, ["a"])
    z = np.random.default_rng(0).normal(size=(50, N)) + 0j
    first = eval_expr(e, z, {"a": 0.5})
    zc = z.copy()
    assert np.array_equal(first, eval_expr(e, z, {"a": 0.5}))
    assert np.array_equal(z, zc)


def test_values():
    z = np.array([1 + 2j, -0.5j])
    assert eval_expr(parse("abs2(z1)", N), z) == 5
    assert eval_expr(parse("re(z1) * im(z2)", N), z) == -0.5
    assert eval_expr(parse("2^3 - 1", N), z) == 7
    assert eval_expr(parse("-z1^2", N), z) == -(1 + 2j) ** 2
    assert abs(eval_expr(parse("ramp(-1 + re(z1))", N), z)) == 0
    assert abs(eval_expr(parse("exp(I*pi)", N), z) + 1) < 1e-15


@pytest.mark.parametrize("src, where", [("z1 +", 4), ("z3", 0), ("foo(z1)", 0), ("z1 $ 2", 3),
                                         ("pow(z1, 1.5)", 8), ("(z1", 3)])
def test_parse_errors_carry_offsets(src, where):
    with pytest.raises(ParseError) as info:
        parse(src, N)
    assert info.value.offset == where


def test_unknown_parameter_rejected():
    with pytest.raises(ParseError):
        parse("c * z1", N, ["a"])


def test_domain_errors():
    e = parse("log(re(z1))", N)
    with pytest.raises(DomainError):
        eval_expr(e, np.array([-1.0 + 0j, 0]))
    val, bad = eval_expr(e, np.array([[-1.0, 0], [1.0, 0]], complex), strict=False)
    assert bad.tolist() == [True, False]
    with pytest.raises(ExprError):
        eval_expr(parse("a*z1", N, ["a"]), np.zeros(2, complex))


def test_substitute_composes():
    outer = parse("z1*z2 + abs2(z1)", N)
    comps = [parse("z1 + z2^2", N), parse("2*z2", N)]
    z = np.array([0.3 - 0.1j, 0.2 + 0.4j])
    w = np.array([z[0] + z[1] ** 2, 2 * z[1]])
    assert abs(eval_expr(substitute(outer, comps), z) - eval_expr(outer, w)) < 1e-15


def test_helpers():
    assert depends_on_z(parse("z1 + 1", N).root)
    assert not depends_on_z(parse("sin(2) + a", N, ["a"]).root)
    assert validate_real(parse("abs2(z1) + re(z2)", N), [(-1, 1)] * 4) == 0
    assert validate_real(parse("z1", N), [(-1, 1)] * 4) > 0.1
