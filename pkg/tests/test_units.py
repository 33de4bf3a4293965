import math

import pytest
from hypothesis import given, strategies as st

from gsdscope.errors import DomainError, QuantityParseError
from gsdscope.units import (
    CONSTANTS,
    PhysicalConstants,
    Quantity,
    ThermalState,
    TransitionSpec,
    TrapSpec,
    default_constants,
    default_trap,
    format_quantity,
    gamma_from_lifetime,
    parse_quantity,
)


def test_constants_codata():
    c = default_constants()
    assert c.hbar == pytest.approx(1.0546e-34, rel=1e-4)
    assert c.atomic_mass_unit == pytest.approx(1.6605e-27, rel=1e-4)
    assert c.euler == pytest.approx(2.718281828459045)
    assert c.hbar * c.c == pytest.approx(3.1615e-26, rel=1e-4)


def test_constants_reject_nonpositive():
    with pytest.raises(DomainError):
        PhysicalConstants(0.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("text,value,unit", [
    ("4.2um", 4.2e-6, "m"),
    ("19us", 1.9e-5, "s"),
    ("2pi*760kHz", 2 * math.pi * 760e3, "rad/s"),
    ("1.2 mW", 1.2e-3, "W"),
    ("250µW", 250e-6, "W"),
    ("729nm", 729e-9, "m"),
    ("3.5", 3.5, ""),
    ("1e3Hz", 1e3, "Hz"),
])
def test_parse_quantity(text, value, unit):
    q = parse_quantity(text)
    assert q.unit == unit
    assert q.value == pytest.approx(value, rel=1e-12)


def test_parse_2pi_value():
    assert parse_quantity("2pi*760kHz").value == pytest.approx(4.775e6, rel=1e-3)


@pytest.mark.parametrize("text,token", [
    ("4.2 furlongs", "furlongs"),
    ("abc", "abc"),
    ("2pi*4um", "2pi*"),
])
def test_parse_errors_name_token(text, token):
    with pytest.raises(QuantityParseError) as exc:
        parse_quantity(text)
    assert exc.value.token == token


def test_parse_expected_unit():
    with pytest.raises(QuantityParseError, match="missing unit"):
        parse_quantity("4.2", "m")
    with pytest.raises(QuantityParseError):
        parse_quantity("4.2us", "m")
    assert parse_quantity("4.2um", "m").value == pytest.approx(4.2e-6)


@given(st.floats(1e-10, 1e10), st.sampled_from(["m", "s", "W", "Hz", "rad/s"]))
def test_format_parse_round_trip(value, unit):
    q = Quantity(value, unit)
    back = parse_quantity(format_quantity(q))
    assert back.unit == unit
    assert back.value == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("lifetime,gamma", [
    (1.168, 0.1363),
    (1.2, 0.1326),
    (1 / (2 * math.pi), 1.0),
])
def test_gamma_from_lifetime(lifetime, gamma):
    assert gamma_from_lifetime(lifetime) == pytest.approx(gamma, rel=5e-4)


def test_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        gamma_from_lifetime(0.0)


def test_transition_wavenumber():
    t = TransitionSpec(729e-9, 0.1363)
    assert t.wavenumber == 2 * math.pi / 729e-9
    with pytest.raises(DomainError):
        TransitionSpec(-1.0, 0.1)


def test_records_validate():
    with pytest.raises(DomainError):
        TrapSpec(1e-25, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        ThermalState(-0.1, 0, 0)
    s = ThermalState(5, 5, 10.5)
    assert s.with_axial(1.1).nbar_z == 1.1
    trap = default_trap()
    assert trap.mass == pytest.approx(40 * CONSTANTS.atomic_mass_unit)
    assert trap.omega_z == pytest.approx(2 * math.pi * 760e3)
