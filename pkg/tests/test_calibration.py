import numpy as np
import pytest

from deltacert.calibration import calibrate, equilibrium_residual, recover_line_and_load
from deltacert.config import build_assembly, sg_variant
from deltacert.errors import InvalidInputError

from conftest import EQ1_ORACLE, EQ1_REFERENCE, EQ2_REFERENCE


def test_closed_form_from_reference_ports():
    Z, S, res = recover_line_and_load([EQ1_REFERENCE[3:], EQ2_REFERENCE[3:]])
    assert Z == pytest.approx(0.009985081871 + 0.100002597597j, abs=1e-9)
    assert S == pytest.approx(0.400050119494 + 0.099974595773j, abs=1e-9)
    assert res <= 1e-14


def test_closed_form_recovers_synthetic_data(rng):
    Z, S = 0.03 + 0.2j, 0.6 + 0.15j
    rows = []
    for _ in range(3):
        I = complex(*rng.uniform(0.2, 1.0, 2))
        V1 = (S + Z * abs(I) ** 2) / np.conj(I)
        rows.append([V1.real, V1.imag, I.real, I.imag])
    Zr, Sr, res = recover_line_and_load(rows)
    assert Zr == pytest.approx(Z, abs=1e-12) and Sr == pytest.approx(S, abs=1e-12) and res <= 1e-12


def test_closed_form_validation():
    with pytest.raises(InvalidInputError):
        recover_line_and_load([[1, 0, 0.4, -0.1]])


def _factory(cfg):
    return lambda var, r, x: build_assembly(cfg, var, r, x)


def test_bundled_line_reproduces_oracle(smsl_cfg):
    br = smsl_cfg.network.branches[0]
    res, z = equilibrium_residual(_factory(smsl_cfg), sg_variant(smsl_cfg), br["r"], br["x"], EQ1_ORACLE)
    assert res <= 1e-9


def test_synthetic_exact_recovery(smsl_cfg):
    var = sg_variant(smsl_cfg)
    fac = _factory(smsl_cfg)
    _, target = equilibrium_residual(fac, var, 0.04, 0.12, EQ1_ORACLE)
    out = calibrate(fac, target, [0.02, 0.04, 0.06], [0.10, 0.12, 0.14], variants=[var], refine=False)
    assert out.best.r == 0.04 and out.best.x == 0.12 and out.best.residual <= 1e-9 and out.reproduced


def test_small_lattice_reaches_reproduction_tolerance(smsl_cfg):
    out = calibrate(_factory(smsl_cfg), EQ1_REFERENCE, [0.01, 0.02, 0.03], [0.10, 0.11, 0.12],
                    variants=[sg_variant(smsl_cfg), ("delta", "q", 1)])
    assert out.best.variant == sg_variant(smsl_cfg)
    assert out.best.residual <= 5e-3 and out.reproduced
    assert [f.residual for f in out.fits] == sorted(f.residual for f in out.fits)
    s = out.summary()
    assert s["reproduced"] and len(s["variants"]) == 2


def test_calibrate_validation(smsl_cfg):
    with pytest.raises(InvalidInputError):
        calibrate(_factory(smsl_cfg), EQ1_REFERENCE, [0.0, 0.1], [0.1])
