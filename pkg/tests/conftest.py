import numpy as np
import pytest

from deltacert.config import bundled_config_path, build_assembly, build_certificates, load_config
from deltacert.dae import find_equilibrium

# Equilibria of the bundled two-bus system, computed by an independent phasor
# model (complex arithmetic + scipy fsolve) that shares no code with the package.
EQ1_ORACLE = np.array([0.153740760102, 0.0, 1.01320406171,
                       1.00148613672, 0.00148612441042, 0.402707969057, -0.118986140808])
EQ2_ORACLE = np.array([0.10340294202, 0.0, 0.492271014146,
                       0.363796318413, -0.177241831277, 0.649835139434, -1.08265016394])

# Reference equilibrium data for the same system (stacked x then u).
EQ1_REFERENCE = np.array([0.1527, 0, 1.0118, 1, 0, 0.4018, -0.1175])
EQ2_REFERENCE = np.array([0.1231, 0, 0.4757, 0.3443, -0.1701, 0.6664, -1.1001])


@pytest.fixture(scope="session")
def smsl_cfg():
    return load_config(bundled_config_path())


@pytest.fixture(scope="session")
def smsl(smsl_cfg):
    return build_assembly(smsl_cfg)


@pytest.fixture(scope="session")
def smsl_certs(smsl_cfg):
    return build_certificates(smsl_cfg)


@pytest.fixture(scope="session")
def eq1(smsl):
    return find_equilibrium(smsl, EQ1_REFERENCE[:3], EQ1_REFERENCE[3:])


@pytest.fixture(scope="session")
def eq2(smsl):
    return find_equilibrium(smsl, EQ2_REFERENCE[:3], EQ2_REFERENCE[3:])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Scalar lag in unit negative feedback u = -y: K(1) = -1, certified with p = 1.
LAG_CONFIG = """\
version: 1
name: lag
network:
  buses: 1
  coupling_matrix: [[1.0]]
devices:
  - bus: 0
    type: linear_lag
    params: {tau: 1.0, gain: 1.0}
certificates:
  - bus: 0
    P: [[0.5]]
    X: [[0, 0.5], [0.5, 0]]
    epsilon: 1e-4
    region: {lower: [-0.25, -1], upper: [0.5, 1], samples: [7, 5]}
weights: {mode: fixed, p: [1]}
engine: {dt: 0.01, t_end: 1.0, x0: [0.2], u0: [0.0]}
equilibria:
  seeds: [[0.3, 0.0]]
roa:
  region: {lower: [-1], upper: [1], samples: [9]}
  x0: [0.2]
sweep: {s_min: 0.9, s_max: 1.1, s_step: 0.05}
"""
