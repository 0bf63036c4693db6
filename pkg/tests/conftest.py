import numpy as np
import pytest

from zkfl.circuits import Circuit, CostCircuitParams, WeightCircuitParams, cs_verify
from zkfl.dpnoise import PrivacyParams, build_noise_table
from zkfl.linreg import Dataset, default_bounds, normalize
from zkfl.merklehash import HashAlg
from zkfl.pipeline import EncodedData, perturb, prepare_client


# filled by the acceptance suite, echoed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def run_gadget(body):
    """Build ``body`` once for constraints and once for values, then verify."""
    sys_cs = Circuit("t")
    body(sys_cs)
    wit_cs = Circuit("t", witness_mode=True)
    out = body(wit_cs)
    system, witness = sys_cs.system(), wit_cs.witness()
    return system, witness, wit_cs.publics(), out, wit_cs


def gadget_ok(body) -> bool:
    system, witness, pubs, _, _ = run_gadget(body)
    return cs_verify(system, witness, pubs).ok


def linear_data(rng, k, n, noise=0.3):
    X = rng.normal(size=(n, k))
    y = 0.5 + X @ rng.normal(size=k) + noise * rng.normal(size=n)
    return Dataset(X, y)


class Small:
    """k=2, n=30 honest client with a short noise table, ready for both circuits."""

    k, n, n_test, d, d_L = 2, 30, 6, 5, 100
    alg = HashAlg.POSEIDON_LITE
    block_hash = 123456789

    def __init__(self, seed=7):
        rng = np.random.default_rng(seed)
        self.raw = linear_data(rng, self.k, self.n)
        self.test = EncodedData.from_dataset(normalize(linear_data(rng, self.k, self.n_test)), self.d)
        self.table = build_noise_table(PrivacyParams.default(1.0, self.d_L, self.d))
        self.bounds = default_bounds(self.k, self.n, self.d)
        self.client = perturb(prepare_client(self.raw, self.d, self.alg), self.block_hash, self.table, self.alg)
        self.wp = WeightCircuitParams(self.k, self.n, self.d, self.d_L, self.alg, bounds=self.bounds)
        self.cp = CostCircuitParams(self.k, self.n, self.n_test, self.d, self.alg, eps_w=self.bounds.eps_w)
        self.rt_test = self.test.commit(self.alg).root


@pytest.fixture(scope="session")
def small():
    return Small()
